#pragma once

#include "pdmd/rng.hpp"
#include "pdmd/schedule.hpp"

namespace pdmd {

// Finite mixture ground truth: point atoms or Gaussian blobs with closed-form
// posterior moments, used as analytic teacher and as the evaluation reference.
struct ToyPrior {
    SampleBatch atoms;       // n_atoms x dim
    Eigen::VectorXd probs;   // positive, sums to 1
    Eigen::VectorXd widths;  // per-atom std, 0 for point atoms

    static ToyPrior four_atoms();  // {-1, 0, 1, 2}, equal mass, 1-D points
    static ToyPrior point_atoms(const std::vector<double>& locations);

    int dim() const { return static_cast<int>(atoms.cols()); }
    int atom_count() const { return static_cast<int>(atoms.rows()); }
    double min_atom_gap() const;
    void validate() const;

    SampleBatch sample(int n, Rng& rng) const;
};

// A single regression problem: loss = weight * || residual_scale * psi(x_t) - target ||^2.
// residual_scale is sigma_ts for the clamped subinterval form and 1 otherwise;
// target is stored already scaled.
struct RegressionTarget {
    SampleBatch target;
    double weight = 1.0;
    double residual_scale = 1.0;
};

// Per-sample variant for batches with per-sample noise times.
struct BatchedTarget {
    SampleBatch target;
    Eigen::VectorXd weight;
    Eigen::VectorXd residual_scale;
};

struct LossWeights {
    double lambda_t;      // 1 / (sigma_t + sigma_t^2 / alpha_t)
    double w;             // lambda_t * alpha_ts
    double clamp_weight;  // min(1 / sigma_ts^2, cap)
};

RegressionTarget flow_target(const SampleBatch& x0, const SampleBatch& eps);
RegressionTarget x_pred_target(const SampleBatch& x0);

RegressionTarget subinterval_flow_target(const NoiseSchedule& sched, const SampleBatch& xs,
                                         const SampleBatch& eps, double s, double t,
                                         double clamp_cap = 1e4);
RegressionTarget subinterval_x_pred_target(const NoiseSchedule& sched, const SampleBatch& xs,
                                           const SampleBatch& eps, double s, double t);

BatchedTarget subinterval_flow_targets(const NoiseSchedule& sched, const SampleBatch& xs,
                                       const SampleBatch& eps, double s, const TimeVector& t,
                                       double clamp_cap = 1e4);

// Unclamped per-target coefficients: target = eps_coeff * eps - xs_coeff * xs.
struct SubintervalCoeffs {
    double eps_coeff;
    double xs_coeff;
    double sigma_ts;
};
SubintervalCoeffs subinterval_coeffs(const NoiseSchedule& sched, double s, double t);

SampleBatch analytic_x0(const ToyPrior& prior, const NoiseSchedule& sched, const SampleBatch& x_t, double t);
SampleBatch analytic_velocity(const ToyPrior& prior, const NoiseSchedule& sched, const SampleBatch& x_t, double t);
SampleBatch analytic_velocity(const ToyPrior& prior, const NoiseSchedule& sched, const SampleBatch& x_t, const TimeVector& t);
SampleBatch analytic_score(const ToyPrior& prior, const NoiseSchedule& sched, const SampleBatch& x_t, double t);
SampleBatch analytic_score(const ToyPrior& prior, const NoiseSchedule& sched, const SampleBatch& x_t, const TimeVector& t);

// psi + x_t / alpha_t + (sigma_t + sigma_t^2 / alpha_t) * score; zero iff psi is
// the optimal velocity for the distribution whose score was supplied.
SampleBatch esm_residual(const NoiseSchedule& sched, const SampleBatch& psi_value, const SampleBatch& x_t,
                         const SampleBatch& score_value, double t);

LossWeights dmd_weight(const NoiseSchedule& sched, double s, double t, double clamp_cap = 1e4);

}  // namespace pdmd
