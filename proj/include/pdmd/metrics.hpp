#pragma once

#include "pdmd/objectives.hpp"
#include "pdmd/sampler.hpp"

namespace pdmd {

// Exact 1-D Wasserstein-1 via sorted samples. Unequal sizes are handled by
// evaluating both empirical quantile functions on a common midpoint grid.
double wasserstein1(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Sliced W1 for multivariate batches: average of wasserstein1 over seed-fixed
// random projections.
double sliced_wasserstein1(const SampleBatch& a, const SampleBatch& b, int n_projections = 64,
                           std::uint64_t seed = 0x51CED001u);

// Dispatches on dimension: exact for 1-D, sliced otherwise.
double batch_w1(const SampleBatch& a, const SampleBatch& b);

// Fraction of samples within `radius` of each atom, plus a trailing
// "unassigned" bucket; entries sum to 1. Assignment regions must not overlap.
Eigen::VectorXd mode_coverage(const SampleBatch& samples, const ToyPrior& prior, double radius);

// Mean pairwise distance; exact O(n log n) in 1-D, subsampled otherwise.
double mean_pairwise_distance(const SampleBatch& samples, int subsample_cap = 2000);

struct DistributionReport {
    double w1 = 0.0;
    Eigen::VectorXd mode_masses;  // atoms + unassigned
    double diversity = 0.0;
    int n_samples = 0;
};

DistributionReport evaluate_distribution(const SampleBatch& samples, const SampleBatch& reference,
                                         const ToyPrior& prior, double radius);

// Max over window times of the mean |x_a - x_b| across matched samples.
// Both trajectories must share the time grid inside [t_lo, t_hi].
double trajectory_deviation(const Trajectory& a, const Trajectory& b, double t_lo, double t_hi);

}  // namespace pdmd
