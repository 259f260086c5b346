#include "pdmd/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace pdmd {

namespace {

void check_shapes(const SampleBatch& a, const SampleBatch& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

// Posterior atom responsibilities and per-atom posterior means at (x_t, t),
// computed with log-sum-exp over atoms.
struct Posterior {
    SampleBatch x0_mean;  // E[x0 | x_t]
    SampleBatch score;    // grad_x log p(x_t)
};

Posterior posterior_moments(const ToyPrior& prior, const NoiseSchedule& sched, const SampleBatch& x_t, double t) {
    prior.validate();
    if (x_t.cols() != prior.dim()) throw std::invalid_argument("posterior: dimension mismatch");
    const Coeffs c = coeffs(sched, t);
    if (!(c.sigma > 0.0)) throw std::invalid_argument("posterior: sigma_t must be positive (t=0 rejected)");

    const int n = static_cast<int>(x_t.rows());
    const int k = prior.atom_count();
    const int d = prior.dim();

    Eigen::VectorXd var(k), logpref(k);
    for (int i = 0; i < k; ++i) {
        var(i) = c.sigma * c.sigma + c.alpha * c.alpha * prior.widths(i) * prior.widths(i);
        logpref(i) = std::log(prior.probs(i)) - 0.5 * d * std::log(var(i));
    }

    Posterior out;
    out.x0_mean.setZero(n, d);
    out.score.setZero(n, d);
    Eigen::VectorXd logq(k);
    for (int r = 0; r < n; ++r) {
        for (int i = 0; i < k; ++i) {
            const double sq = (x_t.row(r) - c.alpha * prior.atoms.row(i)).squaredNorm();
            logq(i) = logpref(i) - 0.5 * sq / var(i);
        }
        const double lmax = logq.maxCoeff();
        const Eigen::VectorXd q = (logq.array() - lmax).exp();
        const double z = q.sum();
        for (int i = 0; i < k; ++i) {
            const double ri = q(i) / z;
            const Eigen::RowVectorXd dev = x_t.row(r) - c.alpha * prior.atoms.row(i);
            const double shrink = c.alpha * prior.widths(i) * prior.widths(i) / var(i);
            out.x0_mean.row(r) += ri * (prior.atoms.row(i) + shrink * dev);
            out.score.row(r) -= ri / var(i) * dev;
        }
    }
    return out;
}

}  // namespace

ToyPrior ToyPrior::four_atoms() { return point_atoms({-1.0, 0.0, 1.0, 2.0}); }

ToyPrior ToyPrior::point_atoms(const std::vector<double>& locations) {
    ToyPrior p;
    const int k = static_cast<int>(locations.size());
    p.atoms.resize(k, 1);
    for (int i = 0; i < k; ++i) p.atoms(i, 0) = locations[i];
    p.probs = Eigen::VectorXd::Constant(k, 1.0 / k);
    p.widths = Eigen::VectorXd::Zero(k);
    return p;
}

double ToyPrior::min_atom_gap() const {
    double gap = std::numeric_limits<double>::infinity();
    for (int i = 0; i < atom_count(); ++i)
        for (int j = i + 1; j < atom_count(); ++j)
            gap = std::min(gap, (atoms.row(i) - atoms.row(j)).norm());
    return gap;
}

void ToyPrior::validate() const {
    if (atoms.rows() == 0) throw std::invalid_argument("prior: needs at least one atom");
    if (probs.size() != atoms.rows() || widths.size() != atoms.rows())
        throw std::invalid_argument("prior: probs/widths size mismatch");
    for (int i = 0; i < probs.size(); ++i) {
        if (!(probs(i) > 0.0)) throw std::invalid_argument("prior: probabilities must be positive");
        if (widths(i) < 0.0) throw std::invalid_argument("prior: widths must be >= 0");
    }
    if (std::abs(probs.sum() - 1.0) > 1e-12)
        throw std::invalid_argument("prior: probabilities must sum to 1");
}

SampleBatch ToyPrior::sample(int n, Rng& rng) const {
    validate();
    SampleBatch out(n, dim());
    Eigen::VectorXd cum(probs.size());
    double acc = 0.0;
    for (int i = 0; i < probs.size(); ++i) {
        acc += probs(i);
        cum(i) = acc;
    }
    for (int r = 0; r < n; ++r) {
        const double u = rng.uniform();
        int pick = 0;
        while (pick + 1 < cum.size() && u > cum(pick)) ++pick;
        out.row(r) = atoms.row(pick);
        if (widths(pick) > 0.0)
            for (int j = 0; j < dim(); ++j) out(r, j) += widths(pick) * rng.normal();
    }
    return out;
}

RegressionTarget flow_target(const SampleBatch& x0, const SampleBatch& eps) {
    check_shapes(x0, eps, "flow_target");
    return {eps - x0, 1.0, 1.0};
}

RegressionTarget x_pred_target(const SampleBatch& x0) { return {x0, 1.0, 1.0}; }

SubintervalCoeffs subinterval_coeffs(const NoiseSchedule& sched, double s, double t) {
    if (!(s < t)) throw std::invalid_argument("subinterval target: requires s < t");
    const Coeffs cs = coeffs(sched, s);
    const Coeffs ct = coeffs(sched, t);
    if (!(cs.alpha > 0.0)) throw std::invalid_argument("subinterval target: alpha_s must be positive");
    const BridgeCoeffs b = bridge_coeffs(sched, s, t);
    const double eps_coeff =
        (cs.alpha * cs.alpha * ct.sigma + ct.alpha * cs.sigma * cs.sigma) / (cs.alpha * cs.alpha * b.sigma_ts);
    return {eps_coeff, 1.0 / cs.alpha, b.sigma_ts};
}

RegressionTarget subinterval_flow_target(const NoiseSchedule& sched, const SampleBatch& xs,
                                         const SampleBatch& eps, double s, double t, double clamp_cap) {
    check_shapes(xs, eps, "subinterval_flow_target");
    const SubintervalCoeffs c = subinterval_coeffs(sched, s, t);
    RegressionTarget out;
    out.residual_scale = c.sigma_ts;
    out.target = c.sigma_ts * (c.eps_coeff * eps - c.xs_coeff * xs);
    out.weight = std::min(1.0 / (c.sigma_ts * c.sigma_ts), clamp_cap);
    return out;
}

RegressionTarget subinterval_x_pred_target(const NoiseSchedule& sched, const SampleBatch& xs,
                                           const SampleBatch& eps, double s, double t) {
    check_shapes(xs, eps, "subinterval_x_pred_target");
    if (!(s < t)) throw std::invalid_argument("subinterval target: requires s < t");
    const Coeffs cs = coeffs(sched, s);
    const Coeffs ct = coeffs(sched, t);
    if (!(cs.alpha > 0.0)) throw std::invalid_argument("subinterval target: alpha_s must be positive");
    const BridgeCoeffs b = bridge_coeffs(sched, s, t);
    const double eps_coeff = ct.alpha * cs.sigma * cs.sigma / (cs.alpha * cs.alpha * b.sigma_ts);
    return {(1.0 / cs.alpha) * xs - eps_coeff * eps, 1.0, 1.0};
}

BatchedTarget subinterval_flow_targets(const NoiseSchedule& sched, const SampleBatch& xs,
                                       const SampleBatch& eps, double s, const TimeVector& t,
                                       double clamp_cap) {
    check_shapes(xs, eps, "subinterval_flow_targets");
    if (t.size() != xs.rows()) throw std::invalid_argument("subinterval_flow_targets: t size mismatch");
    BatchedTarget out;
    out.target.resize(xs.rows(), xs.cols());
    out.weight.resize(xs.rows());
    out.residual_scale.resize(xs.rows());
    for (Eigen::Index i = 0; i < xs.rows(); ++i) {
        const SubintervalCoeffs c = subinterval_coeffs(sched, s, t(i));
        out.target.row(i) = c.sigma_ts * (c.eps_coeff * eps.row(i) - c.xs_coeff * xs.row(i));
        out.weight(i) = std::min(1.0 / (c.sigma_ts * c.sigma_ts), clamp_cap);
        out.residual_scale(i) = c.sigma_ts;
    }
    return out;
}

SampleBatch analytic_x0(const ToyPrior& prior, const NoiseSchedule& sched, const SampleBatch& x_t, double t) {
    return posterior_moments(prior, sched, x_t, t).x0_mean;
}

SampleBatch analytic_velocity(const ToyPrior& prior, const NoiseSchedule& sched, const SampleBatch& x_t, double t) {
    const Coeffs c = coeffs(sched, t);
    const SampleBatch x0 = analytic_x0(prior, sched, x_t, t);
    return (x_t - c.alpha * x0) / c.sigma - x0;
}

SampleBatch analytic_velocity(const ToyPrior& prior, const NoiseSchedule& sched, const SampleBatch& x_t, const TimeVector& t) {
    if (t.size() != x_t.rows()) throw std::invalid_argument("analytic_velocity: t size mismatch");
    SampleBatch out(x_t.rows(), x_t.cols());
    for (Eigen::Index i = 0; i < x_t.rows(); ++i)
        out.row(i) = analytic_velocity(prior, sched, x_t.row(i), t(i)).row(0);
    return out;
}

SampleBatch analytic_score(const ToyPrior& prior, const NoiseSchedule& sched, const SampleBatch& x_t, double t) {
    return posterior_moments(prior, sched, x_t, t).score;
}

SampleBatch analytic_score(const ToyPrior& prior, const NoiseSchedule& sched, const SampleBatch& x_t, const TimeVector& t) {
    if (t.size() != x_t.rows()) throw std::invalid_argument("analytic_score: t size mismatch");
    SampleBatch out(x_t.rows(), x_t.cols());
    for (Eigen::Index i = 0; i < x_t.rows(); ++i)
        out.row(i) = analytic_score(prior, sched, x_t.row(i), t(i)).row(0);
    return out;
}

SampleBatch esm_residual(const NoiseSchedule& sched, const SampleBatch& psi_value, const SampleBatch& x_t,
                         const SampleBatch& score_value, double t) {
    check_shapes(psi_value, x_t, "esm_residual");
    check_shapes(psi_value, score_value, "esm_residual");
    const Coeffs c = coeffs(sched, t);
    if (!(c.alpha > 0.0 && c.sigma > 0.0))
        throw std::invalid_argument("esm_residual: requires t in (0,1) with alpha_t > 0");
    return psi_value + x_t / c.alpha + (c.sigma + c.sigma * c.sigma / c.alpha) * score_value;
}

LossWeights dmd_weight(const NoiseSchedule& sched, double s, double t, double clamp_cap) {
    if (!(s <= t)) throw std::invalid_argument("dmd_weight: requires s <= t");
    const Coeffs ct = coeffs(sched, t);
    if (!(ct.alpha > 0.0)) throw std::invalid_argument("dmd_weight: alpha_t must be positive");
    if (!(ct.sigma > 0.0)) throw std::invalid_argument("dmd_weight: sigma_t must be positive");
    const BridgeCoeffs b = bridge_coeffs(sched, s, t);
    LossWeights out;
    out.lambda_t = 1.0 / (ct.sigma + ct.sigma * ct.sigma / ct.alpha);
    out.w = out.lambda_t * b.alpha_ts;
    out.clamp_weight = b.sigma_ts > 0.0 ? std::min(1.0 / (b.sigma_ts * b.sigma_ts), clamp_cap) : clamp_cap;
    return out;
}

}  // namespace pdmd
