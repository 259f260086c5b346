#include "pdmd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pdmd {

namespace {

std::vector<double> sorted(const Eigen::VectorXd& v) {
    std::vector<double> out(v.data(), v.data() + v.size());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

double wasserstein1(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() == 0 || b.size() == 0) throw std::invalid_argument("wasserstein1: empty input");
    const std::vector<double> sa = sorted(a);
    const std::vector<double> sb = sorted(b);
    if (sa.size() == sb.size()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < sa.size(); ++i) acc += std::abs(sa[i] - sb[i]);
        return acc / static_cast<double>(sa.size());
    }
    const std::size_t k = std::max(sa.size(), sb.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const double q = (static_cast<double>(i) + 0.5) / static_cast<double>(k);
        const double qa = sa[std::min(sa.size() - 1, static_cast<std::size_t>(q * sa.size()))];
        const double qb = sb[std::min(sb.size() - 1, static_cast<std::size_t>(q * sb.size()))];
        acc += std::abs(qa - qb);
    }
    return acc / static_cast<double>(k);
}

double sliced_wasserstein1(const SampleBatch& a, const SampleBatch& b, int n_projections, std::uint64_t seed) {
    if (a.cols() != b.cols()) throw std::invalid_argument("sliced_wasserstein1: dimension mismatch");
    Rng rng(seed);
    double acc = 0.0;
    for (int p = 0; p < n_projections; ++p) {
        Eigen::VectorXd dir(a.cols());
        for (Eigen::Index j = 0; j < dir.size(); ++j) dir(j) = rng.normal();
        dir.normalize();
        acc += wasserstein1(a * dir, b * dir);
    }
    return acc / n_projections;
}

double batch_w1(const SampleBatch& a, const SampleBatch& b) {
    if (a.cols() != b.cols()) throw std::invalid_argument("batch_w1: dimension mismatch");
    if (a.cols() == 1) return wasserstein1(a.col(0), b.col(0));
    return sliced_wasserstein1(a, b);
}

Eigen::VectorXd mode_coverage(const SampleBatch& samples, const ToyPrior& prior, double radius) {
    prior.validate();
    if (samples.rows() == 0) throw std::invalid_argument("mode_coverage: empty input");
    if (samples.cols() != prior.dim()) throw std::invalid_argument("mode_coverage: dimension mismatch");
    if (!(radius > 0.0)) throw std::invalid_argument("mode_coverage: radius must be positive");
    if (!(radius < 0.5 * prior.min_atom_gap()))
        throw std::invalid_argument("mode_coverage: assignment regions overlap (radius too large)");

    const int k = prior.atom_count();
    Eigen::VectorXd masses = Eigen::VectorXd::Zero(k + 1);
    for (Eigen::Index r = 0; r < samples.rows(); ++r) {
        int hit = k;  // unassigned bucket
        for (int i = 0; i < k; ++i) {
            if ((samples.row(r) - prior.atoms.row(i)).norm() <= radius) {
                hit = i;
                break;
            }
        }
        masses(hit) += 1.0;
    }
    return masses / static_cast<double>(samples.rows());
}

double mean_pairwise_distance(const SampleBatch& samples, int subsample_cap) {
    const Eigen::Index n = samples.rows();
    if (n < 2) return 0.0;
    if (samples.cols() == 1) {
        std::vector<double> s = sorted(samples.col(0));
        double acc = 0.0;
        for (std::size_t kk = 0; kk < s.size(); ++kk)
            acc += s[kk] * (2.0 * static_cast<double>(kk) - static_cast<double>(s.size()) + 1.0);
        return acc / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
    }
    const Eigen::Index m = std::min<Eigen::Index>(n, subsample_cap);
    double acc = 0.0;
    std::int64_t pairs = 0;
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = i + 1; j < m; ++j) {
            acc += (samples.row(i) - samples.row(j)).norm();
            ++pairs;
        }
    return acc / static_cast<double>(pairs);
}

DistributionReport evaluate_distribution(const SampleBatch& samples, const SampleBatch& reference,
                                         const ToyPrior& prior, double radius) {
    DistributionReport rep;
    rep.w1 = batch_w1(samples, reference);
    rep.mode_masses = mode_coverage(samples, prior, radius);
    rep.diversity = mean_pairwise_distance(samples);
    rep.n_samples = static_cast<int>(samples.rows());
    return rep;
}

double trajectory_deviation(const Trajectory& a, const Trajectory& b, double t_lo, double t_hi) {
    if (a.dim != b.dim) throw std::invalid_argument("trajectory_deviation: dimension mismatch");
    if (a.sample_count() != b.sample_count())
        throw std::invalid_argument("trajectory_deviation: sample count mismatch");
    constexpr double kTimeTol = 1e-9;
    double worst = -1.0;
    std::size_t jb = 0;
    for (std::size_t ia = 0; ia < a.times.size(); ++ia) {
        const double t = a.times[ia];
        if (t > t_hi + kTimeTol || t < t_lo - kTimeTol) continue;
        while (jb < b.times.size() && b.times[jb] > t + kTimeTol) ++jb;
        if (jb >= b.times.size() || std::abs(b.times[jb] - t) > kTimeTol)
            throw std::invalid_argument("trajectory_deviation: time grids do not match inside the window");
        if (a.states[ia].rows() != b.states[jb].rows() || a.states[ia].cols() != b.states[jb].cols())
            throw std::invalid_argument("trajectory_deviation: state shape mismatch");
        const double gap = (a.states[ia] - b.states[jb]).cwiseAbs().mean();
        worst = std::max(worst, gap);
    }
    if (worst < 0.0) throw std::invalid_argument("trajectory_deviation: no shared times inside the window");
    return worst;
}

}  // namespace pdmd
