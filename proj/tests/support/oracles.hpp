#pragma once

// Test-only oracles, kept independent of the library's analytic paths: plain
// long-double enumeration for posterior quantities and an exact conjugate
// sampler for bridge states consistent with a fixed x_t.

#include <cmath>
#include <utility>
#include <vector>

#include "pdmd/objectives.hpp"
#include "pdmd/schedule.hpp"

namespace oracle {

// Posterior mean and velocity for a 1-D point-atom prior by direct enumeration.
inline long double posterior_x0_1d(const std::vector<double>& atoms, const std::vector<double>& probs,
                                   double alpha, double sigma, double x) {
    long double num = 0.0L, den = 0.0L;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        const long double dev = x - static_cast<long double>(alpha) * atoms[i];
        const long double w = static_cast<long double>(probs[i]) *
                              std::exp(-dev * dev / (2.0L * sigma * sigma));
        num += w * atoms[i];
        den += w;
    }
    return num / den;
}

inline double velocity_1d(const std::vector<double>& atoms, const std::vector<double>& probs,
                          double alpha, double sigma, double x) {
    const long double x0 = posterior_x0_1d(atoms, probs, alpha, sigma, x);
    return static_cast<double>((x - alpha * x0) / sigma - x0);
}

// Draws (x_s, eps) pairs from p(x_s, eps | x_t) for a 1-D point-atom prior:
// the atom index follows the time-t posterior, x_s | atom, x_t is Gaussian with
// conjugate moments, and eps is then determined by x_t = a_ts x_s + s_ts eps.
class BridgeConditionalSampler {
public:
    BridgeConditionalSampler(const pdmd::ToyPrior& prior, const pdmd::NoiseSchedule& sched, double s, double t,
                             double x_t)
        : x_t_(x_t) {
        for (int i = 0; i < prior.widths.size(); ++i)
            if (prior.widths(i) != 0.0) throw std::invalid_argument("oracle: point atoms only");
        const pdmd::Coeffs cs = pdmd::coeffs(sched, s);
        const pdmd::Coeffs ct = pdmd::coeffs(sched, t);
        const pdmd::BridgeCoeffs b = pdmd::bridge_coeffs(sched, s, t);
        alpha_ts_ = b.alpha_ts;
        sigma_ts_ = b.sigma_ts;
        var_ = cs.sigma * cs.sigma * b.sigma_ts * b.sigma_ts / (ct.sigma * ct.sigma);

        const int k = prior.atom_count();
        std::vector<long double> w(k);
        long double z = 0.0L;
        means_.resize(k);
        cum_.resize(k);
        for (int i = 0; i < k; ++i) {
            const long double dev = x_t - static_cast<long double>(ct.alpha) * prior.atoms(i, 0);
            w[i] = static_cast<long double>(prior.probs(i)) *
                   std::exp(-dev * dev / (2.0L * ct.sigma * ct.sigma));
            z += w[i];
            means_[i] = var_ * (cs.alpha * prior.atoms(i, 0) / (cs.sigma * cs.sigma) +
                                alpha_ts_ * x_t / (sigma_ts_ * sigma_ts_));
        }
        long double acc = 0.0L;
        for (int i = 0; i < k; ++i) {
            acc += w[i] / z;
            cum_[i] = static_cast<double>(acc);
        }
    }

    std::pair<double, double> draw(pdmd::Rng& rng) const {
        const double u = rng.uniform();
        std::size_t pick = 0;
        while (pick + 1 < cum_.size() && u > cum_[pick]) ++pick;
        const double x_s = means_[pick] + std::sqrt(var_) * rng.normal();
        const double eps = (x_t_ - alpha_ts_ * x_s) / sigma_ts_;
        return {x_s, eps};
    }

private:
    double x_t_;
    double alpha_ts_, sigma_ts_, var_;
    std::vector<double> means_;
    std::vector<double> cum_;
};

struct MeanStats {
    double mean = 0.0;
    double stderr_ = 0.0;
};

inline MeanStats mean_and_se(const std::vector<double>& xs) {
    const double n = static_cast<double>(xs.size());
    double mu = 0.0;
    for (const double x : xs) mu += x;
    mu /= n;
    double var = 0.0;
    for (const double x : xs) var += (x - mu) * (x - mu);
    var /= (n - 1.0);
    return {mu, std::sqrt(var / n)};
}

}  // namespace oracle
