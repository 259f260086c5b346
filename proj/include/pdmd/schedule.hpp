#pragma once

#include <string>

#include "pdmd/rng.hpp"

namespace pdmd {

enum class ScheduleKind { rectified_flow, variance_preserving_cosine };

// Continuous-time Gaussian diffusion schedule: x_t = alpha_t * x0 + sigma_t * eps,
// with SNR(t) = alpha_t^2 / sigma_t^2 strictly decreasing on (0, 1).
struct NoiseSchedule {
    ScheduleKind kind = ScheduleKind::rectified_flow;

    static NoiseSchedule rectified_flow() { return {ScheduleKind::rectified_flow}; }
    static NoiseSchedule vp_cosine() { return {ScheduleKind::variance_preserving_cosine}; }
    static NoiseSchedule parse(const std::string& name);
    std::string name() const;
};

struct Coeffs {
    double alpha;
    double sigma;
};

// Gaussian bridge from time s to time t (s <= t):
//   p(x_t | x_s) = N(alpha_ts * x_s, sigma_ts^2 I)
// with alpha_ts = alpha_t / alpha_s and sigma_ts^2 = sigma_t^2 - alpha_ts^2 sigma_s^2.
struct BridgeCoeffs {
    double alpha_ts;
    double sigma_ts;
    double s;
    double t;
};

Coeffs coeffs(const NoiseSchedule& sched, double t);
double snr(const NoiseSchedule& sched, double t);
BridgeCoeffs bridge_coeffs(const NoiseSchedule& sched, double s, double t);

SampleBatch diffuse(const NoiseSchedule& sched, const SampleBatch& x0, const SampleBatch& eps, double t);
SampleBatch diffuse(const NoiseSchedule& sched, const SampleBatch& x0, const SampleBatch& eps, const TimeVector& t);
SampleBatch diffuse_from(const NoiseSchedule& sched, const SampleBatch& xs, const SampleBatch& eps, double s, double t);
SampleBatch diffuse_from(const NoiseSchedule& sched, const SampleBatch& xs, const SampleBatch& eps, double s, const TimeVector& t);

}  // namespace pdmd
