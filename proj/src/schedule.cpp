#include "pdmd/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace pdmd {

namespace {

constexpr double kRadicandTol = -1e-12;  // below this the schedule itself is broken

void check_time(double t, const char* what) {
    if (!(t >= 0.0 && t <= 1.0))
        throw std::invalid_argument(std::string(what) + ": time out of [0,1]: " + std::to_string(t));
}

void check_shapes(const SampleBatch& a, const SampleBatch& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

}  // namespace

NoiseSchedule NoiseSchedule::parse(const std::string& name) {
    if (name == "rectified_flow") return rectified_flow();
    if (name == "vp_cosine" || name == "variance_preserving_cosine") return vp_cosine();
    throw std::invalid_argument("unknown schedule kind: " + name);
}

std::string NoiseSchedule::name() const {
    return kind == ScheduleKind::rectified_flow ? "rectified_flow" : "vp_cosine";
}

Coeffs coeffs(const NoiseSchedule& sched, double t) {
    check_time(t, "coeffs");
    switch (sched.kind) {
        case ScheduleKind::rectified_flow:
            return {1.0 - t, t};
        case ScheduleKind::variance_preserving_cosine:
            return {std::cos(0.5 * M_PI * t), std::sin(0.5 * M_PI * t)};
    }
    throw std::logic_error("unreachable schedule kind");
}

double snr(const NoiseSchedule& sched, double t) {
    const Coeffs c = coeffs(sched, t);
    return (c.alpha * c.alpha) / (c.sigma * c.sigma);
}

BridgeCoeffs bridge_coeffs(const NoiseSchedule& sched, double s, double t) {
    check_time(s, "bridge_coeffs");
    check_time(t, "bridge_coeffs");
    if (s > t) throw std::invalid_argument("bridge_coeffs: s > t");
    const Coeffs cs = coeffs(sched, s);
    const Coeffs ct = coeffs(sched, t);
    if (!(cs.alpha > 0.0)) throw std::invalid_argument("bridge_coeffs: alpha_s must be positive");
    const double alpha_ts = ct.alpha / cs.alpha;
    double radicand = ct.sigma * ct.sigma - alpha_ts * alpha_ts * cs.sigma * cs.sigma;
    if (radicand < kRadicandTol)
        throw std::runtime_error("bridge_coeffs: negative bridge variance " + std::to_string(radicand));
    if (radicand < 0.0) radicand = 0.0;
    return {alpha_ts, std::sqrt(radicand), s, t};
}

SampleBatch diffuse(const NoiseSchedule& sched, const SampleBatch& x0, const SampleBatch& eps, double t) {
    check_shapes(x0, eps, "diffuse");
    const Coeffs c = coeffs(sched, t);
    return c.alpha * x0 + c.sigma * eps;
}

SampleBatch diffuse(const NoiseSchedule& sched, const SampleBatch& x0, const SampleBatch& eps, const TimeVector& t) {
    check_shapes(x0, eps, "diffuse");
    if (t.size() != x0.rows()) throw std::invalid_argument("diffuse: t sizemismatch");
    SampleBatch out(x0.rows(), x0.cols());
    for (Eigen::Index i = 0; i < x0.rows(); ++i) {
        const Coeffs c = coeffs(sched, t(i));
        out.row(i) = c.alpha * x0.row(i) + c.sigma * eps.row(i);
    }
    return out;
}

SampleBatch diffuse_from(const NoiseSchedule& sched, const SampleBatch& xs, const SampleBatch& eps, double s, double t) {
    check_shapes(xs, eps, "diffuse_from");
    const BridgeCoeffs b = bridge_coeffs(sched, s, t);
    return b.alpha_ts * xs + b.sigma_ts * eps;
}

SampleBatch diffuse_from(const NoiseSchedule& sched, const SampleBatch& xs, const SampleBatch& eps, double s, const TimeVector& t) {
    check_shapes(xs, eps, "diffuse_from");
    if (t.size() != xs.rows()) throw std::invalid_argument("diffuse_from: t size mismatch");
    SampleBatch out(xs.rows(), xs.cols());
    for (Eigen::Index i = 0; i < xs.rows(); ++i) {
        const BridgeCoeffs b = bridge_coeffs(sched, s, t(i));
        out.row(i) = b.alpha_ts * xs.row(i) + b.sigma_ts * eps.row(i);
    }
    return out;
}

}  // namespace pdmd
