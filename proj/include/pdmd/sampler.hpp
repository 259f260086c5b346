#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "pdmd/net.hpp"
#include "pdmd/objectives.hpp"
#include "pdmd/schedule.hpp"

namespace pdmd {

// Anything that can drive a sampling step: a trained net or an analytic oracle.
class PredictionModel {
public:
    virtual ~PredictionModel() = default;
    virtual PredictionKind kind() const = 0;
    virtual SampleBatch predict(const SampleBatch& x, const TimeVector& t) const = 0;

    SampleBatch predict_at(const SampleBatch& x, double t) const {
        return predict(x, TimeVector::Constant(x.rows(), t));
    }
};

class NetModel final : public PredictionModel {
public:
    explicit NetModel(const TimeConditionedNet& net) : net_(&net) {}
    PredictionKind kind() const override { return net_->prediction_kind(); }
    SampleBatch predict(const SampleBatch& x, const TimeVector& t) const override { return net_->forward(x, t); }
    const TimeConditionedNet& net() const { return *net_; }

private:
    const TimeConditionedNet* net_;
};

class AnalyticVelocityModel final : public PredictionModel {
public:
    AnalyticVelocityModel(ToyPrior prior, NoiseSchedule sched) : prior_(std::move(prior)), sched_(sched) {}
    PredictionKind kind() const override { return PredictionKind::velocity; }
    SampleBatch predict(const SampleBatch& x, const TimeVector& t) const override {
        return analytic_velocity(prior_, sched_, x, t);
    }
    const ToyPrior& prior() const { return prior_; }

private:
    ToyPrior prior_;
    NoiseSchedule sched_;
};

enum class IntervalMode { reverse_nested, disjoint };

IntervalMode parse_interval_mode(const std::string& name);
std::string interval_mode_name(IntervalMode mode);

struct Phase {
    int index = 1;       // 1-based
    int first_step = 0;  // inclusive
    int last_step = 0;   // inclusive; grid[last_step + 1] is this phase's boundary
    int expert_id = 0;
    double boundary = 0.0;
    double noise_lo = 0.0;
    double noise_hi = 1.0;
};

// Timestep grid t_0 = 1 > t_1 > ... > t_N = 0 partitioned into phases. In
// reverse_nested mode phase k injects noise on (t_k, 1); in disjoint mode on
// (t_k, t_{k-1}) where t_k is the phase boundary.
struct PhasePlan {
    std::vector<double> grid;
    std::vector<Phase> phases;
    IntervalMode interval_mode = IntervalMode::reverse_nested;

    static PhasePlan uniform(int steps, int n_phases, IntervalMode mode = IntervalMode::reverse_nested);
    static PhasePlan from_grid(std::vector<double> grid, std::vector<int> phase_sizes,
                               IntervalMode mode = IntervalMode::reverse_nested);

    int step_count() const { return static_cast<int>(grid.size()) - 1; }
    int phase_count() const { return static_cast<int>(phases.size()); }
    const Phase& phase_of_step(int step) const;
    void validate() const;
};

// One scheduler application S(prediction, x_t, t, t_next). The velocity form is
// the Euler step of the rectified flow ODE; the sample form reprojects through
// the predicted x0.
SampleBatch scheduler_step(const NoiseSchedule& sched, const SampleBatch& x_t, const SampleBatch& prediction,
                           double t, double t_next, PredictionKind kind);

// x_next = c_x * x + c_pred * prediction; shared by forward sampling and the
// training-time backward pass.
struct StepCoeffs {
    double c_x;
    double c_pred;
};
StepCoeffs scheduler_step_coeffs(const NoiseSchedule& sched, double t, double t_next, PredictionKind kind);

// Per-sample (t, x) histories with strictly decreasing times.
class TrajectoryRecorder {
public:
    void record(double t, const SampleBatch& x);
    const std::vector<double>& times() const { return times_; }
    const std::vector<SampleBatch>& states() const { return states_; }
    void write_csv(const std::filesystem::path& path) const;

private:
    std::vector<double> times_;
    std::vector<SampleBatch> states_;
};

struct Trajectory {
    std::vector<double> times;        // descending
    std::vector<SampleBatch> states;  // one batch per time
    int dim = 1;
    int sample_count() const { return states.empty() ? 0 : static_cast<int>(states[0].rows()); }
};

Trajectory load_trajectory_csv(const std::filesystem::path& path);

// Runs steps 0 .. stop_at_step-1 (default: all), dispatching each step to its
// phase's expert. Experts are indexed by Phase::expert_id.
SampleBatch run_pipeline(const std::vector<const PredictionModel*>& experts, const PhasePlan& plan,
                         const NoiseSchedule& sched, const SampleBatch& eps,
                         std::optional<int> stop_at_step = std::nullopt,
                         TrajectoryRecorder* recorder = nullptr);

// Integrates a single model over an arbitrary strictly-decreasing time grid.
SampleBatch integrate_path(const PredictionModel& model, const NoiseSchedule& sched, const SampleBatch& start,
                           const std::vector<double>& times, TrajectoryRecorder* recorder = nullptr);

// Draws the truncation index j uniformly from {1, ..., N}; the caller retargets
// t_j to 0 and executes steps 0 .. j-1 with gradients recorded on step j-1 only.
int sgts_truncate(const PhasePlan& plan, Rng& rng);

}  // namespace pdmd
