#include "pdmd/sampler.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pdmd {

IntervalMode parse_interval_mode(const std::string& name) {
    if (name == "reverse_nested") return IntervalMode::reverse_nested;
    if (name == "disjoint") return IntervalMode::disjoint;
    throw std::invalid_argument("unknown interval mode: " + name);
}

std::string interval_mode_name(IntervalMode mode) {
    return mode == IntervalMode::reverse_nested ? "reverse_nested" : "disjoint";
}

PhasePlan PhasePlan::uniform(int steps, int n_phases, IntervalMode mode) {
    if (steps < 1) throw std::invalid_argument("plan: steps must be >= 1");
    if (n_phases < 1 || steps % n_phases != 0)
        throw std::invalid_argument("plan: phases must divide steps (or pass explicit phase sizes)");
    std::vector<double> grid(steps + 1);
    for (int i = 0; i <= steps; ++i) grid[i] = 1.0 - static_cast<double>(i) / steps;
    grid.front() = 1.0;
    grid.back() = 0.0;
    return from_grid(std::move(grid), std::vector<int>(n_phases, steps / n_phases), mode);
}

PhasePlan PhasePlan::from_grid(std::vector<double> grid, std::vector<int> phase_sizes, IntervalMode mode) {
    PhasePlan plan;
    plan.grid = std::move(grid);
    plan.interval_mode = mode;
    int step = 0;
    double prev_boundary = 1.0;
    for (std::size_t k = 0; k < phase_sizes.size(); ++k) {
        Phase ph;
        ph.index = static_cast<int>(k) + 1;
        ph.first_step = step;
        ph.last_step = step + phase_sizes[k] - 1;
        ph.expert_id = static_cast<int>(k);
        step += phase_sizes[k];
        if (step > static_cast<int>(plan.grid.size()) - 1)
            throw std::invalid_argument("plan: phase sizes exceed grid");
        ph.boundary = plan.grid[step];
        ph.noise_lo = ph.boundary;
        ph.noise_hi = mode == IntervalMode::reverse_nested ? 1.0 : prev_boundary;
        prev_boundary = ph.boundary;
        plan.phases.push_back(ph);
    }
    plan.validate();
    return plan;
}

void PhasePlan::validate() const {
    if (grid.size() < 2) throw std::invalid_argument("plan: grid needs at least two times");
    if (grid.front() != 1.0 || grid.back() != 0.0)
        throw std::invalid_argument("plan: grid must start at exactly 1 and end at exactly 0");
    for (std::size_t i = 0; i + 1 < grid.size(); ++i)
        if (!(grid[i] > grid[i + 1])) throw std::invalid_argument("plan: grid must be strictly decreasing");
    if (phases.empty()) throw std::invalid_argument("plan: needs at least one phase");
    int expect = 0;
    for (const auto& ph : phases) {
        if (ph.first_step != expect || ph.last_step < ph.first_step)
            throw std::invalid_argument("plan: phase step ranges must partition the steps in order");
        expect = ph.last_step + 1;
        if (ph.boundary != grid[ph.last_step + 1])
            throw std::invalid_argument("plan: phase boundary must equal the grid time after its last step");
        if (!(ph.noise_lo < ph.noise_hi)) throw std::invalid_argument("plan: empty noise interval");
    }
    if (expect != step_count()) throw std::invalid_argument("plan: phases must cover all steps");
}

const Phase& PhasePlan::phase_of_step(int step) const {
    for (const auto& ph : phases)
        if (step >= ph.first_step && step <= ph.last_step) return ph;
    throw std::out_of_range("plan: step outside any phase");
}

StepCoeffs scheduler_step_coeffs(const NoiseSchedule& sched, double t, double t_next, PredictionKind kind) {
    if (!(t > t_next)) throw std::invalid_argument("scheduler_step: requires t > t_next");
    if (kind == PredictionKind::velocity) {
        if (sched.kind != ScheduleKind::rectified_flow)
            throw std::invalid_argument("scheduler_step: velocity step is defined for rectified flow only");
        return {1.0, t_next - t};
    }
    // Sample prediction: xhat0 = prediction, eps_hat = (x - alpha_t xhat0) / sigma_t,
    // x_next = alpha_next xhat0 + sigma_next eps_hat.
    const Coeffs ct = coeffs(sched, t);
    const Coeffs cn = coeffs(sched, t_next);
    if (!(ct.sigma > 0.0)) throw std::invalid_argument("scheduler_step: sigma_t must be positive for sample kind");
    const double cx = cn.sigma / ct.sigma;
    return {cx, cn.alpha - cx * ct.alpha};
}

SampleBatch scheduler_step(const NoiseSchedule& sched, const SampleBatch& x_t, const SampleBatch& prediction,
                           double t, double t_next, PredictionKind kind) {
    if (x_t.rows() != prediction.rows() || x_t.cols() != prediction.cols())
        throw std::invalid_argument("scheduler_step: shape mismatch");
    const StepCoeffs c = scheduler_step_coeffs(sched, t, t_next, kind);
    return c.c_x * x_t + c.c_pred * prediction;
}

void TrajectoryRecorder::record(double t, const SampleBatch& x) {
    if (!times_.empty()) {
        if (!(t < times_.back())) throw std::invalid_argument("trajectory: times must be strictly decreasing");
        if (x.rows() != states_.back().rows() || x.cols() != states_.back().cols())
            throw std::invalid_argument("trajectory: state shape changed");
    }
    times_.push_back(t);
    states_.push_back(x);
}

void TrajectoryRecorder::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open trajectory csv: " + path.string());
    const int dim = states_.empty() ? 1 : static_cast<int>(states_[0].cols());
    out << "sample_id,t,x0";
    if (dim > 1) out << ",x1";
    out << "\n";
    char buf[64];
    const int n = states_.empty() ? 0 : static_cast<int>(states_[0].rows());
    for (int s = 0; s < n; ++s) {
        for (std::size_t i = 0; i < times_.size(); ++i) {
            out << s;
            std::snprintf(buf, sizeof(buf), ",%.12g", times_[i]);
            out << buf;
            for (int j = 0; j < dim; ++j) {
                std::snprintf(buf, sizeof(buf), ",%.12g", states_[i](s, j));
                out << buf;
            }
            out << "\n";
        }
    }
}

Trajectory load_trajectory_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open trajectory csv: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty trajectory csv: " + path.string());
    const int dim = line == "sample_id,t,x0" ? 1 : (line == "sample_id,t,x0,x1" ? 2 : 0);
    if (dim == 0) throw std::runtime_error("unrecognized trajectory header: " + line);

    struct Row {
        int id;
        double t;
        double x[2];
    };
    std::vector<Row> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        Row r{};
        std::istringstream ss(line);
        std::string field;
        std::getline(ss, field, ',');
        r.id = std::stoi(field);
        std::getline(ss, field, ',');
        r.t = std::stod(field);
        for (int j = 0; j < dim; ++j) {
            std::getline(ss, field, ',');
            r.x[j] = std::stod(field);
        }
        rows.push_back(r);
    }
    if (rows.empty()) throw std::runtime_error("trajectory csv has no rows: " + path.string());

    int n = 0;
    for (const auto& r : rows) n = std::max(n, r.id + 1);
    std::vector<double> times;
    for (const auto& r : rows) {
        if (r.id != 0) break;
        times.push_back(r.t);
    }
    const std::size_t steps = times.size();
    if (rows.size() != steps * static_cast<std::size_t>(n))
        throw std::runtime_error("trajectory csv is ragged: " + path.string());

    Trajectory traj;
    traj.dim = dim;
    traj.times = times;
    traj.states.assign(steps, SampleBatch(n, dim));
    for (std::size_t idx = 0; idx < rows.size(); ++idx) {
        const auto& r = rows[idx];
        const std::size_t k = idx % steps;
        if (std::abs(times[k] - r.t) > 1e-9)
            throw std::runtime_error("trajectory csv rows out of order: " + path.string());
        for (int j = 0; j < dim; ++j) traj.states[k](r.id, j) = r.x[j];
    }
    return traj;
}

SampleBatch run_pipeline(const std::vector<const PredictionModel*>& experts, const PhasePlan& plan,
                         const NoiseSchedule& sched, const SampleBatch& eps,
                         std::optional<int> stop_at_step, TrajectoryRecorder* recorder) {
    plan.validate();
    const int stop = stop_at_step.value_or(plan.step_count());
    if (stop < 0 || stop > plan.step_count()) throw std::invalid_argument("pipeline: stop step out of range");
    SampleBatch x = eps;
    if (recorder) recorder->record(plan.grid[0], x);
    for (int i = 0; i < stop; ++i) {
        const Phase& ph = plan.phase_of_step(i);
        if (ph.expert_id < 0 || ph.expert_id >= static_cast<int>(experts.size()) || !experts[ph.expert_id])
            throw std::invalid_argument("pipeline: missing expert for phase " + std::to_string(ph.index));
        const PredictionModel& model = *experts[ph.expert_id];
        const double t = plan.grid[i];
        const double t_next = plan.grid[i + 1];
        const SampleBatch pred = model.predict(x, TimeVector::Constant(x.rows(), t));
        x = scheduler_step(sched, x, pred, t, t_next, model.kind());
        if (recorder) recorder->record(t_next, x);
    }
    return x;
}

SampleBatch integrate_path(const PredictionModel& model, const NoiseSchedule& sched, const SampleBatch& start,
                           const std::vector<double>& times, TrajectoryRecorder* recorder) {
    if (times.size() < 2) throw std::invalid_argument("integrate_path: needs at least two times");
    SampleBatch x = start;
    if (recorder) recorder->record(times[0], x);
    for (std::size_t i = 0; i + 1 < times.size(); ++i) {
        const SampleBatch pred = model.predict(x, TimeVector::Constant(x.rows(), times[i]));
        x = scheduler_step(sched, x, pred, times[i], times[i + 1], model.kind());
        if (recorder) recorder->record(times[i + 1], x);
    }
    return x;
}

int sgts_truncate(const PhasePlan& plan, Rng& rng) {
    const int n = plan.step_count();
    if (n < 1) throw std::invalid_argument("sgts_truncate: empty plan");
    if (n == 1) return 1;
    return rng.uniform_int(1, n);
}

}  // namespace pdmd
