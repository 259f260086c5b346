#pragma once

#include <filesystem>
#include <memory>
#include <optional>

#include "pdmd/metrics.hpp"
#include "pdmd/net.hpp"
#include "pdmd/objectives.hpp"
#include "pdmd/sampler.hpp"

namespace pdmd {

enum class Method { dmd, dmd_sgts, phased, phased_sgts };
enum class TeacherKind { analytic, learned };
enum class GradNorm { none, per_sample_mean_abs };

Method parse_method(const std::string& name);
std::string method_name(Method m);

struct TrainerConfig {
    Method method = Method::phased;
    PhasePlan plan;
    int fake_updates_per_generator_update = 5;
    int batch = 128;
    double lr_fake = 1e-3;
    double lr_gen = 1e-4;
    int generator_updates_per_phase = 400;
    TeacherKind teacher_kind = TeacherKind::learned;
    GradNorm grad_normalization = GradNorm::none;
    std::uint64_t seed = 0;
    double clamp_cap = 1e4;
    double t_margin = 1e-3;  // noise times drawn on (lo + margin, hi - margin)
    std::optional<double> fixed_t;
    bool surrogate_mse = false;  // express the injected gradient through an MSE surrogate
    NetConfig net;               // generator architecture when not inherited from the teacher
    int snapshot_every = 100;
    int snapshot_samples = 2000;
    int eval_samples = 10000;
    double mode_radius = 0.25;
    int start_phase = 1;

    void validate() const;
};

// Training-time pipeline trace. Only recorded steps keep forward caches; the
// states feeding unrecorded steps are treated as constants.
struct TapeStep {
    int step_index;
    double t_src;
    double t_dst;
    StepCoeffs coeffs;
    bool recorded;
    const TimeConditionedNet* net = nullptr;
    ForwardCache cache;
};

struct PipelineTape {
    std::vector<TapeStep> steps;
    SampleBatch output;
    int truncation = 0;  // j under sgts methods, 0 otherwise
};

// Executes the sampling pipeline for phase `phase_index` under the given
// method's gradient-recording rule:
//   dmd          - every step recorded (full backprop),
//   dmd_sgts     - j ~ U{1..N} steps, the last retargeted to 0, only it recorded,
//   phased       - all steps of phases 1..k, only the phase-terminal step recorded,
//   phased_sgts  - in-phase truncation retargeted to the phase boundary.
PipelineTape run_pipeline_taped(const std::vector<const TimeConditionedNet*>& experts, const PhasePlan& plan,
                                const NoiseSchedule& sched, const SampleBatch& eps, int phase_index,
                                Method method, Rng* truncation_rng);

// Accumulates d<output_cotangent, output>/d(params of `trainable`) by walking
// recorded steps in reverse. Returns the gradient norm.
double backprop_tape(const TimeConditionedNet& trainable, const PipelineTape& tape,
                     const SampleBatch& output_cotangent, Gradients& grads);

// Teacher supplied to the trainer: the model drives the pseudo-gradient, the
// optional net is the initialization source for fake and generator experts.
struct TeacherHandle {
    std::shared_ptr<const PredictionModel> model;
    std::shared_ptr<const TimeConditionedNet> net;

    static TeacherHandle learned(std::shared_ptr<const TimeConditionedNet> net);
    static TeacherHandle analytic(ToyPrior prior, NoiseSchedule sched,
                                  std::shared_ptr<const TimeConditionedNet> init_net = nullptr);
};

struct MetricsSnapshot {
    int iteration;
    DistributionReport report;
};

struct PhaseReport {
    int phase = 0;
    double boundary = 0.0;
    std::int64_t fake_updates = 0;
    std::int64_t generator_updates = 0;
    std::vector<double> fake_losses;     // mean fake loss per iteration
    std::vector<double> gen_grad_norms;  // per iteration
    std::vector<MetricsSnapshot> snapshots;
    DistributionReport final_report;
    double noise_t_min = 1.0;
    double noise_t_max = 0.0;
    std::vector<std::int64_t> noise_t_histogram;  // 20 bins over [0,1]
    std::vector<std::int64_t> sgts_histogram;     // counts of j (sgts methods only)
};

struct RunReport {
    std::vector<PhaseReport> phases;
    DistributionReport final_report;
    std::int64_t total_fake_updates = 0;
    std::int64_t total_generator_updates = 0;
};

// Owns all mutable training state. Phases run strictly in increasing order;
// earlier experts are frozen once their phase completes.
class Trainer {
public:
    Trainer(TrainerConfig cfg, ToyPrior prior, NoiseSchedule sched, TeacherHandle teacher,
            std::filesystem::path out_dir = {});

    void begin_phase(int k);
    double fake_update();       // one regression step of the fake model; returns the loss
    double generator_update();  // one reverse-KL pseudo-gradient step; returns the gradient norm
    PhaseReport run_phase();
    RunReport run();

    void load_expert(int k, const std::filesystem::path& path);

    // Learning-rate schedule hook for callers that anneal within a phase.
    void set_learning_rates(double lr_fake, double lr_gen);

    const TrainerConfig& config() const { return cfg_; }
    const PhasePlan& plan() const { return cfg_.plan; }
    int current_phase() const { return phase_; }
    const TimeConditionedNet& expert(int k) const;
    const TimeConditionedNet& fake() const;
    TimeConditionedNet& expert_mut(int k);
    std::int64_t fake_steps() const { return fake_steps_; }
    std::int64_t generator_steps() const { return gen_steps_; }

    // Samples the generated distribution at the current phase boundary.
    SampleBatch sample_boundary(int n, Rng& rng) const;
    DistributionReport evaluate_boundary(int n, Rng& rng) const;

private:
    std::vector<const TimeConditionedNet*> expert_ptrs() const;
    TimeVector draw_noise_times(Rng& rng, int n);
    void note_noise_times(const TimeVector& t);
    SampleBatch noise_inject(const SampleBatch& xs, const SampleBatch& eps, const TimeVector& t) const;

    TrainerConfig cfg_;
    ToyPrior prior_;
    NoiseSchedule sched_;
    TeacherHandle teacher_;
    std::filesystem::path out_dir_;

    int phase_ = 0;  // 0 = no active phase
    std::vector<std::optional<TimeConditionedNet>> experts_;
    std::optional<TimeConditionedNet> fake_;
    std::optional<AdamW> fake_opt_;
    std::optional<AdamW> gen_opt_;
    std::int64_t fake_steps_ = 0;
    std::int64_t gen_steps_ = 0;

    Rng fake_eps_rng_{0}, fake_noise_rng_{0}, gen_eps_rng_{0}, gen_noise_rng_{0}, trunc_rng_{0}, eval_rng_{0};
    PhaseReport live_;
};

struct PretrainConfig {
    int steps = 20000;
    int batch = 256;
    double lr = 1e-3;
    double lr_final_frac = 0.05;  // cosine decay floor
    NetConfig net;
    double gate = 1e-3;
    double t_margin = 1e-3;
    std::uint64_t seed = 0;
    int log_every = 1000;
};

struct TeacherGateReport {
    double grid_mse = 0.0;
    bool pass = false;
    std::vector<double> t_grid;
    Eigen::MatrixXd x_points;           // first coordinate of each evaluation point
    Eigen::MatrixXd squared_deviation;  // t index x point index
    std::vector<double> loss_history;
};

// Full-interval flow matching on prior draws; the gate compares the learned
// velocity against the analytic one on a quantile-based (x, t) grid.
TimeConditionedNet pretrain_teacher(const ToyPrior& prior, const NoiseSchedule& sched,
                                    const PretrainConfig& cfg, TeacherGateReport* gate = nullptr);
TeacherGateReport teacher_gate(const TimeConditionedNet& net, const ToyPrior& prior, const NoiseSchedule& sched,
                               double gate_threshold);

enum class SubintervalObjective { clamped_unbiased, biased_eps_minus_xs };

// Flow matching restricted to (s, 1) from observations x_s, with either the
// unbiased clamped target or the deliberately biased (eps - x_s) target.
TimeConditionedNet train_subinterval_flow(const ToyPrior& prior, const NoiseSchedule& sched, double s,
                                          SubintervalObjective objective, const PretrainConfig& cfg,
                                          double clamp_cap = 1e4, std::vector<double>* loss_history = nullptr);

}  // namespace pdmd
