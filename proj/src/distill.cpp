#include "pdmd/distill.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace pdmd {

namespace {

constexpr int kNoiseHistogramBins = 20;

std::string expert_filename(int phase) { return "expert_phase" + std::to_string(phase) + ".pdmd"; }
std::string fake_filename(int phase) { return "fake_phase" + std::to_string(phase) + ".pdmd"; }

double cosine_lr(double lr, double final_frac, int step, int total) {
    const double lo = lr * final_frac;
    const double c = 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) / std::max(1, total)));
    return lo + (lr - lo) * c;
}

}  // namespace

Method parse_method(const std::string& name) {
    if (name == "dmd") return Method::dmd;
    if (name == "dmd_sgts") return Method::dmd_sgts;
    if (name == "phased") return Method::phased;
    if (name == "phased_sgts") return Method::phased_sgts;
    throw std::invalid_argument("unknown method: " + name);
}

std::string method_name(Method m) {
    switch (m) {
        case Method::dmd: return "dmd";
        case Method::dmd_sgts: return "dmd_sgts";
        case Method::phased: return "phased";
        case Method::phased_sgts: return "phased_sgts";
    }
    throw std::logic_error("unreachable method");
}

void TrainerConfig::validate() const {
    plan.validate();
    if (fake_updates_per_generator_update < 1)
        throw std::invalid_argument("trainer: fake_updates_per_generator_update must be >= 1");
    if (batch < 1) throw std::invalid_argument("trainer: batch must be >= 1");
    if ((method == Method::dmd || method == Method::dmd_sgts) && plan.phase_count() != 1)
        throw std::invalid_argument("trainer: dmd and dmd_sgts require a single-phase plan");
    if (start_phase < 1 || start_phase > plan.phase_count())
        throw std::invalid_argument("trainer: start_phase out of range");
    if (fixed_t && !(*fixed_t > 0.0 && *fixed_t < 1.0))
        throw std::invalid_argument("trainer: fixed_t must lie in (0,1)");
    if (t_margin < 0.0 || t_margin > 0.1) throw std::invalid_argument("trainer: t_margin out of range");
}

PipelineTape run_pipeline_taped(const std::vector<const TimeConditionedNet*>& experts, const PhasePlan& plan,
                                const NoiseSchedule& sched, const SampleBatch& eps, int phase_index,
                                Method method, Rng* truncation_rng) {
    plan.validate();
    if (phase_index < 1 || phase_index > plan.phase_count())
        throw std::invalid_argument("pipeline tape: phase index out of range");
    const Phase& ph = plan.phases[phase_index - 1];

    int last_executed = ph.last_step;
    double final_tdst = ph.boundary;
    int recorded_from = ph.last_step;
    int truncation = 0;
    switch (method) {
        case Method::dmd:
            recorded_from = 0;
            break;
        case Method::dmd_sgts: {
            if (!truncation_rng) throw std::invalid_argument("pipeline tape: sgts needs a truncation rng");
            truncation = sgts_truncate(plan, *truncation_rng);
            last_executed = truncation - 1;
            final_tdst = 0.0;
            recorded_from = last_executed;
            break;
        }
        case Method::phased:
            break;
        case Method::phased_sgts: {
            const int span = ph.last_step - ph.first_step + 1;
            if (!truncation_rng) throw std::invalid_argument("pipeline tape: sgts needs a truncation rng");
            truncation = span == 1 ? 1 : truncation_rng->uniform_int(1, span);
            last_executed = ph.first_step + truncation - 1;
            recorded_from = last_executed;
            break;
        }
    }

    PipelineTape tape;
    tape.truncation = truncation;
    SampleBatch x = eps;
    for (int i = 0; i <= last_executed; ++i) {
        const Phase& step_phase = plan.phase_of_step(i);
        if (step_phase.expert_id < 0 || step_phase.expert_id >= static_cast<int>(experts.size()) ||
            !experts[step_phase.expert_id])
            throw std::invalid_argument("pipeline tape: missing expert for phase " + std::to_string(step_phase.index));
        const TimeConditionedNet* net = experts[step_phase.expert_id];
        TapeStep st;
        st.step_index = i;
        st.t_src = plan.grid[i];
        st.t_dst = i == last_executed ? final_tdst : plan.grid[i + 1];
        st.recorded = i >= recorded_from;
        st.net = net;
        st.coeffs = scheduler_step_coeffs(sched, st.t_src, st.t_dst, net->prediction_kind());
        const TimeVector tv = TimeVector::Constant(x.rows(), st.t_src);
        SampleBatch pred;
        if (st.recorded) {
            pred = net->forward(x, tv, st.cache);
        } else {
            pred = net->forward(x, tv);
        }
        x = st.coeffs.c_x * x + st.coeffs.c_pred * pred;
        tape.steps.push_back(std::move(st));
    }
    tape.output = std::move(x);
    return tape;
}

double backprop_tape(const TimeConditionedNet& trainable, const PipelineTape& tape,
                     const SampleBatch& output_cotangent, Gradients& grads) {
    grads.set_zero();
    SampleBatch c = output_cotangent;
    for (auto it = tape.steps.rbegin(); it != tape.steps.rend(); ++it) {
        if (!it->recorded) break;
        if (it->net != &trainable)
            throw std::invalid_argument("backprop_tape: recorded step does not belong to the trainable expert");
        const SampleBatch upstream = it->coeffs.c_pred * c;
        const SampleBatch input_grad = trainable.backward(it->cache, upstream, grads, /*accumulate=*/true);
        c = it->coeffs.c_x * c + input_grad;
    }
    return std::sqrt(grads.squared_norm());
}

TeacherHandle TeacherHandle::learned(std::shared_ptr<const TimeConditionedNet> net) {
    if (!net) throw std::invalid_argument("teacher: learned teacher needs a net");
    TeacherHandle h;
    h.net = std::move(net);
    h.model = std::make_shared<NetModel>(*h.net);
    return h;
}

TeacherHandle TeacherHandle::analytic(ToyPrior prior, NoiseSchedule sched,
                                      std::shared_ptr<const TimeConditionedNet> init_net) {
    TeacherHandle h;
    h.model = std::make_shared<AnalyticVelocityModel>(std::move(prior), sched);
    h.net = std::move(init_net);
    return h;
}

Trainer::Trainer(TrainerConfig cfg, ToyPrior prior, NoiseSchedule sched, TeacherHandle teacher,
                 std::filesystem::path out_dir)
    : cfg_(std::move(cfg)), prior_(std::move(prior)), sched_(sched), teacher_(std::move(teacher)),
      out_dir_(std::move(out_dir)) {
    cfg_.validate();
    prior_.validate();
    if (!teacher_.model) throw std::invalid_argument("trainer: missing teacher model");
    experts_.resize(cfg_.plan.phase_count());
    if (!out_dir_.empty()) std::filesystem::create_directories(out_dir_);
}

std::vector<const TimeConditionedNet*> Trainer::expert_ptrs() const {
    std::vector<const TimeConditionedNet*> ptrs;
    for (const auto& e : experts_) ptrs.push_back(e ? &*e : nullptr);
    return ptrs;
}

const TimeConditionedNet& Trainer::expert(int k) const {
    if (k < 1 || k > static_cast<int>(experts_.size()) || !experts_[k - 1])
        throw std::out_of_range("trainer: expert " + std::to_string(k) + " not available");
    return *experts_[k - 1];
}

TimeConditionedNet& Trainer::expert_mut(int k) {
    return const_cast<TimeConditionedNet&>(static_cast<const Trainer*>(this)->expert(k));
}

const TimeConditionedNet& Trainer::fake() const {
    if (!fake_) throw std::logic_error("trainer: no active phase");
    return *fake_;
}

void Trainer::set_learning_rates(double lr_fake, double lr_gen) {
    cfg_.lr_fake = lr_fake;
    cfg_.lr_gen = lr_gen;
    if (fake_opt_) fake_opt_->set_lr(lr_fake);
    if (gen_opt_) gen_opt_->set_lr(lr_gen);
}

void Trainer::load_expert(int k, const std::filesystem::path& path) {
    if (k < 1 || k > static_cast<int>(experts_.size())) throw std::out_of_range("trainer: phase out of range");
    experts_[k - 1] = TimeConditionedNet::load(path, cfg_.net);
}

void Trainer::begin_phase(int k) {
    if (k < 1 || k > cfg_.plan.phase_count()) throw std::out_of_range("trainer: phase out of range");
    for (int j = 1; j < k; ++j) {
        if (experts_[j - 1]) continue;
        const auto path = out_dir_ / expert_filename(j);
        if (out_dir_.empty() || !std::filesystem::exists(path))
            throw std::runtime_error("trainer: missing prior-phase checkpoint for phase " + std::to_string(j));
        load_expert(j, path);
    }
    phase_ = k;

    const std::uint64_t base = static_cast<std::uint64_t>(k) * 16;
    fake_eps_rng_ = Rng::stream(cfg_.seed, base + 1);
    fake_noise_rng_ = Rng::stream(cfg_.seed, base + 2);
    gen_eps_rng_ = Rng::stream(cfg_.seed, base + 3);
    gen_noise_rng_ = Rng::stream(cfg_.seed, base + 4);
    trunc_rng_ = Rng::stream(cfg_.seed, base + 5);
    eval_rng_ = Rng::stream(cfg_.seed, base + 6);

    if (teacher_.net && cfg_.net.prediction == PredictionKind::velocity) {
        experts_[k - 1] = *teacher_.net;
    } else {
        Rng init = Rng::stream(cfg_.seed, base + 7);
        experts_[k - 1] = TimeConditionedNet(cfg_.net, init);
    }
    if (teacher_.net) {
        fake_ = *teacher_.net;
    } else {
        NetConfig fc = cfg_.net;
        fc.prediction = PredictionKind::velocity;
        Rng init = Rng::stream(cfg_.seed, base + 8);
        fake_ = TimeConditionedNet(fc, init);
    }
    fake_opt_.emplace(*fake_, AdamConfig{cfg_.lr_fake, 0.0, 0.999, 1e-8, 0.0});
    gen_opt_.emplace(*experts_[k - 1], AdamConfig{cfg_.lr_gen, 0.0, 0.999, 1e-8, 0.0});

    live_ = PhaseReport{};
    live_.phase = k;
    live_.boundary = cfg_.plan.phases[k - 1].boundary;
    live_.noise_t_histogram.assign(kNoiseHistogramBins, 0);
    if (cfg_.method == Method::dmd_sgts) live_.sgts_histogram.assign(cfg_.plan.step_count(), 0);
    if (cfg_.method == Method::phased_sgts) {
        const Phase& ph = cfg_.plan.phases[k - 1];
        live_.sgts_histogram.assign(ph.last_step - ph.first_step + 1, 0);
    }
}

TimeVector Trainer::draw_noise_times(Rng& rng, int n) {
    const Phase& ph = cfg_.plan.phases[phase_ - 1];
    TimeVector t(n);
    if (cfg_.fixed_t) {
        t.setConstant(*cfg_.fixed_t);
    } else {
        const double lo = ph.noise_lo + cfg_.t_margin;
        const double hi = ph.noise_hi - cfg_.t_margin;
        if (!(lo < hi)) throw std::runtime_error("trainer: degenerate noise interval after margin");
        for (int i = 0; i < n; ++i) t(i) = rng.uniform(lo, hi);
    }
    note_noise_times(t);
    return t;
}

void Trainer::note_noise_times(const TimeVector& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) {
        live_.noise_t_min = std::min(live_.noise_t_min, t(i));
        live_.noise_t_max = std::max(live_.noise_t_max, t(i));
        const int bin = std::min(kNoiseHistogramBins - 1, static_cast<int>(t(i) * kNoiseHistogramBins));
        live_.noise_t_histogram[bin] += 1;
    }
}

SampleBatch Trainer::noise_inject(const SampleBatch& xs, const SampleBatch& eps, const TimeVector& t) const {
    const double s = cfg_.plan.phases[phase_ - 1].boundary;
    if (s == 0.0) return diffuse(sched_, xs, eps, t);
    return diffuse_from(sched_, xs, eps, s, t);
}

double Trainer::fake_update() {
    if (phase_ < 1) throw std::logic_error("trainer: begin_phase first");
    const Phase& ph = cfg_.plan.phases[phase_ - 1];
    const int n = cfg_.batch;
    const int d = prior_.dim();

    const SampleBatch eps = fake_eps_rng_.normal_matrix(n, d);
    std::vector<NetModel> wraps;
    std::vector<const PredictionModel*> models;
    wraps.reserve(experts_.size());
    for (const auto& e : experts_) {
        if (e) wraps.emplace_back(*e);
    }
    std::size_t wi = 0;
    for (const auto& e : experts_) models.push_back(e ? &wraps[wi++] : nullptr);
    const SampleBatch x_s = run_pipeline(models, cfg_.plan, sched_, eps, ph.last_step + 1);

    const TimeVector t = draw_noise_times(fake_noise_rng_, n);
    const SampleBatch eps2 = fake_noise_rng_.normal_matrix(n, d);
    const SampleBatch x_t = noise_inject(x_s, eps2, t);

    SampleBatch target;
    Eigen::VectorXd weight, scale;
    if (ph.boundary == 0.0) {
        target = eps2 - x_s;
        weight = Eigen::VectorXd::Ones(n);
        scale = Eigen::VectorXd::Ones(n);
    } else {
        BatchedTarget bt = subinterval_flow_targets(sched_, x_s, eps2, ph.boundary, t, cfg_.clamp_cap);
        target = std::move(bt.target);
        weight = std::move(bt.weight);
        scale = std::move(bt.residual_scale);
    }

    ForwardCache cache;
    const SampleBatch out = fake_->forward(x_t, t, cache);
    const SampleBatch residual = scale.asDiagonal() * out - target;
    const double denom = static_cast<double>(n) * d;
    const Eigen::VectorXd row_sq = residual.rowwise().squaredNorm();
    const double loss = (weight.array() * row_sq.array()).sum() / denom;
    if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "fake_update: non-finite loss at phase " << phase_ << ", fake step " << fake_steps_ + 1
            << " (t range " << t.minCoeff() << ".." << t.maxCoeff() << ", |x_s| max "
            << x_s.cwiseAbs().maxCoeff() << ")";
        throw std::runtime_error(msg.str());
    }

    const Eigen::VectorXd ws = (weight.array() * scale.array()).matrix();
    const SampleBatch upstream = (2.0 / denom) * (ws.asDiagonal() * residual);
    Gradients grads = fake_->make_grads();
    fake_->backward(cache, upstream, grads);
    fake_opt_->step(*fake_, grads);
    fake_steps_ += 1;
    live_.fake_updates += 1;
    return loss;
}

double Trainer::generator_update() {
    if (phase_ < 1) throw std::logic_error("trainer: begin_phase first");
    const Phase& ph = cfg_.plan.phases[phase_ - 1];
    const int n = cfg_.batch;
    const int d = prior_.dim();
    TimeConditionedNet& gen = *experts_[phase_ - 1];

    const SampleBatch eps = gen_eps_rng_.normal_matrix(n, d);
    PipelineTape tape = run_pipeline_taped(expert_ptrs(), cfg_.plan, sched_, eps, phase_, cfg_.method, &trunc_rng_);
    if (tape.truncation > 0 && !live_.sgts_histogram.empty())
        live_.sgts_histogram[tape.truncation - 1] += 1;

    const TimeVector t = draw_noise_times(gen_noise_rng_, n);
    const SampleBatch eps3 = gen_noise_rng_.normal_matrix(n, d);
    const SampleBatch x_t = noise_inject(tape.output, eps3, t);

    const SampleBatch f_val = fake_->forward(x_t, t);
    const SampleBatch t_val = teacher_.model->predict(x_t, t);

    // Reverse-KL gradient injected at the phase boundary: w_{t|s} (T - F) is the
    // ascent direction of D_KL with respect to x_s; the optimizer descends it.
    SampleBatch g(n, d);
    for (int i = 0; i < n; ++i) {
        const double w = dmd_weight(sched_, ph.boundary, t(i), cfg_.clamp_cap).w;
        g.row(i) = w * (t_val.row(i) - f_val.row(i));
    }
    if (cfg_.grad_normalization == GradNorm::per_sample_mean_abs) {
        for (int i = 0; i < n; ++i) g.row(i) /= g.row(i).cwiseAbs().mean() + 1e-8;
    }
    if (!g.allFinite()) {
        std::ostringstream msg;
        msg << "generator_update: non-finite pseudo-gradient at phase " << phase_ << ", generator step "
            << gen_steps_ + 1;
        throw std::runtime_error(msg.str());
    }

    SampleBatch cotangent;
    if (cfg_.surrogate_mse) {
        const SampleBatch virtual_target = tape.output - g;  // detached
        cotangent = (tape.output - virtual_target) / static_cast<double>(n);
    } else {
        cotangent = g / static_cast<double>(n);
    }

    Gradients grads = gen.make_grads();
    const double norm = backprop_tape(gen, tape, cotangent, grads);
    gen_opt_->step(gen, grads);
    gen_steps_ += 1;
    live_.generator_updates += 1;
    return norm;
}

SampleBatch Trainer::sample_boundary(int n, Rng& rng) const {
    if (phase_ < 1) throw std::logic_error("trainer: begin_phase first");
    const Phase& ph = cfg_.plan.phases[phase_ - 1];
    const SampleBatch eps = rng.normal_matrix(n, prior_.dim());
    std::vector<NetModel> wraps;
    std::vector<const PredictionModel*> models;
    wraps.reserve(experts_.size());
    for (const auto& e : experts_)
        if (e) wraps.emplace_back(*e);
    std::size_t wi = 0;
    for (const auto& e : experts_) models.push_back(e ? &wraps[wi++] : nullptr);
    return run_pipeline(models, cfg_.plan, sched_, eps, ph.last_step + 1);
}

DistributionReport Trainer::evaluate_boundary(int n, Rng& rng) const {
    const Phase& ph = cfg_.plan.phases[phase_ - 1];
    const SampleBatch gen = sample_boundary(n, rng);
    const SampleBatch x0 = prior_.sample(n, rng);
    SampleBatch ref;
    if (ph.boundary == 0.0) {
        ref = x0;
    } else {
        const SampleBatch eps = rng.normal_matrix(n, prior_.dim());
        ref = diffuse(sched_, x0, eps, ph.boundary);
    }
    const Coeffs c = coeffs(sched_, ph.boundary);
    ToyPrior scaled = prior_;
    scaled.atoms *= c.alpha;
    DistributionReport rep;
    rep.w1 = batch_w1(gen, ref);
    rep.mode_masses = mode_coverage(gen, scaled, cfg_.mode_radius * c.alpha);
    rep.diversity = mean_pairwise_distance(gen);
    rep.n_samples = n;
    return rep;
}

PhaseReport Trainer::run_phase() {
    if (phase_ < 1) throw std::logic_error("trainer: begin_phase first");
    for (int iter = 1; iter <= cfg_.generator_updates_per_phase; ++iter) {
        double mean_loss = 0.0;
        for (int r = 0; r < cfg_.fake_updates_per_generator_update; ++r) mean_loss += fake_update();
        live_.fake_losses.push_back(mean_loss / cfg_.fake_updates_per_generator_update);
        live_.gen_grad_norms.push_back(generator_update());
        if (cfg_.snapshot_every > 0 && iter % cfg_.snapshot_every == 0 &&
            iter < cfg_.generator_updates_per_phase) {
            live_.snapshots.push_back({iter, evaluate_boundary(cfg_.snapshot_samples, eval_rng_)});
        }
    }
    live_.final_report = evaluate_boundary(cfg_.eval_samples, eval_rng_);
    if (!out_dir_.empty()) {
        experts_[phase_ - 1]->save(out_dir_ / expert_filename(phase_));
        fake_->save(out_dir_ / fake_filename(phase_));
    }
    return live_;
}

RunReport Trainer::run() {
    RunReport rep;
    for (int k = cfg_.start_phase; k <= cfg_.plan.phase_count(); ++k) {
        begin_phase(k);
        rep.phases.push_back(run_phase());
        rep.total_fake_updates += rep.phases.back().fake_updates;
        rep.total_generator_updates += rep.phases.back().generator_updates;
    }
    rep.final_report = rep.phases.back().final_report;
    return rep;
}

TimeConditionedNet pretrain_teacher(const ToyPrior& prior, const NoiseSchedule& sched,
                                    const PretrainConfig& cfg, TeacherGateReport* gate_out) {
    prior.validate();
    NetConfig nc = cfg.net;
    nc.dim = prior.dim();
    nc.prediction = PredictionKind::velocity;
    Rng rng = Rng::stream(cfg.seed, 0x7eac8e11ULL);
    TimeConditionedNet net(nc, rng);
    AdamW opt(net, AdamConfig{cfg.lr, 0.0, 0.999, 1e-8, 0.0});

    std::vector<double> history;
    ForwardCache cache;
    Gradients grads = net.make_grads();
    const double denom = static_cast<double>(cfg.batch) * prior.dim();
    for (int step = 1; step <= cfg.steps; ++step) {
        opt.set_lr(cosine_lr(cfg.lr, cfg.lr_final_frac, step, cfg.steps));
        const SampleBatch x0 = prior.sample(cfg.batch, rng);
        const TimeVector t = rng.uniform_vector(cfg.batch, cfg.t_margin, 1.0 - cfg.t_margin);
        const SampleBatch eps = rng.normal_matrix(cfg.batch, prior.dim());
        const SampleBatch x_t = diffuse(sched, x0, eps, t);
        const SampleBatch out = net.forward(x_t, t, cache);
        const SampleBatch residual = out - (eps - x0);
        const double loss = residual.squaredNorm() / denom;
        if (!std::isfinite(loss)) throw std::runtime_error("pretrain_teacher: non-finite loss at step " + std::to_string(step));
        net.backward(cache, (2.0 / denom) * residual, grads);
        opt.step(net, grads);
        if (cfg.log_every > 0 && step % cfg.log_every == 0) history.push_back(loss);
    }
    TeacherGateReport gate = teacher_gate(net, prior, sched, cfg.gate);
    gate.loss_history = std::move(history);
    if (gate_out) *gate_out = gate;
    return net;
}

TeacherGateReport teacher_gate(const TimeConditionedNet& net, const ToyPrior& prior, const NoiseSchedule& sched,
                               double gate_threshold) {
    TeacherGateReport rep;
    const int n_t = 19;
    const std::vector<double> offsets = {-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0};
    const int d = prior.dim();
    const int points = prior.atom_count() * static_cast<int>(offsets.size());
    rep.squared_deviation.resize(n_t, points);
    rep.x_points.resize(n_t, points);
    double total = 0.0;
    for (int it = 0; it < n_t; ++it) {
        const double t = 0.05 + 0.9 * static_cast<double>(it) / (n_t - 1);
        rep.t_grid.push_back(t);
        const Coeffs c = coeffs(sched, t);
        SampleBatch x(points, d);
        int row = 0;
        for (int a = 0; a < prior.atom_count(); ++a) {
            for (const double off : offsets) {
                x.row(row) = c.alpha * prior.atoms.row(a);
                x.row(row).array() += c.sigma * off / std::sqrt(static_cast<double>(d));
                rep.x_points(it, row) = x(row, 0);
                ++row;
            }
        }
        const TimeVector tv = TimeVector::Constant(points, t);
        const SampleBatch pred = net.forward(x, tv);
        const SampleBatch truth = analytic_velocity(prior, sched, x, t);
        for (int p = 0; p < points; ++p) {
            const double sq = (pred.row(p) - truth.row(p)).squaredNorm() / d;
            rep.squared_deviation(it, p) = sq;
            total += sq;
        }
    }
    rep.grid_mse = total / (n_t * points);
    rep.pass = rep.grid_mse <= gate_threshold;
    return rep;
}

TimeConditionedNet train_subinterval_flow(const ToyPrior& prior, const NoiseSchedule& sched, double s,
                                          SubintervalObjective objective, const PretrainConfig& cfg,
                                          double clamp_cap, std::vector<double>* loss_history) {
    prior.validate();
    if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("train_subinterval_flow: s must lie in (0,1)");
    NetConfig nc = cfg.net;
    nc.dim = prior.dim();
    nc.prediction = PredictionKind::velocity;
    Rng rng = Rng::stream(cfg.seed, 0x5c0be111ULL);
    TimeConditionedNet net(nc, rng);
    AdamW opt(net, AdamConfig{cfg.lr, 0.0, 0.999, 1e-8, 0.0});

    ForwardCache cache;
    Gradients grads = net.make_grads();
    const double denom = static_cast<double>(cfg.batch) * prior.dim();
    for (int step = 1; step <= cfg.steps; ++step) {
        opt.set_lr(cosine_lr(cfg.lr, cfg.lr_final_frac, step, cfg.steps));
        const SampleBatch x0 = prior.sample(cfg.batch, rng);
        const SampleBatch eps_s = rng.normal_matrix(cfg.batch, prior.dim());
        const SampleBatch x_s = diffuse(sched, x0, eps_s, s);
        const TimeVector t = rng.uniform_vector(cfg.batch, s + cfg.t_margin, 1.0 - cfg.t_margin);
        const SampleBatch eps = rng.normal_matrix(cfg.batch, prior.dim());
        const SampleBatch x_t = diffuse_from(sched, x_s, eps, s, t);

        const SampleBatch out = net.forward(x_t, t, cache);
        SampleBatch residual;
        SampleBatch upstream;
        double loss;
        if (objective == SubintervalObjective::clamped_unbiased) {
            BatchedTarget bt = subinterval_flow_targets(sched, x_s, eps, s, t, clamp_cap);
            residual = bt.residual_scale.asDiagonal() * out - bt.target;
            const Eigen::VectorXd row_sq = residual.rowwise().squaredNorm();
            loss = (bt.weight.array() * row_sq.array()).sum() / denom;
            const Eigen::VectorXd ws = (bt.weight.array() * bt.residual_scale.array()).matrix();
            upstream = (2.0 / denom) * (ws.asDiagonal() * residual);
        } else {
            residual = out - (eps - x_s);
            loss = residual.squaredNorm() / denom;
            upstream = (2.0 / denom) * residual;
        }
        if (!std::isfinite(loss))
            throw std::runtime_error("train_subinterval_flow: non-finite loss at step " + std::to_string(step));
        net.backward(cache, upstream, grads);
        opt.step(net, grads);
        if (loss_history && cfg.log_every > 0 && step % cfg.log_every == 0) loss_history->push_back(loss);
    }
    return net;
}

}  // namespace pdmd
