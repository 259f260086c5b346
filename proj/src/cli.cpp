#include "pdmd/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>

#include "pdmd/metrics.hpp"

namespace pdmd::cli {

using json = nlohmann::ordered_json;

namespace {

std::string now_iso8601() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write report: " + path.string());
    out << j.dump(2) << "\n";
}

json config_echo(const KvConfig& cfg) {
    json j = json::object();
    for (const auto& [k, v] : cfg.entries()) j[k] = v;
    return j;
}

json vector_json(const Eigen::VectorXd& v) {
    json j = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
    return j;
}

json dist_report_json(const DistributionReport& r) {
    json j = json::object();
    j["w1"] = r.w1;
    j["mode_masses"] = vector_json(r.mode_masses);
    j["diversity"] = r.diversity;
    j["n_samples"] = r.n_samples;
    return j;
}

json phase_report_json(const PhaseReport& p) {
    json j = json::object();
    j["phase"] = p.phase;
    j["boundary"] = p.boundary;
    j["fake_updates"] = p.fake_updates;
    j["generator_updates"] = p.generator_updates;
    j["noise_t_min"] = p.noise_t_min;
    j["noise_t_max"] = p.noise_t_max;
    j["noise_t_histogram"] = p.noise_t_histogram;
    if (!p.sgts_histogram.empty()) j["sgts_histogram"] = p.sgts_histogram;
    j["fake_losses"] = p.fake_losses;
    j["gen_grad_norms"] = p.gen_grad_norms;
    json snaps = json::array();
    for (const auto& s : p.snapshots) {
        json sj = json::object();
        sj["iteration"] = s.iteration;
        sj["report"] = dist_report_json(s.report);
        snaps.push_back(sj);
    }
    j["snapshots"] = snaps;
    j["final"] = dist_report_json(p.final_report);
    return j;
}

json run_report_json(const RunReport& r) {
    json j = json::object();
    json phases = json::array();
    for (const auto& p : r.phases) phases.push_back(phase_report_json(p));
    j["phases"] = phases;
    j["final"] = dist_report_json(r.final_report);
    j["total_fake_updates"] = r.total_fake_updates;
    j["total_generator_updates"] = r.total_generator_updates;
    return j;
}

json gates_json(const std::vector<std::pair<std::string, bool>>& gates) {
    json j = json::array();
    for (const auto& [name, pass] : gates) {
        json g = json::object();
        g["name"] = name;
        g["pass"] = pass;
        j.push_back(g);
    }
    return j;
}

std::filesystem::path out_dir_for(const KvConfig& cfg, const std::string& command) {
    const std::filesystem::path out(cfg.get_string("out", "runs/" + command));
    std::filesystem::create_directories(out);
    return out;
}

std::shared_ptr<const TimeConditionedNet> load_teacher_net(const KvConfig& cfg, int dim) {
    const std::string path = cfg.get_string("teacher.checkpoint", "");
    if (path.empty() || !std::filesystem::exists(path)) return nullptr;
    NetConfig like = net_from_config(cfg, dim);
    like.prediction = PredictionKind::velocity;
    return std::make_shared<TimeConditionedNet>(TimeConditionedNet::load(path, like));
}

Trajectory recorder_to_trajectory(const TrajectoryRecorder& rec, int dim) {
    Trajectory t;
    t.times = rec.times();
    t.states = rec.states();
    t.dim = dim;
    return t;
}

std::vector<double> descending_grid(double from, double to, double dt) {
    const int steps = static_cast<int>(std::lround((from - to) / dt));
    if (steps < 1) throw std::invalid_argument("fig3: time grid is empty");
    std::vector<double> times(steps + 1);
    for (int i = 0; i <= steps; ++i) times[i] = from - i * dt;
    times.back() = to;
    return times;
}

// Minimal SVG polyline plot of trajectory overlays; the CSVs are the contract,
// this is a convenience view.
void write_fig3_svg(const std::filesystem::path& path, const Trajectory& full, const Trajectory& sub,
                    const Trajectory& biased) {
    const double width = 900, height = 540, margin = 45;
    double ylo = 1e30, yhi = -1e30;
    for (const auto& st : full.states) {
        ylo = std::min(ylo, st.col(0).minCoeff());
        yhi = std::max(yhi, st.col(0).maxCoeff());
    }
    const double pad = 0.05 * (yhi - ylo + 1e-9);
    ylo -= pad;
    yhi += pad;
    const auto px = [&](double t) { return margin + (1.0 - t) * (width - 2 * margin); };
    const auto py = [&](double v) { return height - margin - (v - ylo) / (yhi - ylo) * (height - 2 * margin); };

    std::ofstream svg(path, std::ios::trunc);
    if (!svg) throw std::runtime_error("cannot write svg: " + path.string());
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height << "'>\n";
    svg << "<rect width='100%' height='100%' fill='white'/>\n";
    const auto draw = [&](const Trajectory& traj, const char* color, double opacity) {
        const int n = traj.sample_count();
        for (int sid = 0; sid < n; ++sid) {
            svg << "<polyline fill='none' stroke='" << color << "' stroke-width='0.7' stroke-opacity='"
                << opacity << "' points='";
            for (std::size_t i = 0; i < traj.times.size(); ++i)
                svg << px(traj.times[i]) << "," << py(traj.states[i](sid, 0)) << " ";
            svg << "'/>\n";
        }
    };
    draw(full, "#888888", 0.25);
    draw(sub, "#1f77b4", 0.25);
    draw(biased, "#d62728", 0.25);
    for (double t : {1.0, 0.75, 0.5, 0.25, 0.0}) {
        svg << "<line x1='" << px(t) << "' y1='" << height - margin << "' x2='" << px(t) << "' y2='"
            << height - margin + 5 << "' stroke='black'/>\n";
        svg << "<text x='" << px(t) << "' y='" << height - margin + 18 << "' font-size='11' text-anchor='middle'>t="
            << t << "</text>\n";
    }
    svg << "<text x='" << margin << "' y='20' font-size='12'>full interval (grey), subinterval unbiased (blue), "
           "subinterval biased (red)</text>\n";
    svg << "</svg>\n";
}

}  // namespace

void init_threads() {
    const char* env = std::getenv("PDMD_THREADS");
    if (env) {
        const int n = std::atoi(env);
        if (n > 0) Eigen::setNbThreads(n);
    }
}

ToyPrior prior_from_config(const KvConfig& cfg) {
    const std::vector<double> atoms = cfg.get_double_list("prior.atoms", {-1.0, 0.0, 1.0, 2.0});
    ToyPrior prior = ToyPrior::point_atoms(atoms);
    if (cfg.has("prior.probs")) {
        const auto probs = cfg.get_double_list("prior.probs", {});
        if (probs.size() != atoms.size()) throw std::runtime_error("config: prior.probs size mismatch");
        for (std::size_t i = 0; i < probs.size(); ++i) prior.probs(static_cast<int>(i)) = probs[i];
    }
    if (cfg.has("prior.widths")) {
        const auto widths = cfg.get_double_list("prior.widths", {});
        if (widths.size() != atoms.size()) throw std::runtime_error("config: prior.widths size mismatch");
        for (std::size_t i = 0; i < widths.size(); ++i) prior.widths(static_cast<int>(i)) = widths[i];
    }
    prior.validate();
    return prior;
}

NoiseSchedule schedule_from_config(const KvConfig& cfg) {
    return NoiseSchedule::parse(cfg.get_string("schedule", "rectified_flow"));
}

NetConfig net_from_config(const KvConfig& cfg, int dim) {
    NetConfig nc;
    nc.dim = dim;
    nc.hidden = cfg.get_int("net.hidden", 256);
    nc.hidden_layers = cfg.get_int("net.layers", 3);
    nc.time_features = cfg.get_int("net.features", 16);
    nc.prediction = parse_prediction_kind(cfg.get_string("net.prediction", "velocity"));
    return nc;
}

PhasePlan plan_from_config(const KvConfig& cfg) {
    const IntervalMode mode = parse_interval_mode(cfg.get_string("plan.interval_mode", "reverse_nested"));
    if (cfg.has("plan.grid")) {
        const auto grid = cfg.get_double_list("plan.grid", {});
        std::vector<int> sizes;
        if (cfg.has("plan.phase_sizes")) {
            sizes = cfg.get_int_list("plan.phase_sizes", {});
        } else {
            const int steps = static_cast<int>(grid.size()) - 1;
            const int phases = cfg.get_int("plan.phases", 1);
            if (phases < 1 || steps % phases != 0)
                throw std::runtime_error("config: plan.phases must divide the grid steps");
            sizes.assign(phases, steps / phases);
        }
        return PhasePlan::from_grid(grid, sizes, mode);
    }
    return PhasePlan::uniform(cfg.get_int("plan.steps", 4), cfg.get_int("plan.phases", 2), mode);
}

TrainerConfig trainer_from_config(const KvConfig& cfg) {
    TrainerConfig tc;
    tc.method = parse_method(cfg.get_string("train.method", "phased"));
    tc.plan = plan_from_config(cfg);
    tc.fake_updates_per_generator_update = cfg.get_int("train.fake_per_gen", 5);
    tc.batch = cfg.get_int("train.batch", 128);
    tc.lr_fake = cfg.get_double("train.lr_fake", 1e-3);
    tc.lr_gen = cfg.get_double("train.lr_gen", 1e-4);
    tc.generator_updates_per_phase = cfg.get_int("train.gen_updates", 400);
    tc.teacher_kind = cfg.get_string("train.teacher", "learned") == "analytic" ? TeacherKind::analytic
                                                                               : TeacherKind::learned;
    const std::string gn = cfg.get_string("train.grad_norm", "none");
    if (gn == "per_sample_mean_abs") tc.grad_normalization = GradNorm::per_sample_mean_abs;
    else if (gn == "none") tc.grad_normalization = GradNorm::none;
    else throw std::runtime_error("config: unknown train.grad_norm: " + gn);
    tc.seed = cfg.get_u64("seed", 0);
    tc.clamp_cap = cfg.get_double("train.clamp_cap", 1e4);
    tc.t_margin = cfg.get_double("train.t_margin", 1e-3);
    if (cfg.has("train.fixed_t")) tc.fixed_t = cfg.get_double("train.fixed_t", 0.5);
    tc.surrogate_mse = cfg.get_bool("train.surrogate", false);
    tc.snapshot_every = cfg.get_int("train.snapshot_every", 100);
    tc.snapshot_samples = cfg.get_int("train.snapshot_samples", 2000);
    tc.eval_samples = cfg.get_int("eval.samples", 10000);
    tc.mode_radius = cfg.get_double("eval.mode_radius", 0.25);
    tc.start_phase = cfg.get_int("train.start_phase", 1);
    return tc;
}

PretrainConfig pretrain_from_config(const KvConfig& cfg, int dim) {
    PretrainConfig pc;
    pc.steps = cfg.get_int("teacher.steps", 20000);
    pc.batch = cfg.get_int("teacher.batch", 256);
    pc.lr = cfg.get_double("teacher.lr", 1e-3);
    pc.gate = cfg.get_double("teacher.gate", 1e-3);
    pc.t_margin = cfg.get_double("train.t_margin", 1e-3);
    pc.seed = cfg.get_u64("seed", 0);
    pc.log_every = cfg.get_int("teacher.log_every", 1000);
    pc.net = net_from_config(cfg, dim);
    pc.net.prediction = PredictionKind::velocity;
    return pc;
}

int cmd_train_teacher(const KvConfig& cfg) {
    const auto out = out_dir_for(cfg, "train-teacher");
    const ToyPrior prior = prior_from_config(cfg);
    const NoiseSchedule sched = schedule_from_config(cfg);
    const PretrainConfig pc = pretrain_from_config(cfg, prior.dim());

    TeacherGateReport gate;
    const TimeConditionedNet teacher = pretrain_teacher(prior, sched, pc, &gate);
    teacher.save(out / "teacher.pdmd");

    {
        std::ofstream csv(out / "teacher_deviation.csv", std::ios::trunc);
        csv << "t,x0,sq_deviation\n";
        char buf[96];
        for (Eigen::Index i = 0; i < gate.squared_deviation.rows(); ++i)
            for (Eigen::Index j = 0; j < gate.squared_deviation.cols(); ++j) {
                std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g\n", gate.t_grid[i], gate.x_points(i, j),
                              gate.squared_deviation(i, j));
                csv << buf;
            }
    }

    json rep;
    rep["command"] = "train-teacher";
    rep["timestamp"] = now_iso8601();
    rep["config"] = config_echo(cfg);
    rep["gate"] = {{"grid_mse", gate.grid_mse}, {"threshold", pc.gate}, {"pass", gate.pass}};
    rep["loss_history"] = gate.loss_history;
    rep["checkpoint"] = "teacher.pdmd";
    rep["gates"] = gates_json({{"teacher_gate", gate.pass}});
    write_json(out / "teacher_report.json", rep);

    std::printf("teacher gate: grid mse %.3e (threshold %.1e) -> %s\n", gate.grid_mse, pc.gate,
                gate.pass ? "pass" : "FAIL");
    return gate.pass ? 0 : 1;
}

int cmd_toy_fig3(const KvConfig& cfg) {
    const auto out = out_dir_for(cfg, "toy-fig3");
    const ToyPrior prior = prior_from_config(cfg);
    const NoiseSchedule sched = schedule_from_config(cfg);
    const int dim = prior.dim();

    const auto teacher = load_teacher_net(cfg, dim);
    if (!teacher) {
        std::fprintf(stderr, "toy-fig3: teacher checkpoint missing (set teacher.checkpoint; run train-teacher first)\n");
        return 1;
    }

    const double s = cfg.get_double("fig3.s", 0.5);
    PretrainConfig fc;
    fc.steps = cfg.get_int("fig3.steps", 6000);
    fc.batch = cfg.get_int("fig3.batch", 256);
    fc.lr = cfg.get_double("fig3.lr", 1e-3);
    fc.t_margin = cfg.get_double("train.t_margin", 1e-3);
    fc.net = net_from_config(cfg, dim);
    fc.log_every = 0;
    const std::uint64_t seed = cfg.get_u64("seed", 0);
    const double clamp_cap = cfg.get_double("train.clamp_cap", 1e4);

    fc.seed = splitmix64(seed ^ 0xb1a5ed);
    const TimeConditionedNet sub =
        train_subinterval_flow(prior, sched, s, SubintervalObjective::clamped_unbiased, fc, clamp_cap);
    fc.seed = splitmix64(seed ^ 0xb1a5ee);
    const TimeConditionedNet biased =
        train_subinterval_flow(prior, sched, s, SubintervalObjective::biased_eps_minus_xs, fc, clamp_cap);

    const int n = cfg.get_int("fig3.samples", 200);
    const double dt = cfg.get_double("fig3.dt", 0.01);
    Rng traj_rng = Rng::stream(seed, 0xf1630);
    const SampleBatch eps = traj_rng.normal_matrix(n, dim);

    TrajectoryRecorder rec_full, rec_sub, rec_biased;
    integrate_path(NetModel(*teacher), sched, eps, descending_grid(1.0, 0.0, dt), &rec_full);
    integrate_path(NetModel(sub), sched, eps, descending_grid(1.0, s, dt), &rec_sub);
    integrate_path(NetModel(biased), sched, eps, descending_grid(1.0, s, dt), &rec_biased);

    rec_full.write_csv(out / "fig3_full.csv");
    rec_sub.write_csv(out / "fig3_subinterval.csv");
    rec_biased.write_csv(out / "fig3_biased.csv");

    const Trajectory tr_full = recorder_to_trajectory(rec_full, dim);
    const Trajectory tr_sub = recorder_to_trajectory(rec_sub, dim);
    const Trajectory tr_biased = recorder_to_trajectory(rec_biased, dim);
    const double dev_sub = trajectory_deviation(tr_sub, tr_full, s, 1.0);
    const double dev_biased = trajectory_deviation(tr_biased, tr_full, s, 1.0);
    const bool gate = dev_sub < dev_biased;

    if (cfg.get_bool("fig3.plot", false))
        write_fig3_svg(out / "fig3_overlay.svg", tr_full, tr_sub, tr_biased);

    json rep;
    rep["command"] = "toy-fig3";
    rep["timestamp"] = now_iso8601();
    rep["config"] = config_echo(cfg);
    rep["window"] = {{"lo", s}, {"hi", 1.0}};
    rep["deviation_subinterval_vs_full"] = dev_sub;
    rep["deviation_biased_vs_full"] = dev_biased;
    rep["files"] = {"fig3_full.csv", "fig3_subinterval.csv", "fig3_biased.csv"};
    rep["gates"] = gates_json({{"unbiased_beats_biased", gate}});
    write_json(out / "fig3_report.json", rep);

    std::printf("fig3 deviation on (%.2f, 1): unbiased %.4f, biased %.4f -> %s\n", s, dev_sub, dev_biased,
                gate ? "pass" : "FAIL");
    return gate ? 0 : 1;
}

int cmd_distill(const KvConfig& cfg) {
    const auto out = out_dir_for(cfg, "distill");
    const ToyPrior prior = prior_from_config(cfg);
    const NoiseSchedule sched = schedule_from_config(cfg);
    TrainerConfig tc = trainer_from_config(cfg);
    tc.net = net_from_config(cfg, prior.dim());

    TeacherHandle teacher;
    const auto teacher_net = load_teacher_net(cfg, prior.dim());
    if (tc.teacher_kind == TeacherKind::learned) {
        if (!teacher_net) {
            std::fprintf(stderr, "distill: teacher checkpoint missing (set teacher.checkpoint)\n");
            return 1;
        }
        teacher = TeacherHandle::learned(teacher_net);
    } else {
        teacher = TeacherHandle::analytic(prior, sched, teacher_net);
    }

    Trainer trainer(tc, prior, sched, teacher, out);
    const RunReport rep = trainer.run();

    json j;
    j["command"] = "distill";
    j["timestamp"] = now_iso8601();
    j["config"] = config_echo(cfg);
    j["method"] = method_name(tc.method);
    j["run"] = run_report_json(rep);
    j["gates"] = gates_json({{"completed", true}});
    write_json(out / "run_report.json", j);

    std::printf("distill [%s]: final w1 %.4f, modes", method_name(tc.method).c_str(), rep.final_report.w1);
    for (Eigen::Index i = 0; i < rep.final_report.mode_masses.size(); ++i)
        std::printf(" %.3f", rep.final_report.mode_masses(i));
    std::printf("\n");
    return 0;
}

int cmd_ablate(const KvConfig& cfg) {
    const auto out = out_dir_for(cfg, "ablate");
    const ToyPrior prior = prior_from_config(cfg);
    const NoiseSchedule sched = schedule_from_config(cfg);

    const auto teacher_net = load_teacher_net(cfg, prior.dim());
    if (!teacher_net) {
        std::fprintf(stderr, "ablate: teacher checkpoint missing (set teacher.checkpoint)\n");
        return 1;
    }
    const TeacherHandle teacher = TeacherHandle::learned(teacher_net);

    json variants = json::object();
    std::map<std::string, DistributionReport> finals;

    const auto run_variant = [&](const std::string& name, TrainerConfig tc) {
        Trainer trainer(tc, prior, sched, teacher, out / name);
        const RunReport rep = trainer.run();
        variants[name] = run_report_json(rep);
        finals[name] = rep.final_report;
        std::printf("ablate %-16s w1 %.4f unassigned %.4f\n", name.c_str(), rep.final_report.w1,
                    rep.final_report.mode_masses(rep.final_report.mode_masses.size() - 1));
    };

    TrainerConfig base = trainer_from_config(cfg);
    base.net = net_from_config(cfg, prior.dim());

    // Fixed noise-time one-step runs (low vs high noise level).
    const double t_low = cfg.get_double("ablate.fixed_t_low", 0.357);
    const double t_high = cfg.get_double("ablate.fixed_t_high", 0.882);
    for (const auto& [name, t] : std::vector<std::pair<std::string, double>>{
             {"fixed_t_low", t_low}, {"fixed_t_high", t_high}}) {
        TrainerConfig tc = base;
        tc.method = Method::dmd;
        tc.plan = PhasePlan::uniform(1, 1);
        tc.fixed_t = t;
        run_variant(name, tc);
    }

    // Noise-interval modes on the phased plan.
    for (const auto mode : {IntervalMode::reverse_nested, IntervalMode::disjoint}) {
        TrainerConfig tc = base;
        tc.method = Method::phased;
        tc.plan = plan_from_config(cfg);
        std::vector<int> sizes;
        for (const auto& ph : tc.plan.phases) sizes.push_back(ph.last_step - ph.first_step + 1);
        tc.plan = PhasePlan::from_grid(tc.plan.grid, sizes, mode);
        run_variant(interval_mode_name(mode), tc);
    }

    const auto unassigned = [](const DistributionReport& r) { return r.mode_masses(r.mode_masses.size() - 1); };
    json cmp;
    cmp["w1_fixed_t_low"] = finals["fixed_t_low"].w1;
    cmp["w1_fixed_t_high"] = finals["fixed_t_high"].w1;
    cmp["w1_reverse_nested"] = finals["reverse_nested"].w1;
    cmp["w1_disjoint"] = finals["disjoint"].w1;
    cmp["unassigned_reverse_nested"] = unassigned(finals["reverse_nested"]);
    cmp["unassigned_disjoint"] = unassigned(finals["disjoint"]);

    json j;
    j["command"] = "ablate";
    j["timestamp"] = now_iso8601();
    j["config"] = config_echo(cfg);
    j["fixed_t"] = {{"low", t_low}, {"high", t_high}};
    j["variants"] = variants;
    j["comparison"] = cmp;
    j["gates"] = gates_json({{"completed", true}});
    write_json(out / "ablate_report.json", j);
    return 0;
}

int cmd_report(const std::filesystem::path& report_path) {
    std::ifstream in(report_path);
    if (!in) {
        std::fprintf(stderr, "report: cannot open %s\n", report_path.string().c_str());
        return 1;
    }
    json j;
    in >> j;
    std::printf("command:   %s\n", j.value("command", std::string("?")).c_str());
    std::printf("timestamp: %s\n", j.value("timestamp", std::string("?")).c_str());
    if (j.contains("gate")) {
        std::printf("teacher gate mse %.3e (threshold %g)\n", j["gate"].value("grid_mse", 0.0),
                    j["gate"].value("threshold", 0.0));
    }
    if (j.contains("deviation_subinterval_vs_full")) {
        std::printf("deviation unbiased %.4f / biased %.4f\n",
                    j.value("deviation_subinterval_vs_full", 0.0), j.value("deviation_biased_vs_full", 0.0));
    }
    if (j.contains("run") && j["run"].contains("final")) {
        std::printf("final w1 %.4f\n", j["run"]["final"].value("w1", 0.0));
    }
    if (j.contains("comparison")) {
        for (const auto& [k, v] : j["comparison"].items()) std::printf("%-28s %.4f\n", k.c_str(), v.get<double>());
    }
    bool all = true;
    if (j.contains("gates")) {
        for (const auto& g : j["gates"]) {
            const bool pass = g.value("pass", false);
            all = all && pass;
            std::printf("gate %-24s %s\n", g.value("name", std::string("?")).c_str(), pass ? "pass" : "FAIL");
        }
    }
    return all ? 0 : 1;
}

int run_cli(int argc, const char* const* argv) {
    init_threads();
    CLI::App app{"Phased distribution matching distillation on analytic toy priors"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out;
    std::string seed_str;
    std::vector<std::string> sets;
    std::string report_path;

    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "flat key=value config file");
        sub->add_option("--seed", seed_str, "master seed (overrides config)");
        sub->add_option("--out", out, "output directory (overrides config)");
        sub->add_option("--set", sets, "config override key=value (repeatable, later wins)");
    };

    CLI::App* c_teacher = app.add_subcommand("train-teacher", "pretrain the flow-matching teacher and gate it");
    CLI::App* c_fig3 = app.add_subcommand("toy-fig3", "subinterval trajectory-overlap experiment");
    CLI::App* c_distill = app.add_subcommand("distill", "run dmd / dmd_sgts / phased / phased_sgts distillation");
    CLI::App* c_ablate = app.add_subcommand("ablate", "interval-mode and fixed-timestep ablations");
    CLI::App* c_report = app.add_subcommand("report", "summarize a run report json");
    for (CLI::App* sub : {c_teacher, c_fig3, c_distill, c_ablate}) add_common(sub);
    c_report->add_option("report", report_path, "path to a report json")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (c_report->parsed()) return cmd_report(report_path);
        KvConfig cfg;
        if (!config_path.empty()) cfg = KvConfig::load(config_path);
        for (const auto& s : sets) cfg.apply_override(s);
        if (!seed_str.empty()) cfg.set("seed", seed_str);
        if (!out.empty()) cfg.set("out", out);

        if (c_teacher->parsed()) return cmd_train_teacher(cfg);
        if (c_fig3->parsed()) return cmd_toy_fig3(cfg);
        if (c_distill->parsed()) return cmd_distill(cfg);
        if (c_ablate->parsed()) return cmd_ablate(cfg);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}

}  // namespace pdmd::cli
