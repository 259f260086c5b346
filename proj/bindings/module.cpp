#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "pdmd/cli.hpp"
#include "pdmd/distill.hpp"
#include "pdmd/metrics.hpp"

namespace py = pybind11;
using namespace pdmd;

namespace {

NetConfig make_net_config(int dim, int hidden, int hidden_layers, int time_features,
                          const std::string& prediction) {
    NetConfig nc;
    nc.dim = dim;
    nc.hidden = hidden;
    nc.hidden_layers = hidden_layers;
    nc.time_features = time_features;
    nc.prediction = parse_prediction_kind(prediction);
    return nc;
}

}  // namespace

PYBIND11_MODULE(_pdmd, m) {
    m.doc() = "Phased distribution matching distillation toy lab (C++ core)";

    py::class_<NoiseSchedule>(m, "NoiseSchedule")
        .def(py::init([](const std::string& kind) { return NoiseSchedule::parse(kind); }), py::arg("kind"))
        .def_property_readonly("name", &NoiseSchedule::name)
        .def("__repr__", [](const NoiseSchedule& s) { return "NoiseSchedule(" + s.name() + ")"; });

    m.def("coeffs", [](const NoiseSchedule& s, double t) {
        const Coeffs c = coeffs(s, t);
        return py::make_tuple(c.alpha, c.sigma);
    }, py::arg("schedule"), py::arg("t"));
    m.def("snr", &snr, py::arg("schedule"), py::arg("t"));
    m.def("bridge_coeffs", [](const NoiseSchedule& s, double a, double b) {
        const BridgeCoeffs c = bridge_coeffs(s, a, b);
        return py::make_tuple(c.alpha_ts, c.sigma_ts);
    }, py::arg("schedule"), py::arg("s"), py::arg("t"));
    m.def("diffuse",
          py::overload_cast<const NoiseSchedule&, const SampleBatch&, const SampleBatch&, double>(&diffuse),
          py::arg("schedule"), py::arg("x0"), py::arg("eps"), py::arg("t"));
    m.def("diffuse_from",
          py::overload_cast<const NoiseSchedule&, const SampleBatch&, const SampleBatch&, double, double>(
              &diffuse_from),
          py::arg("schedule"), py::arg("xs"), py::arg("eps"), py::arg("s"), py::arg("t"));

    py::class_<ToyPrior>(m, "ToyPrior")
        .def_static("four_atoms", &ToyPrior::four_atoms)
        .def_static("point_atoms", &ToyPrior::point_atoms, py::arg("locations"))
        .def_readwrite("atoms", &ToyPrior::atoms)
        .def_readwrite("probs", &ToyPrior::probs)
        .def_readwrite("widths", &ToyPrior::widths)
        .def("sample", [](const ToyPrior& p, int n, std::uint64_t seed) {
            Rng rng(seed);
            return p.sample(n, rng);
        }, py::arg("n"), py::arg("seed"));

    m.def("analytic_velocity",
          py::overload_cast<const ToyPrior&, const NoiseSchedule&, const SampleBatch&, double>(&analytic_velocity),
          py::arg("prior"), py::arg("schedule"), py::arg("x_t"), py::arg("t"));
    m.def("analytic_score",
          py::overload_cast<const ToyPrior&, const NoiseSchedule&, const SampleBatch&, double>(&analytic_score),
          py::arg("prior"), py::arg("schedule"), py::arg("x_t"), py::arg("t"));
    m.def("analytic_x0", &analytic_x0, py::arg("prior"), py::arg("schedule"), py::arg("x_t"), py::arg("t"));
    m.def("esm_residual", &esm_residual, py::arg("schedule"), py::arg("psi"), py::arg("x_t"),
          py::arg("score"), py::arg("t"));

    m.def("flow_target", [](const SampleBatch& x0, const SampleBatch& eps) {
        return flow_target(x0, eps).target;
    }, py::arg("x0"), py::arg("eps"));
    m.def("subinterval_coeffs", [](const NoiseSchedule& sched, double s, double t) {
        const SubintervalCoeffs c = subinterval_coeffs(sched, s, t);
        return py::make_tuple(c.eps_coeff, c.xs_coeff, c.sigma_ts);
    }, py::arg("schedule"), py::arg("s"), py::arg("t"));
    m.def("subinterval_flow_target", [](const NoiseSchedule& sched, const SampleBatch& xs, const SampleBatch& eps,
                                        double s, double t, double clamp_cap) {
        const RegressionTarget rt = subinterval_flow_target(sched, xs, eps, s, t, clamp_cap);
        return py::make_tuple(rt.target, rt.weight, rt.residual_scale);
    }, py::arg("schedule"), py::arg("xs"), py::arg("eps"), py::arg("s"), py::arg("t"), py::arg("clamp_cap") = 1e4);
    m.def("dmd_weight", [](const NoiseSchedule& sched, double s, double t) {
        const LossWeights w = dmd_weight(sched, s, t);
        return py::make_tuple(w.lambda_t, w.w);
    }, py::arg("schedule"), py::arg("s"), py::arg("t"));

    py::class_<TimeConditionedNet>(m, "TimeConditionedNet")
        .def(py::init([](int dim, int hidden, int hidden_layers, int time_features, const std::string& prediction,
                         std::uint64_t seed) {
            Rng rng(seed);
            return TimeConditionedNet(make_net_config(dim, hidden, hidden_layers, time_features, prediction), rng);
        }), py::arg("dim") = 1, py::arg("hidden") = 256, py::arg("hidden_layers") = 3,
            py::arg("time_features") = 16, py::arg("prediction") = "velocity", py::arg("seed") = 0)
        .def_property_readonly("param_count", &TimeConditionedNet::param_count)
        .def_property_readonly("widths", &TimeConditionedNet::widths)
        .def_property_readonly("prediction",
                               [](const TimeConditionedNet& n) { return prediction_kind_name(n.prediction_kind()); })
        .def("forward",
             [](const TimeConditionedNet& n, const SampleBatch& x, const TimeVector& t) { return n.forward(x, t); },
             py::arg("x"), py::arg("t"))
        .def("save", &TimeConditionedNet::save, py::arg("path"))
        .def_static("load", [](const std::filesystem::path& path, const std::string& prediction) {
            NetConfig like;
            like.prediction = parse_prediction_kind(prediction);
            return TimeConditionedNet::load(path, like);
        }, py::arg("path"), py::arg("prediction") = "velocity");

    m.def("grad_check", [](TimeConditionedNet& net, const SampleBatch& x, const TimeVector& t,
                           std::uint64_t seed, int coords) {
        Rng rng(seed);
        return grad_check(net, x, t, rng, coords);
    }, py::arg("net"), py::arg("x"), py::arg("t"), py::arg("seed") = 0, py::arg("coords") = 200);

    m.def("scheduler_step", [](const NoiseSchedule& sched, const SampleBatch& x, const SampleBatch& pred,
                               double t, double t_next, const std::string& kind) {
        return scheduler_step(sched, x, pred, t, t_next, parse_prediction_kind(kind));
    }, py::arg("schedule"), py::arg("x_t"), py::arg("prediction"), py::arg("t"), py::arg("t_next"),
       py::arg("prediction_kind") = "velocity");

    m.def("sample_pipeline", [](const std::vector<const TimeConditionedNet*>& experts, int steps, int phases,
                                const std::string& interval_mode, const NoiseSchedule& sched,
                                const SampleBatch& eps) {
        const PhasePlan plan = PhasePlan::uniform(steps, phases, parse_interval_mode(interval_mode));
        std::vector<NetModel> wraps;
        wraps.reserve(experts.size());
        std::vector<const PredictionModel*> models;
        for (const auto* e : experts) wraps.emplace_back(*e);
        for (auto& w : wraps) models.push_back(&w);
        return run_pipeline(models, plan, sched, eps);
    }, py::arg("experts"), py::arg("steps"), py::arg("phases"), py::arg("interval_mode"), py::arg("schedule"),
       py::arg("eps"));

    m.def("pretrain_teacher", [](const ToyPrior& prior, const NoiseSchedule& sched, int steps, int batch,
                                 double lr, int hidden, int hidden_layers, double gate, std::uint64_t seed) {
        PretrainConfig pc;
        pc.steps = steps;
        pc.batch = batch;
        pc.lr = lr;
        pc.net.hidden = hidden;
        pc.net.hidden_layers = hidden_layers;
        pc.gate = gate;
        pc.seed = seed;
        pc.log_every = 0;
        TeacherGateReport gate_rep;
        TimeConditionedNet net = pretrain_teacher(prior, sched, pc, &gate_rep);
        return py::make_tuple(std::move(net), gate_rep.grid_mse, gate_rep.pass);
    }, py::arg("prior"), py::arg("schedule"), py::arg("steps") = 20000, py::arg("batch") = 256,
       py::arg("lr") = 1e-3, py::arg("hidden") = 256, py::arg("hidden_layers") = 3, py::arg("gate") = 1e-3,
       py::arg("seed") = 0);

    m.def("wasserstein1", &wasserstein1, py::arg("a"), py::arg("b"));
    m.def("sliced_wasserstein1", &sliced_wasserstein1, py::arg("a"), py::arg("b"),
          py::arg("n_projections") = 64, py::arg("seed") = 0x51CED001u);
    m.def("mode_coverage", &mode_coverage, py::arg("samples"), py::arg("prior"), py::arg("radius"));
    m.def("mean_pairwise_distance", &mean_pairwise_distance, py::arg("samples"), py::arg("subsample_cap") = 2000);

    m.def("cli_main", [](const std::vector<std::string>& args) {
        std::vector<const char*> argv;
        argv.push_back("pdmd");
        for (const auto& a : args) argv.push_back(a.c_str());
        return cli::run_cli(static_cast<int>(argv.size()), argv.data());
    }, py::arg("args"), "Run a CLI command in-process; returns the exit code.");
}
