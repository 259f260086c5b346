#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "pdmd/net.hpp"

using namespace pdmd;

namespace {

NetConfig small_cfg(int dim = 1, int hidden = 32, int layers = 2) {
    NetConfig nc;
    nc.dim = dim;
    nc.hidden = hidden;
    nc.hidden_layers = layers;
    return nc;
}

}  // namespace

TEST_CASE("zero network returns the output bias") {
    const TimeConditionedNet net = TimeConditionedNet::zeros(small_cfg());
    Rng rng(1);
    const SampleBatch x = rng.normal_matrix(9, 1);
    const TimeVector t = rng.uniform_vector(9, 0.0, 1.0);
    CHECK(net.forward(x, t).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward is deterministic and finite") {
    Rng a(42), b(42);
    const TimeConditionedNet na(small_cfg(1, 64, 3), a);
    const TimeConditionedNet nb(small_cfg(1, 64, 3), b);
    CHECK(na.flat_params() == nb.flat_params());

    Rng rng(5);
    const SampleBatch x = rng.normal_matrix(200, 1);
    const TimeVector t = rng.uniform_vector(200, 0.0, 1.0);
    const SampleBatch y1 = na.forward(x, t);
    const SampleBatch y2 = nb.forward(x, t);
    CHECK((y1 - y2).cwiseAbs().maxCoeff() == 0.0);
    CHECK(y1.allFinite());
}

TEST_CASE("backward: zero cotangent, linearity, input gradient shape") {
    Rng rng(11);
    TimeConditionedNet net(small_cfg(2, 24, 2), rng);
    const SampleBatch x = rng.normal_matrix(7, 2);
    const TimeVector t = rng.uniform_vector(7, 0.0, 1.0);
    ForwardCache cache;
    net.forward(x, t, cache);

    Gradients g = net.make_grads();
    const SampleBatch zero = SampleBatch::Zero(7, 2);
    const SampleBatch dx0 = net.backward(cache, zero, g);
    CHECK(g.squared_norm() == 0.0);
    CHECK(dx0.cwiseAbs().maxCoeff() == 0.0);
    CHECK(dx0.rows() == 7);
    CHECK(dx0.cols() == 2);

    const SampleBatch u1 = rng.normal_matrix(7, 2);
    const SampleBatch u2 = rng.normal_matrix(7, 2);
    Gradients g1 = net.make_grads(), g2 = net.make_grads(), g12 = net.make_grads();
    const SampleBatch d1 = net.backward(cache, u1, g1);
    const SampleBatch d2 = net.backward(cache, u2, g2);
    const SampleBatch d12 = net.backward(cache, u1 + u2, g12);
    CHECK((d12 - d1 - d2).cwiseAbs().maxCoeff() < 1e-12);
    for (std::size_t l = 0; l < g1.w.size(); ++l) {
        CHECK((g12.w[l] - g1.w[l] - g2.w[l]).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((g12.b[l] - g1.b[l] - g2.b[l]).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("gradient check across architectures") {
    int arch = 0;
    for (const auto& [dim, hidden, layers] : {std::tuple{1, 32, 2}, {2, 48, 3}, {1, 64, 4}}) {
        Rng rng(100 + arch++);
        TimeConditionedNet net(small_cfg(dim, hidden, layers), rng);
        const SampleBatch x = rng.normal_matrix(16, dim);
        const TimeVector t = rng.uniform_vector(16, 0.0, 1.0);
        const double err = grad_check(net, x, t, rng, 200);
        CAPTURE(arch);
        CHECK(err < 1e-5);
    }
}

TEST_CASE("gradient check property over random seeds") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(900 + seed);
        const int dim = 1 + static_cast<int>(seed % 2);
        const int hidden = 16 + 16 * static_cast<int>(seed % 3);
        const int layers = 2 + static_cast<int>(seed % 3);
        NetConfig nc = small_cfg(dim, hidden, layers);
        nc.prediction = seed % 2 == 0 ? PredictionKind::velocity : PredictionKind::sample;
        TimeConditionedNet net(nc, rng);
        const SampleBatch x = rng.normal_matrix(12, dim);
        const TimeVector t = rng.uniform_vector(12, 0.0, 1.0);
        CHECK(grad_check(net, x, t, rng, 200) < 1e-5);
    }
}

TEST_CASE("adamw: no-op on zero gradients, hand-checked first steps, decoupled decay") {
    Rng rng(3);
    TimeConditionedNet net = TimeConditionedNet::zeros(small_cfg(1, 8, 2));
    Gradients zeros = net.make_grads();

    AdamW opt(net, AdamConfig{1e-3, 0.0, 0.999, 1e-8, 0.0});
    const auto before = net.flat_params();
    opt.step(net, zeros);
    CHECK(net.flat_params() == before);

    // Single coordinate with g = 1 repeatedly: bias-corrected vhat stays 1, so
    // every step moves by -lr / (1 + eps).
    AdamW fresh(net, AdamConfig{1e-3, 0.0, 0.999, 1e-8, 0.0});
    Gradients g = net.make_grads();
    g.b.back()(0) = 1.0;
    fresh.step(net, g);
    CHECK(net.biases().back()(0) == doctest::Approx(-1e-3).epsilon(1e-7));
    for (int i = 0; i < 9; ++i) fresh.step(net, g);
    CHECK(net.biases().back()(0) == doctest::Approx(-10e-3).epsilon(1e-7));

    TimeConditionedNet decayed = TimeConditionedNet::zeros(small_cfg(1, 8, 2));
    decayed.weights_mut()[0](0, 0) = 2.0;
    AdamW opt2(decayed, AdamConfig{1e-3, 0.0, 0.999, 1e-8, 0.1});
    Gradients zg = decayed.make_grads();
    opt2.step(decayed, zg);
    CHECK(decayed.weights()[0](0, 0) == doctest::Approx(2.0 * (1.0 - 1e-4)).epsilon(1e-12));
    opt2.step(decayed, zg);
    CHECK(decayed.weights()[0](0, 0) == doctest::Approx(2.0 * (1.0 - 1e-4) * (1.0 - 1e-4)).epsilon(1e-12));
}

TEST_CASE("adamw aborts on non-finite gradients") {
    Rng rng(4);
    TimeConditionedNet net(small_cfg(), rng);
    AdamW opt(net, AdamConfig{});
    Gradients g = net.make_grads();
    g.w[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(opt.step(net, g), std::runtime_error);
}

TEST_CASE("checkpoint round trip is bit exact and atomic") {
    Rng rng(77);
    const NetConfig nc = small_cfg(1, 24, 3);
    TimeConditionedNet net(nc, rng);
    const auto dir = std::filesystem::temp_directory_path() / "pdmd_net_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "net.pdmd";
    net.save(path);
    CHECK(!std::filesystem::exists(path.string() + ".tmp"));

    std::ifstream in(path, std::ios::binary);
    char magic[4];
    in.read(magic, 4);
    CHECK(std::string(magic, 4) == "PDMD");
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    CHECK(version == 1);

    const TimeConditionedNet loaded = TimeConditionedNet::load(path, nc);
    CHECK(loaded.flat_params() == net.flat_params());
    CHECK(loaded.widths() == net.widths());
    CHECK(loaded.prediction_kind() == net.prediction_kind());

    Rng rng2(78);
    const SampleBatch x = rng2.normal_matrix(5, 1);
    const TimeVector t = rng2.uniform_vector(5, 0.0, 1.0);
    CHECK((loaded.forward(x, t) - net.forward(x, t)).cwiseAbs().maxCoeff() == 0.0);
    std::filesystem::remove_all(dir);
}
