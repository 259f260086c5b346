#include <doctest.h>

#include "pdmd/metrics.hpp"
#include "pdmd/objectives.hpp"
#include "support/oracles.hpp"

using namespace pdmd;

namespace {

SampleBatch scalar(double v) {
    SampleBatch m(1, 1);
    m << v;
    return m;
}

const NoiseSchedule rf = NoiseSchedule::rectified_flow();

}  // namespace

TEST_CASE("prior validation and sampling") {
    ToyPrior prior = ToyPrior::four_atoms();
    prior.validate();
    CHECK(prior.min_atom_gap() == doctest::Approx(1.0));

    ToyPrior bad = prior;
    bad.probs(0) = 0.5;
    CHECK_THROWS(bad.validate());

    Rng rng(9);
    const SampleBatch draws = prior.sample(20000, rng);
    for (int i = 0; i < 4; ++i) {
        const double frac = (draws.col(0).array() == prior.atoms(i, 0)).cast<double>().mean();
        CHECK(frac == doctest::Approx(0.25).epsilon(0.05));
    }
}

TEST_CASE("flow and x-prediction targets") {
    const RegressionTarget t1 = flow_target(scalar(2.0), scalar(0.5));
    CHECK(t1.target(0, 0) == doctest::Approx(-1.5));
    CHECK(t1.weight == 1.0);
    CHECK(t1.residual_scale == 1.0);

    Rng rng(2);
    const SampleBatch same = rng.normal_matrix(6, 2);
    CHECK(flow_target(same, same).target.cwiseAbs().maxCoeff() == 0.0);

    const SampleBatch x0 = rng.normal_matrix(5, 1);
    const SampleBatch eps = rng.normal_matrix(5, 1);
    const RegressionTarget batch = flow_target(x0, eps);
    for (int i = 0; i < 5; ++i)
        CHECK(batch.target(i, 0) == flow_target(x0.row(i), eps.row(i)).target(0, 0));

    CHECK(x_pred_target(x0).target == x0);
    CHECK_THROWS(flow_target(x0, rng.normal_matrix(4, 1)));
}

TEST_CASE("subinterval flow target: frozen coefficient values") {
    // s=0.5, t=0.75 under rectified flow: A = 0.25 / (0.25 * sqrt(0.5)), B = 2.
    const SubintervalCoeffs c = subinterval_coeffs(rf, 0.5, 0.75);
    CHECK(c.eps_coeff == doctest::Approx(1.4142135623730951).epsilon(1e-12));
    CHECK(c.xs_coeff == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(c.sigma_ts == doctest::Approx(0.7071067811865476).epsilon(1e-12));

    const RegressionTarget a = subinterval_flow_target(rf, scalar(1.0), scalar(0.0), 0.5, 0.75);
    CHECK(a.target(0, 0) / a.residual_scale == doctest::Approx(-2.0).epsilon(1e-12));
    const RegressionTarget b = subinterval_flow_target(rf, scalar(0.0), scalar(1.0), 0.5, 0.75);
    CHECK(b.target(0, 0) / b.residual_scale == doctest::Approx(1.4142135623730951).epsilon(1e-12));

    CHECK_THROWS(subinterval_flow_target(rf, scalar(0.0), scalar(1.0), 0.75, 0.5));
    CHECK_THROWS(subinterval_flow_target(rf, scalar(0.0), scalar(1.0), 0.75, 0.75));
}

TEST_CASE("subinterval target degenerates to the flow target as s -> 0") {
    Rng rng(3);
    const SampleBatch xs = rng.normal_matrix(8, 1);
    const SampleBatch eps = rng.normal_matrix(8, 1);
    const double s = 1e-6, t = 0.6;
    const RegressionTarget sub = subinterval_flow_target(rf, xs, eps, s, t);
    const RegressionTarget flow = flow_target(xs, eps);
    const SampleBatch unscaled = sub.target / sub.residual_scale;
    CHECK((unscaled - flow.target).cwiseAbs().maxCoeff() < 1e-4);

    const RegressionTarget xp = subinterval_x_pred_target(rf, xs, eps, s, t);
    CHECK((xp.target - xs).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("subinterval x-prediction target values") {
    const RegressionTarget a = subinterval_x_pred_target(rf, scalar(1.0), scalar(1.0), 0.5, 0.75);
    CHECK(a.target(0, 0) == doctest::Approx(2.0 - 0.35355339059327373).epsilon(1e-12));
    const RegressionTarget b = subinterval_x_pred_target(rf, scalar(1.0), scalar(0.0), 0.5, 0.75);
    CHECK(b.target(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("clamped and unclamped subinterval losses agree when the weight is not clipped") {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const double s = rng.uniform(0.05, 0.7);
        const double t = rng.uniform(s + 0.05, 0.999);
        const SampleBatch xs = rng.normal_matrix(3, 1);
        const SampleBatch eps = rng.normal_matrix(3, 1);
        const SampleBatch psi = rng.normal_matrix(3, 1);
        const RegressionTarget rt = subinterval_flow_target(rf, xs, eps, s, t, 1e4);
        if (rt.weight >= 1e4) continue;  // clipped; equivalence not claimed
        const SubintervalCoeffs c = subinterval_coeffs(rf, s, t);
        const SampleBatch plain = c.eps_coeff * eps - c.xs_coeff * xs;
        const double clamped = rt.weight * (rt.residual_scale * psi - rt.target).squaredNorm();
        const double unclamped = (psi - plain).squaredNorm();
        CHECK(clamped == doctest::Approx(unclamped).epsilon(1e-12));
    }
}

TEST_CASE("analytic velocity: single atom, symmetry, enumeration oracle") {
    const ToyPrior one = ToyPrior::point_atoms({0.7});
    for (const double t : {0.2, 0.5, 0.9}) {
        const Coeffs c = coeffs(rf, t);
        for (const double x : {-1.0, 0.0, 2.0}) {
            const double expected = (x - c.alpha * 0.7) / c.sigma - 0.7;
            CHECK(analytic_velocity(one, rf, scalar(x), t)(0, 0) == doctest::Approx(expected).epsilon(1e-12));
        }
    }

    const ToyPrior sym = ToyPrior::point_atoms({-1.0, 1.0});
    CHECK(analytic_velocity(sym, rf, scalar(0.0), 0.37)(0, 0) == doctest::Approx(0.0).epsilon(1e-12));

    const ToyPrior four = ToyPrior::four_atoms();
    const double got = analytic_velocity(four, rf, scalar(0.7), 0.5)(0, 0);
    const double want = oracle::velocity_1d({-1.0, 0.0, 1.0, 2.0}, {0.25, 0.25, 0.25, 0.25}, 0.5, 0.5, 0.7);
    CHECK(got == doctest::Approx(want).epsilon(1e-10));

    CHECK_THROWS(analytic_velocity(four, rf, scalar(0.0), 0.0));
}

TEST_CASE("esm residual vanishes exactly at the analytic optimum") {
    const ToyPrior four = ToyPrior::four_atoms();
    Rng rng(5);
    const SampleBatch x = rng.normal_matrix(50, 1);
    for (const double t : {0.1, 0.5, 0.9}) {
        const SampleBatch psi = analytic_velocity(four, rf, x, t);
        const SampleBatch score = analytic_score(four, rf, x, t);
        CHECK(esm_residual(rf, psi, x, score, t).cwiseAbs().maxCoeff() < 1e-9);

        const Coeffs c = coeffs(rf, t);
        const SampleBatch zero_score = SampleBatch::Zero(50, 1);
        CHECK(esm_residual(rf, (-x / c.alpha).eval(), x, zero_score, t).cwiseAbs().maxCoeff() < 1e-12);

        const SampleBatch delta = rng.normal_matrix(50, 1);
        const SampleBatch shifted = esm_residual(rf, psi + delta, x, score, t);
        const SampleBatch base = esm_residual(rf, psi, x, score, t);
        CHECK((shifted - base - delta).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("dmd weights") {
    const LossWeights a = dmd_weight(rf, 0.0, 0.5);
    CHECK(a.lambda_t == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a.w == doctest::Approx(0.5).epsilon(1e-12));

    const LossWeights b = dmd_weight(rf, 0.5, 0.75);
    CHECK(b.lambda_t == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(b.w == doctest::Approx(1.0 / 6.0).epsilon(1e-12));

    const LossWeights c = dmd_weight(rf, 0.6, 0.6);
    CHECK(c.w == doctest::Approx(c.lambda_t).epsilon(1e-12));

    CHECK_THROWS(dmd_weight(rf, 0.5, 1.0));  // alpha_t = 0
}

TEST_CASE("bridge-conditional oracle sampler reproduces the x_s marginal") {
    const ToyPrior four = ToyPrior::four_atoms();
    const double s = 0.5, t = 0.75;
    Rng rng(31);

    // Draw x_t from its marginal, then x_s | x_t; the result must match the
    // direct x_s marginal.
    const int n = 40000;
    Eigen::VectorXd xs_cond(n), xs_direct(n);
    const SampleBatch x0 = four.sample(n, rng);
    const SampleBatch xt = diffuse(rf, x0, rng.normal_matrix(n, 1), t);
    for (int i = 0; i < n; ++i) {
        oracle::BridgeConditionalSampler cond(four, rf, s, t, xt(i, 0));
        const auto [x_s, eps] = cond.draw(rng);
        xs_cond(i) = x_s;
        // consistency: x_t reconstructs exactly
        const BridgeCoeffs b = bridge_coeffs(rf, s, t);
        REQUIRE(std::abs(b.alpha_ts * x_s + b.sigma_ts * eps - xt(i, 0)) < 1e-12);
    }
    const SampleBatch x0b = four.sample(n, rng);
    xs_direct = diffuse(rf, x0b, rng.normal_matrix(n, 1), s).col(0);
    CHECK(wasserstein1(xs_cond, xs_direct) < 0.015);
}

TEST_CASE("subinterval target is conditionally unbiased; (eps - xs) is not") {
    const ToyPrior four = ToyPrior::four_atoms();
    const double s = 0.5;
    Rng rng(127);
    const int n = 100000;

    for (const auto& [x_t, t] : {std::pair{0.7, 0.75}, {-0.4, 0.6}, {1.5, 0.9}}) {
        const SubintervalCoeffs c = subinterval_coeffs(rf, s, t);
        oracle::BridgeConditionalSampler cond(four, rf, s, t, x_t);
        std::vector<double> unbiased(n), biased(n);
        for (int i = 0; i < n; ++i) {
            const auto [x_s, eps] = cond.draw(rng);
            unbiased[i] = c.eps_coeff * eps - c.xs_coeff * x_s;
            biased[i] = eps - x_s;
        }
        const double v = analytic_velocity(four, rf, scalar(x_t), t)(0, 0);
        const auto su = oracle::mean_and_se(unbiased);
        const auto sb = oracle::mean_and_se(biased);
        CAPTURE(x_t);
        CAPTURE(t);
        CHECK(std::abs(su.mean - v) < 3.0 * su.stderr_);
        CHECK(std::abs(sb.mean - v) > 10.0 * sb.stderr_);
    }
}

TEST_CASE("dsm and esm parameter gradients agree in expectation") {
    const ToyPrior four = ToyPrior::four_atoms();
    Rng rng(55);
    NetConfig nc;
    nc.hidden = 48;
    nc.hidden_layers = 2;
    TimeConditionedNet net(nc, rng);

    const int n = 20000;
    const SampleBatch x0 = four.sample(n, rng);
    const TimeVector t = rng.uniform_vector(n, 0.05, 0.95);
    const SampleBatch eps = rng.normal_matrix(n, 1);
    const SampleBatch x_t = diffuse(rf, x0, eps, t);

    const SampleBatch target_dsm = eps - x0;
    const SampleBatch target_esm = analytic_velocity(four, rf, x_t, t);  // -x/alpha - (sigma+sigma^2/alpha) score

    // Per-sample parameter-gradient difference, projected onto fixed random
    // directions; each projection is a mean of iid terms with expectation 0.
    ForwardCache cache;
    net.forward(x_t, t, cache);
    std::vector<Eigen::MatrixXd> deltas;
    Gradients scratch = net.make_grads();
    const SampleBatch diff_up = 2.0 * (target_esm - target_dsm);
    net.backward(cache, diff_up, scratch, false, &deltas);

    Rng dir_rng(777);
    for (int d = 0; d < 6; ++d) {
        Eigen::VectorXd proj = Eigen::VectorXd::Zero(n);
        for (int l = 0; l < net.layer_count(); ++l) {
            Eigen::MatrixXd uw(net.weights()[l].rows(), net.weights()[l].cols());
            for (Eigen::Index i = 0; i < uw.size(); ++i) uw.data()[i] = dir_rng.normal();
            Eigen::VectorXd ub(net.biases()[l].size());
            for (Eigen::Index i = 0; i < ub.size(); ++i) ub(i) = dir_rng.normal();
            const Eigen::MatrixXd& below = l == 0 ? cache.input : cache.act[l - 1];
            proj += (deltas[l].cwiseProduct(below * uw.transpose())).rowwise().sum();
            proj += deltas[l] * ub;
        }
        std::vector<double> vals(proj.data(), proj.data() + n);
        const auto st = oracle::mean_and_se(vals);
        CAPTURE(d);
        CHECK(std::abs(st.mean) < 3.0 * st.stderr_);
    }
}
