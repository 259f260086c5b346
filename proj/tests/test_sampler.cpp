#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "pdmd/metrics.hpp"
#include "pdmd/sampler.hpp"

using namespace pdmd;

namespace {
const NoiseSchedule rf = NoiseSchedule::rectified_flow();
}

TEST_CASE("phase plan construction and invariants") {
    const PhasePlan plan = PhasePlan::uniform(4, 2);
    CHECK(plan.step_count() == 4);
    CHECK(plan.grid == std::vector<double>{1.0, 0.75, 0.5, 0.25, 0.0});
    CHECK(plan.phases[0].boundary == 0.5);
    CHECK(plan.phases[1].boundary == 0.0);
    CHECK(plan.phases[0].noise_lo == 0.5);
    CHECK(plan.phases[0].noise_hi == 1.0);
    CHECK(plan.phases[1].noise_lo == 0.0);
    CHECK(plan.phases[1].noise_hi == 1.0);
    CHECK(plan.phase_of_step(0).index == 1);
    CHECK(plan.phase_of_step(3).index == 2);

    const PhasePlan disjoint = PhasePlan::uniform(4, 2, IntervalMode::disjoint);
    CHECK(disjoint.phases[0].noise_lo == 0.5);
    CHECK(disjoint.phases[0].noise_hi == 1.0);
    CHECK(disjoint.phases[1].noise_lo == 0.0);
    CHECK(disjoint.phases[1].noise_hi == 0.5);

    CHECK_THROWS(PhasePlan::uniform(4, 3));  // does not divide
    CHECK_THROWS(PhasePlan::from_grid({1.0, 0.5, 0.1}, {2}));          // missing 0 endpoint
    CHECK_THROWS(PhasePlan::from_grid({0.9, 0.5, 0.0}, {2}));          // missing 1 endpoint
    CHECK_THROWS(PhasePlan::from_grid({1.0, 0.5, 0.5, 0.0}, {3}));     // not strictly decreasing
    CHECK_THROWS(PhasePlan::from_grid({1.0, 0.5, 0.0}, {1}));          // phases do not cover steps
}

TEST_CASE("scheduler step: velocity form") {
    SampleBatch x(1, 1), zero(1, 1), pred(1, 1);
    x << 1.7;
    zero << 0.0;
    CHECK(scheduler_step(rf, x, zero, 0.8, 0.3, PredictionKind::velocity)(0, 0) == 1.7);

    // x_1 = eps, constant velocity eps - a integrates exactly to a.
    const double eps = 0.42, a = -1.3;
    x << eps;
    pred << eps - a;
    CHECK(scheduler_step(rf, x, pred, 1.0, 0.0, PredictionKind::velocity)(0, 0) == doctest::Approx(a).epsilon(1e-15));

    // two half steps of a constant field equal one full step
    const SampleBatch half1 = scheduler_step(rf, x, pred, 1.0, 0.5, PredictionKind::velocity);
    const SampleBatch half2 = scheduler_step(rf, half1, pred, 0.5, 0.0, PredictionKind::velocity);
    const SampleBatch full = scheduler_step(rf, x, pred, 1.0, 0.0, PredictionKind::velocity);
    CHECK((half2 - full).cwiseAbs().maxCoeff() < 1e-15);

    CHECK_THROWS(scheduler_step(rf, x, pred, 0.3, 0.3, PredictionKind::velocity));
    CHECK_THROWS(scheduler_step(rf, x, pred, 0.3, 0.8, PredictionKind::velocity));
    CHECK_THROWS(scheduler_step(NoiseSchedule::vp_cosine(), x, pred, 0.8, 0.3, PredictionKind::velocity));
}

TEST_CASE("scheduler step: sample form reprojects through the predicted x0") {
    SampleBatch x(1, 1), xhat(1, 1);
    x << 0.9;
    xhat << 0.25;
    // to t_next = 0 the step returns the prediction exactly
    CHECK(scheduler_step(rf, x, xhat, 0.6, 0.0, PredictionKind::sample)(0, 0) == doctest::Approx(0.25).epsilon(1e-15));

    const double t = 0.6, tn = 0.2;
    const Coeffs ct = coeffs(rf, t), cn = coeffs(rf, tn);
    const double eps_hat = (x(0, 0) - ct.alpha * xhat(0, 0)) / ct.sigma;
    const double manual = cn.alpha * xhat(0, 0) + cn.sigma * eps_hat;
    CHECK(scheduler_step(rf, x, xhat, t, tn, PredictionKind::sample)(0, 0) == doctest::Approx(manual).epsilon(1e-14));

    const NoiseSchedule vp = NoiseSchedule::vp_cosine();
    CHECK(scheduler_step(vp, x, xhat, t, tn, PredictionKind::sample).allFinite());
}

TEST_CASE("pipeline: one analytic step lands exactly on a single atom") {
    const ToyPrior one = ToyPrior::point_atoms({0.8});
    const AnalyticVelocityModel model(one, rf);
    const PhasePlan plan = PhasePlan::uniform(1, 1);
    Rng rng(6);
    const SampleBatch eps = rng.normal_matrix(32, 1);
    const SampleBatch out = run_pipeline({&model}, plan, rf, eps);
    CHECK((out.array() - 0.8).abs().maxCoeff() < 1e-12);
}

TEST_CASE("pipeline: stopping and resuming is exactly composable") {
    const ToyPrior four = ToyPrior::four_atoms();
    const AnalyticVelocityModel model(four, rf);
    const PhasePlan plan = PhasePlan::uniform(4, 2);
    std::vector<const PredictionModel*> experts{&model, &model};
    Rng rng(7);
    const SampleBatch eps = rng.normal_matrix(16, 1);

    const SampleBatch full = run_pipeline(experts, plan, rf, eps);
    SampleBatch x = run_pipeline(experts, plan, rf, eps, 2);
    for (int i = 2; i < 4; ++i) {
        const SampleBatch pred = model.predict_at(x, plan.grid[i]);
        x = scheduler_step(rf, x, pred, plan.grid[i], plan.grid[i + 1], PredictionKind::velocity);
    }
    CHECK((x - full).cwiseAbs().maxCoeff() == 0.0);

    CHECK_THROWS(run_pipeline({&model}, plan, rf, eps));  // missing expert for phase 2
}

TEST_CASE("pipeline with the analytic teacher converges to the prior as steps grow") {
    // Plain Euler on the exact velocity field is first order: measured W1 at
    // 10^4 samples is ~0.24 for 4 steps and halves with each doubling.
    const ToyPrior four = ToyPrior::four_atoms();
    const AnalyticVelocityModel model(four, rf);
    const int n = 10000;
    double prev = 1e9;
    for (const int steps : {4, 8, 16, 64}) {
        const PhasePlan plan = PhasePlan::uniform(steps, 1);
        Rng rng(8);
        const SampleBatch out = run_pipeline({&model}, plan, rf, rng.normal_matrix(n, 1));
        const SampleBatch ref = four.sample(n, rng);
        const double w1 = wasserstein1(out.col(0), ref.col(0));
        CHECK(w1 < 0.7 * prev);
        prev = w1;
        if (steps == 4) CHECK(w1 < 0.3);
        if (steps >= 16) CHECK(w1 <= 0.05);
    }
}

TEST_CASE("pipeline records deterministic trajectories") {
    const ToyPrior four = ToyPrior::four_atoms();
    const AnalyticVelocityModel model(four, rf);
    const PhasePlan plan = PhasePlan::uniform(4, 1);
    Rng r1(9), r2(9);
    TrajectoryRecorder a, b;
    run_pipeline({&model}, plan, rf, r1.normal_matrix(8, 1), std::nullopt, &a);
    run_pipeline({&model}, plan, rf, r2.normal_matrix(8, 1), std::nullopt, &b);
    REQUIRE(a.times() == b.times());
    CHECK(a.times() == std::vector<double>{1.0, 0.75, 0.5, 0.25, 0.0});
    for (std::size_t i = 0; i < a.states().size(); ++i)
        CHECK((a.states()[i] - b.states()[i]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sgts truncation: support, one-step case, frequencies") {
    const PhasePlan one = PhasePlan::uniform(1, 1);
    Rng rng(10);
    const std::uint64_t before = rng.next_u64();
    Rng rng2(10);
    for (int i = 0; i < 5; ++i) CHECK(sgts_truncate(one, rng2) == 1);
    CHECK(rng2.next_u64() == before);  // no entropy consumed for N = 1

    const PhasePlan four = PhasePlan::uniform(4, 1);
    Rng rng3(11);
    std::vector<int> counts(4, 0);
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) {
        const int j = sgts_truncate(four, rng3);
        REQUIRE(j >= 1);
        REQUIRE(j <= 4);
        counts[j - 1] += 1;
    }
    const double expect = draws / 4.0;
    const double sigma = std::sqrt(draws * 0.25 * 0.75);
    for (const int c : counts) CHECK(std::abs(c - expect) < 3.0 * sigma);
}

TEST_CASE("trajectory csv round trip and layout") {
    const ToyPrior four = ToyPrior::four_atoms();
    const AnalyticVelocityModel model(four, rf);
    Rng rng(12);
    TrajectoryRecorder rec;
    integrate_path(model, rf, rng.normal_matrix(3, 1), {1.0, 0.6, 0.2}, &rec);

    const auto dir = std::filesystem::temp_directory_path() / "pdmd_traj_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "traj.csv";
    rec.write_csv(path);

    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "sample_id,t,x0");
    std::getline(in, line);
    CHECK(line.rfind("0,1,", 0) == 0);  // sample-major, time-descending

    const Trajectory loaded = load_trajectory_csv(path);
    CHECK(loaded.dim == 1);
    CHECK(loaded.sample_count() == 3);
    REQUIRE(loaded.times.size() == 3);
    for (std::size_t i = 0; i < loaded.times.size(); ++i) {
        CHECK(loaded.times[i] == doctest::Approx(rec.times()[i]).epsilon(1e-12));
        CHECK((loaded.states[i] - rec.states()[i]).cwiseAbs().maxCoeff() < 1e-10);
    }
    std::filesystem::remove_all(dir);
}
