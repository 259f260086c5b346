"""Python smoke tests for the _pdmd extension module."""

import math

import numpy as np
import pytest

try:
    import pdmd
except ImportError:
    import _pdmd as pdmd


@pytest.fixture(scope="module")
def rf():
    return pdmd.NoiseSchedule("rectified_flow")


def test_schedule_values(rf):
    alpha, sigma = pdmd.coeffs(rf, 0.25)
    assert alpha == pytest.approx(0.75)
    assert sigma == pytest.approx(0.25)
    a_ts, s_ts = pdmd.bridge_coeffs(rf, 0.5, 0.75)
    assert a_ts == pytest.approx(0.5)
    assert s_ts == pytest.approx(math.sqrt(0.5))
    assert pdmd.snr(rf, 0.2) > pdmd.snr(rf, 0.8)
    with pytest.raises(Exception):
        pdmd.coeffs(rf, 1.5)


def test_diffuse_shapes(rf):
    x0 = np.full((8, 1), 2.0)
    eps = np.zeros((8, 1))
    out = pdmd.diffuse(rf, x0, eps, 0.5)
    assert out.shape == (8, 1)
    assert np.allclose(out, 1.0)
    two_stage = pdmd.diffuse_from(rf, out, eps, 0.5, 0.75)
    assert np.allclose(two_stage, 0.5)


def test_analytic_velocity_single_atom(rf):
    prior = pdmd.ToyPrior.point_atoms([0.7])
    x = np.array([[0.0], [1.0], [-2.0]])
    v = pdmd.analytic_velocity(prior, rf, x, 0.5)
    expected = (x - 0.5 * 0.7) / 0.5 - 0.7
    assert np.allclose(v, expected, atol=1e-12)


def test_esm_residual_zero_at_optimum(rf):
    prior = pdmd.ToyPrior.four_atoms()
    x = np.linspace(-2, 3, 21).reshape(-1, 1)
    psi = pdmd.analytic_velocity(prior, rf, x, 0.6)
    score = pdmd.analytic_score(prior, rf, x, 0.6)
    res = pdmd.esm_residual(rf, psi, x, score, 0.6)
    assert np.max(np.abs(res)) < 1e-9


def test_subinterval_target_values(rf):
    eps_c, xs_c, sigma_ts = pdmd.subinterval_coeffs(rf, 0.5, 0.75)
    assert eps_c == pytest.approx(math.sqrt(2.0))
    assert xs_c == pytest.approx(2.0)
    assert sigma_ts == pytest.approx(math.sqrt(0.5))
    lam, w = pdmd.dmd_weight(rf, 0.5, 0.75)
    assert lam == pytest.approx(1.0 / 3.0)
    assert w == pytest.approx(1.0 / 6.0)


def test_wasserstein_and_coverage():
    a = np.array([0.0, 0.0, 1.0, 1.0])
    b = np.array([0.0, 1.0, 1.0, 2.0])
    assert pdmd.wasserstein1(a, b) == pytest.approx(0.5)
    prior = pdmd.ToyPrior.four_atoms()
    samples = prior.sample(5000, seed=1)
    masses = pdmd.mode_coverage(samples, prior, 0.25)
    assert masses.shape == (5,)
    assert masses.sum() == pytest.approx(1.0)
    assert abs(masses[0] - 0.25) < 0.03


def test_net_forward_gradcheck_checkpoint(tmp_path, rf):
    net = pdmd.TimeConditionedNet(dim=1, hidden=32, hidden_layers=2, seed=3)
    x = np.random.default_rng(0).normal(size=(16, 1))
    t = np.random.default_rng(1).uniform(0, 1, size=16)
    y = net.forward(x, t)
    assert y.shape == (16, 1)
    assert np.all(np.isfinite(y))
    assert pdmd.grad_check(net, x, t, seed=2) < 1e-5

    path = tmp_path / "net.pdmd"
    net.save(path)
    loaded = pdmd.TimeConditionedNet.load(path)
    assert np.array_equal(loaded.forward(x, t), y)


def test_pipeline_with_trained_tiny_teacher(rf):
    prior = pdmd.ToyPrior.point_atoms([0.8])
    net, mse, ok = pdmd.pretrain_teacher(prior, rf, steps=1200, batch=64, lr=2e-3,
                                         hidden=32, hidden_layers=2, seed=4)
    eps = np.random.default_rng(5).normal(size=(256, 1))
    out = pdmd.sample_pipeline([net, net], steps=4, phases=2, interval_mode="reverse_nested",
                               schedule=rf, eps=eps)
    assert out.shape == (256, 1)
    assert np.all(np.isfinite(out))
    # even a lightly trained one-atom teacher pulls mass toward the atom
    assert abs(np.mean(out) - 0.8) < 0.25


def test_cli_main_gate_failure(tmp_path):
    code = pdmd.cli_main([
        "train-teacher", "--out", str(tmp_path / "run"), "--set", "teacher.steps=0",
        "--set", "prior.atoms=0.4", "--set", "net.hidden=16", "--set", "net.layers=2",
    ])
    assert code == 1
    assert (tmp_path / "run" / "teacher_report.json").exists()
