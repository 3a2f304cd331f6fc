"""Penalized gradient solver, TV penalty and the AMSGrad optimizer."""

import numpy as np
import pytest

from mpibench.optim import Adam, AmsGrad
from mpibench.preprocess import ProcessedSystem
from mpibench.schedule import CheckpointSchedule
from mpibench.variational import PenaltyConfig, penalty_value_grad, tv_penalty, var_solve
from mpibench.volume import GridSpec


def test_tv_of_constant_is_zero():
    v, g = tv_penalty(np.full((4, 3, 5), 2.5), 1e-2)
    assert v == 0.0
    assert np.array_equal(g, np.zeros((4, 3, 5)))


def test_tv_gradient_matches_finite_differences():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((4, 3, 3))
    eps = 1e-2
    _, grad = tv_penalty(x, eps)
    h = 1e-6
    for idx in [(0, 0, 0), (1, 2, 1), (3, 0, 2), (2, 1, 1)]:
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        fd = (tv_penalty(xp, eps)[0] - tv_penalty(xm, eps)[0]) / (2 * h)
        assert abs(fd - grad[idx]) <= 1e-6 * max(1.0, abs(fd))


def test_tv_single_step_value():
    # one jump of height d along x: value is sqrt(d^2 + eps^2) - eps per column
    x = np.zeros((2, 2, 2))
    x[1] = 3.0
    eps = 0.5
    v, _ = tv_penalty(x, eps)
    assert v == pytest.approx(4 * (np.sqrt(9 + 0.25) - 0.5), rel=1e-12)


def test_tv_validation():
    with pytest.raises(ValueError):
        tv_penalty(np.zeros((2, 2, 2)), 0.0)
    with pytest.raises(ValueError):
        tv_penalty(np.zeros((2, 2)), 1e-2)


def test_penalty_config_validation():
    with pytest.raises(ValueError):
        PenaltyConfig(kind="huber")
    with pytest.raises(ValueError):
        PenaltyConfig(kind="l1", lam=-1.0)
    with pytest.raises(ValueError):
        PenaltyConfig(kind="tv", tv_epsilon=0.0)


def test_penalty_value_grad_kinds():
    rng = np.random.default_rng(2)
    c = rng.standard_normal((3, 2, 2))
    v2, g2 = penalty_value_grad(c, PenaltyConfig(kind="l2", lam=2.0))
    assert v2 == pytest.approx(np.sum(c * c))
    assert np.allclose(g2, 2.0 * c)
    v1, g1 = penalty_value_grad(c, PenaltyConfig(kind="l1", lam=3.0))
    assert v1 == pytest.approx(3.0 * np.abs(c).sum())
    assert np.allclose(g1, 3.0 * np.sign(c))
    # rho adds the quadratic term on top of any kind
    vr, gr = penalty_value_grad(c, PenaltyConfig(kind="l1", lam=0.0, rho=4.0))
    assert vr == pytest.approx(2.0 * np.sum(c * c))
    assert np.allclose(gr, 4.0 * c)


def test_var_solve_matches_normal_equations():
    # strictly interior quadratic fixture: nonnegativity never binds
    rng = np.random.default_rng(5)
    Q, _ = np.linalg.qr(rng.standard_normal((12, 12)))
    c_true = 0.3 * rng.uniform(0.5, 1.5, 12)
    A = Q
    y = A @ c_true
    lam = 0.05
    grid = GridSpec(3, 2, 2, (3.0, 2.0, 2.0), (0.0, 0.0, 0.0))
    sys = ProcessedSystem(A=A, y=y, grid=grid)
    tr = var_solve(sys, fidelity_p=2, penalty=PenaltyConfig(kind="l2", lam=lam),
                   iterations=500, lr=1e-2)
    direct = np.linalg.solve(A.T @ A + lam * np.eye(12), A.T @ y)
    assert direct.min() > 0.05  # interior
    got = tr.final().volume.flat
    assert np.linalg.norm(got - direct) / np.linalg.norm(direct) <= 1e-6


def test_var_solve_deterministic(small_system):
    pen = PenaltyConfig(kind="tv", lam=1e-3)
    a = var_solve(small_system, 2, pen, iterations=30)
    b = var_solve(small_system, 2, pen, iterations=30)
    for ca, cb in zip(a.checkpoints, b.checkpoints):
        assert np.array_equal(ca.volume.values, cb.volume.values)


def test_var_solve_p1_runs_and_is_nonneg(small_system):
    tr = var_solve(small_system, 1, PenaltyConfig(kind="l1", lam=1e-3), iterations=40)
    assert tr.final().volume.values.min() >= 0.0
    assert tr.checkpoints[0].fidelity > tr.final().fidelity


def test_var_solve_schedule_and_validation(small_system):
    tr = var_solve(small_system, 2, PenaltyConfig(kind="l2", lam=0.0),
                   iterations=10, schedule=CheckpointSchedule((3, 7, 10)))
    assert tr.iterations == [3, 7, 10]
    with pytest.raises(ValueError):
        var_solve(small_system, 3, PenaltyConfig(kind="l2"))
    with pytest.raises(ValueError):
        var_solve(small_system, 2, PenaltyConfig(kind="l2"), iterations=0)


def test_adam_first_step_is_lr_sized():
    # bias correction makes the first step exactly lr * sign(g)
    opt = Adam(lr=0.1)
    x = np.zeros(3)
    g = np.array([1.0, -2.0, 0.5])
    out = opt.step(x, g)
    assert np.allclose(out, -0.1 * np.sign(g), atol=1e-6)


def test_amsgrad_keeps_max_second_moment():
    opt = AmsGrad(lr=0.1)
    x = np.zeros(1)
    x = opt.step(x, np.array([10.0]))
    # a later tiny gradient cannot blow the step back up: vmax keeps the max
    x2 = opt.step(x, np.array([1e-8]))
    assert abs(x2[0] - x[0]) < 0.1 * 1.0
    assert opt.vmax[0] >= opt.v[0]
    with pytest.raises(ValueError):
        AmsGrad(lr=0.0)
    with pytest.raises(ValueError):
        Adam(lr=0.1, momenta=(1.0, 0.999))


def test_optimizers_deterministic():
    rng = np.random.default_rng(1)
    g = rng.standard_normal((5, 4))
    a = AmsGrad(lr=0.01)
    b = AmsGrad(lr=0.01)
    xa = np.zeros(4)
    xb = np.zeros(4)
    for i in range(5):
        xa = a.step(xa, g[i])
        xb = b.step(xb, g[i])
    assert np.array_equal(xa, xb)
