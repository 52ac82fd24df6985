import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pinnbench.errors import ConfigError, NumericError
from pinnbench.pacmann import (
    OPTIMIZERS,
    PHI,
    PacmannConfig,
    PointOptimizerState,
    golden_section_bracket,
    golden_section_move,
    inner_step,
    move_points,
    pacmann_move,
)
from pinnbench.pde_suite import DomainBox, get_problem
from pinnbench.samplers import CollocationSet, hammersley

SQUARE = DomainBox([-1.0, -1.0], [1.0, 1.0])
STEPWISE = [k for k in OPTIMIZERS if k != "golden_section"]


def one_step(kind, x, g, s, **kw):
    cfg = PacmannConfig(optimizer=kind, stepsize=s, **kw)
    st_ = PointOptimizerState.zeros(1, 1)
    return float(inner_step(kind, [[x]], [[g]], st_, cfg)[0, 0])


# --- first-step closed forms ------------------------------------------------------


def test_first_step_closed_forms():
    assert abs(one_step("gradient_ascent", 0.5, 2.0, 0.1) - 0.7) < 1e-15
    assert abs(one_step("nonlinear_ga", 0.0, 1000.0, 0.1) - 0.1) < 1e-15
    assert abs(one_step("momentum", 0.0, 1.0, 0.01) - 0.001) < 1e-15
    assert abs(one_step("rmsprop", 0.0, 1.0, 1e-3) - 1e-3 / math.sqrt(0.001 + 1e-8)) < 1e-15
    assert abs(one_step("rmsprop", 0.0, 1.0, 1e-3) - 0.031623) < 1e-6


@given(st.floats(-1e3, 1e3).filter(lambda g: abs(g) > 1e-2), st.floats(1e-6, 1.0))
def test_adam_first_step_is_sign_step(g, s):
    moved = one_step("adam", 0.0, g, s)
    assert abs(moved - s * math.copysign(1.0, g)) <= s * 1e-8 / g**2 + 1e-15


# --- three-step trajectories against straight-line oracles ----------------------------


def oracle_trajectory(kind, x0, a, s, steps=3):
    """Scalar reimplementation on r^2(x) = -(x - a)^2 + 4 (gradient -2(x - a))."""
    x, V, S = x0, 0.0, 0.0
    for i in range(1, steps + 1):
        g = -2.0 * (x - a)
        if kind == "gradient_ascent":
            x = x + s * g
        elif kind == "nonlinear_ga":
            x = x + s * math.tanh(g)
        elif kind == "rmsprop":
            S = 0.999 * S + 0.001 * g * g
            x = x + s * g / math.sqrt(S + 1e-8)
        elif kind == "momentum":
            V = 0.9 * V + 0.1 * g
            x = x + s * V
        elif kind == "adam":
            V = 0.9 * V + 0.1 * g
            S = 0.999 * S + 0.001 * g * g
            x = x + s * (V / (1 - 0.9**i)) / math.sqrt(S / (1 - 0.999**i) + 1e-8)
    return x


@pytest.mark.parametrize("kind", STEPWISE)
def test_three_step_trajectories(kind):
    rng = np.random.default_rng(4)
    x0 = rng.uniform(-1, 1, size=(6, 2))
    a = np.array([0.3, -0.2])
    cfg = PacmannConfig(optimizer=kind, stepsize=0.05)
    state = PointOptimizerState.zeros(6, 2)
    x = x0.copy()
    for _ in range(3):
        x = inner_step(kind, x, -2.0 * (x - a), state, cfg)
    for i in range(6):
        for j in range(2):
            assert abs(x[i, j] - oracle_trajectory(kind, x0[i, j], a[j], 0.05)) < 1e-12


def test_nonfinite_gradient_flags_point():
    cfg = PacmannConfig(optimizer="gradient_ascent", stepsize=0.1)
    state = PointOptimizerState.zeros(2, 2)
    x = np.zeros((2, 2))
    out = inner_step("gradient_ascent", x, [[1.0, 1.0], [np.nan, 0.0]], state, cfg)
    np.testing.assert_array_equal(out[1], [0.0, 0.0])
    assert list(state.flagged) == [False, True]


def test_inactive_rows_keep_buffers():
    cfg = PacmannConfig(optimizer="adam", stepsize=0.1)
    state = PointOptimizerState.zeros(2, 1)
    out = inner_step("adam", [[0.0], [0.0]], [[1.0], [1.0]], state, cfg, active=[True, False])
    assert out[1, 0] == 0.0 and state.V[1, 0] == 0.0 and state.V[0, 0] != 0.0


def test_config_validation():
    with pytest.raises(ConfigError):
        PacmannConfig(optimizer="lbfgs")
    with pytest.raises(ConfigError):
        PacmannConfig(stepsize=-1.0)
    with pytest.raises(ConfigError):
        PacmannConfig(steps=-1)
    with pytest.raises(ConfigError):
        inner_step("golden_section", [[0.0]], [[1.0]], PointOptimizerState.zeros(1, 1), PacmannConfig())


# --- golden section --------------------------------------------------------------


def test_golden_section_single_shrink():
    a, b = golden_section_bracket([[0.0]], [[1.0]], lambda X: -((X[:, 0] - 0.3) ** 2), 1.0, 1)
    assert abs((b - a)[0, 0] - 1 / PHI) < 1e-15


def test_golden_section_finds_maximum():
    f = lambda X: -((X[:, 0] - 0.3) ** 2)
    grid = np.linspace(0, 1, 1_000_001)
    best = grid[np.argmax(-((grid - 0.3) ** 2))]
    x = golden_section_move([[0.0]], [[1.0]], f, 1.0, 20)
    assert abs(x[0, 0] - best) < 3 * PHI**-20


@pytest.mark.parametrize("T", [1, 3, 10])
def test_golden_section_constant_objective(T):
    # every tie shifts the bracket right, so it closes in on the far end
    x = golden_section_move([[0.0, 0.0]], [[2.0, 0.0]], lambda X: np.zeros(len(X)), 0.5, T)
    expected = 1.0 - PHI**-T / 2
    np.testing.assert_allclose(x, [[expected, 0.0]], atol=1e-14)


def test_golden_section_zero_gradient_stays():
    x = golden_section_move([[0.2, 0.4]], [[0.0, 0.0]], lambda X: X[:, 0], 1.0, 5)
    np.testing.assert_array_equal(x, [[0.2, 0.4]])


def test_golden_section_needs_one_iteration():
    with pytest.raises(ConfigError):
        golden_section_bracket([[0.0]], [[1.0]], lambda X: X[:, 0], 1.0, 0)


# --- movement events on synthetic landscapes ------------------------------------------


def bump(X):
    X = np.asarray(X)
    return np.exp(-(X[:, 0] ** 2 + X[:, 1] ** 2))


def bump_grad(X):
    X = np.asarray(X)
    return -2.0 * X * bump(X)[:, None]


def test_identity_at_zero_stepsize_or_steps():
    cset = hammersley(50, SQUARE)
    for cfg in (PacmannConfig(stepsize=0.0, steps=5), PacmannConfig(stepsize=0.1, steps=0)):
        out, rep = move_points(cset, SQUARE, cfg, bump_grad, bump, 0)
        np.testing.assert_array_equal(out.points, cset.points)
        assert rep.n_replaced == 0


def test_gradient_ascent_moves_toward_peak():
    cset = hammersley(200, SQUARE)
    cfg = PacmannConfig(optimizer="gradient_ascent", stepsize=1e-3, steps=5)
    out, rep = move_points(cset, SQUARE, cfg, bump_grad, bump, 0)
    assert rep.n_replaced == 0
    r0 = np.linalg.norm(cset.points, axis=1)
    r1 = np.linalg.norm(out.points, axis=1)
    assert np.all(r1 <= r0)
    assert bump(out.points).mean() >= bump(cset.points).mean()


def test_escaping_point_is_replaced_inside():
    # the first point exits on step 1, the second on step 11
    cset = CollocationSet.initial([[0.99, 0.0], [0.0, 0.0]])
    cfg = PacmannConfig(optimizer="gradient_ascent", stepsize=0.1, steps=12)
    out, rep = move_points(cset, SQUARE, cfg, lambda X: np.tile([1.0, 0.0], (len(X), 1)), None, 0)
    assert list(out.origin) == ["replaced", "replaced"]
    assert rep.n_replaced == 2 and SQUARE.contains(out.points).all()


def test_nonfinite_gradient_raises_with_point_ids():
    cset = CollocationSet.initial([[0.1, 0.1], [0.2, 0.2]])

    def grad(X):
        G = np.zeros_like(X)
        G[1] = np.inf
        return G

    with pytest.raises(NumericError) as exc:
        move_points(cset, SQUARE, PacmannConfig(stepsize=0.1, steps=2), grad, bump, 0)
    assert exc.value.point_ids == [1]


@given(st.integers(0, 1000), st.sampled_from(OPTIMIZERS), st.floats(1e-4, 0.5), st.integers(0, 6))
def test_move_invariants(seed, kind, s, T):
    rng = np.random.default_rng(seed)
    cset = CollocationSet.initial(SQUARE.sample(30, rng))
    cfg = PacmannConfig(optimizer=kind, stepsize=s, steps=T)
    out, rep = move_points(cset, SQUARE, cfg, bump_grad, bump, seed)
    again, _ = move_points(cset, SQUARE, cfg, bump_grad, bump, seed)
    assert len(out) == len(cset)
    assert SQUARE.contains(out.points).all()
    np.testing.assert_array_equal(out.points, again.points)
    assert rep.n_replaced == int((out.origin == "replaced").sum())


def test_pacmann_move_on_network_field():
    from pinnbench.network import MLP, MLPConfig, init_glorot

    prob = get_problem("burgers")
    cfg = MLPConfig(2, 1, (8, 8))
    theta = init_glorot(cfg, 0)
    cset = hammersley(40, prob.box)
    out = pacmann_move(cset, prob, MLP(cfg), theta, PacmannConfig(stepsize=1e-3, steps=3), 1)
    again = pacmann_move(cset, prob, MLP(cfg), theta, PacmannConfig(stepsize=1e-3, steps=3), 1)
    assert len(out) == 40 and prob.box.contains(out.points).all()
    np.testing.assert_array_equal(out.points, again.points)
    assert not np.array_equal(out.points, cset.points)
