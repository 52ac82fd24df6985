import jax.numpy as jnp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from pinnbench import diff_engine as de
from pinnbench.diff_engine import AnalyticField, eval_jet2, jet_batch, param_gradient
from pinnbench.errors import ConfigError, NumericError
from pinnbench.network import MLP, MLPConfig, init_glorot, tanh
from pinnbench.pde_suite import DomainBox, PDEProblem, PointCounts, get_problem


def fd_step(c):
    return 1e-4 * max(1.0, abs(c))


def fd_grad(f, x):
    """Central differences of a scalar or vector function along each coordinate of x."""
    x = np.asarray(x, dtype=np.float64)
    cols = []
    for i in range(x.size):
        h = fd_step(x[i])
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def rel_err(a, b, floor=1e-8):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), floor))


def random_mlp(seed, input_dim=None, output_dim=None):
    rng = np.random.default_rng(seed)
    d = input_dim or int(rng.integers(2, 6))
    m = output_dim or int(rng.choice([1, 3]))
    depth = int(rng.integers(1, 4))
    hidden = tuple(int(w) for w in rng.integers(2, 17, size=depth))
    cfg = MLPConfig(d, m, hidden)
    theta = init_glorot(cfg, seed)
    # nonzero biases so every code path is exercised
    theta = theta + 0.1 * rng.standard_normal(theta.size)
    return cfg, theta, rng


# --- eval_jet2 ---------------------------------------------------------------


def test_square_field():
    f = AnalyticField(lambda X: X[:, :1] ** 2 + 0.0 * X[:, 1:2], 2)
    (j,) = eval_jet2(f, [3.0, 0.0], None)
    assert j.value == 9.0
    np.testing.assert_allclose(j.grad, [6.0, 0.0])
    np.testing.assert_allclose(j.hess, [[2.0, 0.0], [0.0, 0.0]])


def test_sin_exp_field_symbolic():
    f = AnalyticField(lambda X: jnp.sin(X[:, :1]) * jnp.exp(-X[:, 1:2]), 2)
    (j,) = eval_jet2(f, [0.0, 0.0], None)
    assert j.value == 0.0
    np.testing.assert_allclose(j.grad, [1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(j.hess, [[0.0, -1.0], [-1.0, 0.0]], atol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_jets_match_finite_differences(seed):
    cfg, theta, rng = random_mlp(seed)
    net = MLP(cfg)
    for p in rng.uniform(-1, 1, size=(4, cfg.input_dim)):
        jets = eval_jet2(net, p, theta)
        g_fd = fd_grad(lambda q: np.asarray(net(q[None], theta))[0], p)  # (m, d)
        h_fd = fd_grad(lambda q: np.asarray(jet_batch(net, q, theta).grad)[0], p)  # (m, d, d)
        for k, j in enumerate(jets):
            assert rel_err(j.grad, g_fd[k]) < 1e-5
            assert rel_err(j.hess, h_fd[k]) < 1e-4


def test_mlp_jets_agree_with_nested_forward_mode():
    cfg, theta, rng = random_mlp(11, input_dim=3, output_dim=3)
    net = MLP(cfg)
    X = jnp.asarray(rng.uniform(-1, 1, size=(7, 3)))
    a = net.jets(X, theta, de.all_pairs(3))
    b = de._generic_jets(net, X, theta, de.all_pairs(3))
    np.testing.assert_allclose(a.value, b.value, atol=1e-13)
    np.testing.assert_allclose(a.grad, b.grad, atol=1e-13)
    for p in de.all_pairs(3):
        np.testing.assert_allclose(a.second[p], b.second[p], atol=1e-12)


def test_only_requested_pairs_are_propagated():
    cfg, theta, rng = random_mlp(3, input_dim=2, output_dim=1)
    jb = jet_batch(MLP(cfg), rng.uniform(size=(5, 2)), theta, [(0, 0)])
    jb.dd(0, 0, 0)
    with pytest.raises(KeyError):
        jb.dd(0, 0, 1)


def test_dimension_mismatch_is_config_error():
    cfg, theta, _ = random_mlp(0, input_dim=2)
    with pytest.raises(ConfigError):
        jet_batch(MLP(cfg), np.zeros((3, 4)), theta)
    with pytest.raises(ConfigError):
        jet_batch(MLP(cfg), np.zeros((3, 2)), theta, [(0, 5)])


@given(st.integers(0, 10_000))
def test_hessian_symmetry(seed):
    cfg, theta, rng = random_mlp(seed)
    H = np.asarray(jet_batch(MLP(cfg), rng.uniform(-1, 1, (3, cfg.input_dim)), theta).hess())
    np.testing.assert_allclose(H, np.swapaxes(H, -1, -2), atol=0)


@given(st.integers(0, 10_000), st.floats(-3, 3), st.floats(-3, 3))
def test_jet_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    cfg = MLPConfig(2, 1, (8,))
    t1, t2 = init_glorot(cfg, seed), init_glorot(cfg, seed + 1)
    f, g = MLP(cfg), MLP(cfg)
    h = AnalyticField(lambda X: a * f(X, t1) + b * g(X, t2), 2)
    X = rng.uniform(-1, 1, (4, 2))
    jf, jg, jh = jet_batch(f, X, t1), jet_batch(g, X, t2), jet_batch(h, X, None)
    np.testing.assert_allclose(jh.value, a * jf.value + b * jg.value, atol=1e-12)
    np.testing.assert_allclose(jh.grad, a * jf.grad + b * jg.grad, atol=1e-12)
    np.testing.assert_allclose(jh.hess(), a * jf.hess() + b * jg.hess(), atol=1e-12)


@given(st.floats(-20, 20))
def test_tanh_derivative_identity(z):
    import jax

    t, dt = jax.jvp(tanh, (jnp.float64(z),), (jnp.float64(1.0),))
    assert abs(float(dt) - (1 - float(t) ** 2)) < 1e-12
    assert abs(float(t) - np.tanh(z)) < 1e-14


def test_boundary_points_use_interior_formula():
    cfg, theta, _ = random_mlp(4, input_dim=2)
    net = MLP(cfg)
    p = np.array([1.0, 0.0])
    (j,) = eval_jet2(net, p, theta)[:1]
    g_fd = fd_grad(lambda q: np.asarray(net(q[None], theta))[0, 0], p)
    assert rel_err(j.grad, g_fd) < 1e-5


# --- parameter gradients -----------------------------------------------------


def test_param_gradient_quadratic():
    theta = np.array([1.0, -2.0, 0.5])
    np.testing.assert_allclose(param_gradient(lambda th: jnp.sum(th**2), theta), 2 * theta)


def test_param_gradient_constant():
    np.testing.assert_array_equal(param_gradient(lambda th: jnp.float64(3.0), np.ones(4)), np.zeros(4))


def test_param_gradient_nonfinite_raises():
    with pytest.raises(NumericError) as exc:
        param_gradient(lambda th: jnp.sum(th) / 0.0, np.ones(2), iteration=7)
    assert exc.value.iteration == 7


def test_param_gradient_of_second_derivative_loss():
    cfg = MLPConfig(2, 1, (6,))
    net = MLP(cfg)
    theta = init_glorot(cfg, 5) + 0.1
    p = np.array([[0.3, 0.7]])

    def loss(th):
        return jet_batch(net, p, th, [(0, 0)]).dd(0, 0, 0)[0] ** 2

    g = param_gradient(loss, theta)
    g_fd = fd_grad(lambda th: float(loss(th)), theta)
    assert rel_err(g, g_fd) < 1e-5


# --- input gradient of r^2 ------------------------------------------------------


def _synthetic_problem():
    box = DomainBox([-1.0, -1.0], [1.0, 1.0])
    return PDEProblem(
        name="synthetic", box=box, output_dim=1,
        residual=lambda X, jets, inv=None: X[:, :1],
        second_order=(), reference=None, counts=PointCounts(10), hidden=(4,),
    )


def test_input_gradient_of_synthetic_residual():
    prob = _synthetic_problem()
    f = AnalyticField(lambda X: jnp.zeros((X.shape[0], 1)), 2)
    g = de.input_gradient_sq_residual(prob, f, [0.4, -0.2], None)
    np.testing.assert_allclose(g, [0.8, 0.0])


def test_input_gradient_vanishes_on_exact_poisson():
    prob = get_problem("poisson")
    rng = np.random.default_rng(1)
    for p in rng.uniform(-1, 1, size=(5, 5)):
        g = de.input_gradient_sq_residual(prob, prob.exact_field, p, None)
        assert np.max(np.abs(g)) < 1e-6


@pytest.mark.parametrize("name", ["burgers", "poisson", "navier_stokes"])
def test_input_gradient_matches_fd(name):
    prob = get_problem(name)
    cfg = MLPConfig(prob.input_dim, prob.output_dim, (10, 10), n_inverse=prob.n_inverse)
    net = MLP(cfg)
    theta = init_glorot(cfg, 2, inverse_init=[0.9, 0.02] if prob.n_inverse else None)
    rng = np.random.default_rng(3)
    for p in prob.box.sample(4, rng):
        g = de.input_gradient_sq_residual(prob, net, p, theta)
        g_fd = fd_grad(lambda q: float(de.sq_residual(prob, net, q[None], theta)[0]), p)
        assert rel_err(g, g_fd) < 1e-4


def test_check_finite_rows_reports_points():
    G = np.array([[0.0, 1.0], [np.nan, 0.0]])
    with pytest.raises(NumericError) as exc:
        de.check_finite_rows(G, np.zeros((2, 2)))
    assert exc.value.point_ids == [1]
