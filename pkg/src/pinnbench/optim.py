"""Parameter optimizers: Adam update and L-BFGS with a strong-Wolfe line search."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def adam_param_step(theta, grad, m, v, t: int, lr: float,
                    b1: float = ADAM_BETA1, b2: float = ADAM_BETA2, eps: float = ADAM_EPS):
    """One bias-corrected Adam descent step.

    Works on numpy or jax arrays.  ``t`` is the 1-based index of this step.
    Returns the new (theta, m, v).
    """
    m = b1 * m + (1.0 - b1) * grad
    v = b2 * v + (1.0 - b2) * grad * grad
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    return theta - lr * m_hat / ((v_hat) ** 0.5 + eps), m, v


# --- L-BFGS -----------------------------------------------------------------

Objective = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass
class LBFGSState:
    x: np.ndarray
    f: float
    g: np.ndarray
    history: int = 50
    s_hist: deque = field(default=None)
    y_hist: deque = field(default=None)
    iteration: int = 0
    n_evals: int = 0
    n_skipped: int = 0
    warnings: list = field(default_factory=list)
    converged: bool = False

    def __post_init__(self):
        if self.s_hist is None:
            self.s_hist = deque(maxlen=self.history)
            self.y_hist = deque(maxlen=self.history)

    def clear_history(self):
        self.s_hist.clear()
        self.y_hist.clear()


def lbfgs_init(fun: Objective, x0, history: int = 50) -> LBFGSState:
    x0 = np.array(x0, dtype=np.float64)
    f, g = fun(x0)
    return LBFGSState(x0, float(f), np.asarray(g, dtype=np.float64), history=history, n_evals=1)


def two_loop(g, s_hist, y_hist) -> np.ndarray:
    """Return H g for the L-BFGS inverse-Hessian approximation H."""
    q = g.copy()
    rhos = [1.0 / float(y @ s) for s, y in zip(s_hist, y_hist)]
    alphas = []
    for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rhos)):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y, rho), a in zip(zip(s_hist, y_hist, rhos), reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return q


def _cubic_interpolate(x1, f1, g1, x2, f2, g2, lo, hi):
    d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2)
    d2_sq = d1 * d1 - g1 * g2
    if d2_sq >= 0.0:
        d2 = math.sqrt(d2_sq)
        if x1 <= x2:
            t = x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
        else:
            t = x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2))
        if math.isfinite(t):
            return min(max(t, lo), hi)
    return 0.5 * (lo + hi)


@dataclass
class LineSearchResult:
    t: float
    f: float
    g: np.ndarray
    n_evals: int
    wolfe: bool
    decrease: bool


def strong_wolfe(fun: Objective, x, t, d, f, g, c1=1e-4, c2=0.9, max_trials=25, tol_change=1e-12) -> LineSearchResult:
    """Bracketing/zoom line search for the strong Wolfe conditions.

    Returns the best point seen if the trial budget runs out; ``wolfe``
    tells whether both conditions hold and ``decrease`` whether the
    sufficient-decrease condition does.
    """
    gtd = float(g @ d)
    d_norm = float(np.max(np.abs(d)))
    n = 0

    def evaluate(step):
        nonlocal n
        n += 1
        fn, gn = fun(x + step * d)
        gn = np.asarray(gn, dtype=np.float64)
        return float(fn), gn, float(gn @ d)

    def armijo(step, fs):
        return math.isfinite(fs) and fs <= f + c1 * step * gtd

    best = (0.0, f, g)

    def consider(step, fs, gs):
        nonlocal best
        if armijo(step, fs) and fs < best[1]:
            best = (step, fs, gs)

    t_prev, f_prev, gtd_prev = 0.0, f, gtd
    f_new, g_new, gtd_new = evaluate(t)
    bracket = None
    while n < max_trials:
        consider(t, f_new, g_new)
        if not armijo(t, f_new) or (t_prev > 0 and f_new >= f_prev):
            bracket = [(t_prev, f_prev, gtd_prev), (t, f_new, gtd_new, g_new)]
            break
        if abs(gtd_new) <= -c2 * gtd:
            return LineSearchResult(t, f_new, g_new, n, True, True)
        if gtd_new >= 0:
            bracket = [(t_prev, f_prev, gtd_prev), (t, f_new, gtd_new, g_new)]
            break
        lo = t + 0.01 * (t - t_prev)
        hi = 10.0 * t
        t_next = _cubic_interpolate(t_prev, f_prev, gtd_prev, t, f_new, gtd_new, lo, hi)
        t_prev, f_prev, gtd_prev = t, f_new, gtd_new
        t = t_next
        f_new, g_new, gtd_new = evaluate(t)
    else:
        consider(t, f_new, g_new)

    if bracket is not None:
        (a_t, a_f, a_gtd), (b_t, b_f, b_gtd, _) = bracket
        # invariant: the "low" end a satisfies Armijo and has the smaller f
        if not (armijo(a_t, a_f) or a_t == 0.0) or (b_f < a_f and armijo(b_t, b_f)):
            a_t, a_f, a_gtd, b_t, b_f, b_gtd = b_t, b_f, b_gtd, a_t, a_f, a_gtd
        while n < max_trials:
            if abs(b_t - a_t) * d_norm < tol_change:
                break
            lo, hi = min(a_t, b_t), max(a_t, b_t)
            width = hi - lo
            t = _cubic_interpolate(a_t, a_f, a_gtd, b_t, b_f, b_gtd, lo, hi)
            # keep trials away from the bracket ends
            if min(hi - t, t - lo) < 0.1 * width:
                t = lo + 0.5 * width if abs(t - hi) < abs(t - lo) or abs(t - lo) < 0.1 * width else t
            f_new, g_new, gtd_new = evaluate(t)
            consider(t, f_new, g_new)
            if not armijo(t, f_new) or f_new >= a_f:
                b_t, b_f, b_gtd = t, f_new, gtd_new
            else:
                if abs(gtd_new) <= -c2 * gtd:
                    return LineSearchResult(t, f_new, g_new, n, True, True)
                if gtd_new * (b_t - a_t) >= 0:
                    b_t, b_f, b_gtd = a_t, a_f, a_gtd
                a_t, a_f, a_gtd = t, f_new, gtd_new

    bt, bf, bg = best
    return LineSearchResult(bt, bf, bg, n, False, bt > 0)


def lbfgs_step(state: LBFGSState, fun: Objective, *, c1=1e-4, c2=0.9, max_trials=25,
               gtol=1e-12, curvature_eps=1e-10, fallback_step=1e-3) -> LBFGSState:
    """Advance ``state`` by one quasi-Newton iteration (in place; also returned)."""
    if state.converged:
        return state
    g = state.g
    if float(np.linalg.norm(g)) <= gtol:
        state.converged = True
        return state

    d = -two_loop(g, state.s_hist, state.y_hist)
    gtd = float(g @ d)
    if not gtd < 0 or not np.all(np.isfinite(d)):
        state.clear_history()
        d = -g
        gtd = float(g @ d)
    if state.s_hist:
        t0 = 1.0
    else:
        t0 = min(1.0, 1.0 / float(np.sum(np.abs(g))))

    ls = strong_wolfe(fun, state.x, t0, d, state.f, g, c1=c1, c2=c2, max_trials=max_trials)
    state.n_evals += ls.n_evals

    if ls.decrease:
        t, f_new, g_new = ls.t, ls.f, ls.g
        x_new = state.x + t * d
    else:
        # bounded steepest-descent fallback with halving
        msg = f"line search failed at iteration {state.iteration}; taking a bounded gradient step"
        state.warnings.append(msg)
        state.clear_history()
        gn = float(np.linalg.norm(g))
        step = fallback_step / max(gn, 1e-300)
        x_new, f_new, g_new = state.x, state.f, g
        for _ in range(30):
            cand = state.x - step * g
            fc, gc = fun(cand)
            state.n_evals += 1
            if math.isfinite(fc) and fc < state.f:
                x_new, f_new, g_new = cand, float(fc), np.asarray(gc, dtype=np.float64)
                break
            step *= 0.5
        else:
            # no decrease along -g either: the iterate is stalled at round-off
            state.converged = True

    s = x_new - state.x
    y = g_new - g
    ys = float(y @ s)
    if ys > curvature_eps * float(np.linalg.norm(y)) * float(np.linalg.norm(s)):
        state.s_hist.append(s)
        state.y_hist.append(y)
    else:
        state.n_skipped += 1

    state.x, state.f, state.g = x_new, f_new, g_new
    state.iteration += 1
    if float(np.linalg.norm(g_new)) <= gtol:
        state.converged = True
    return state


def lbfgs_minimize(fun: Objective, x0, max_iter: int = 100, history: int = 50, gtol: float = 1e-12,
                   callback=None, **kw) -> LBFGSState:
    state = lbfgs_init(fun, x0, history)
    for _ in range(max_iter):
        if state.converged:
            break
        lbfgs_step(state, fun, gtol=gtol, **kw)
        if callback is not None:
            callback(state)
    return state
