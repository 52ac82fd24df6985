import io
from itertools import combinations_with_replacement

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from pinnbench.errors import ConfigError
from pinnbench.pde_suite import DomainBox
from pinnbench.samplers import (
    BaselineSamplerConfig,
    CollocationSet,
    balanced_counts,
    expected_events,
    hammersley,
    hammersley_unit,
    rad_resample,
    rad_weights,
    radical_inverse,
    rar_step,
    rard_step,
    read_snapshots,
    resample_random,
    uniform_grid,
    weighted_sample_without_replacement,
    write_snapshot,
)

UNIT2 = DomainBox([0.0, 0.0], [1.0, 1.0])
BURGERS_BOX = DomainBox([-1.0, 0.0], [1.0, 1.0])


def brute_balanced(n, d, max_ratio=2.0):
    """Exhaustive search over all per-axis count multisets."""
    best = None
    # no axis count can exceed n / 2^(d-1) since the others are >= 2
    for c in combinations_with_replacement(range(2, n // 2 ** (d - 1) + 1), d):
        p = int(np.prod(c))
        if p > n or max(c) > max_ratio * min(c):
            continue
        key = (p, -max(c) / min(c))
        if best is None or key > best[0]:
            best = (key, tuple(sorted(c, reverse=True)))
    return best[1]


def brute_radical_inverse(i, base):
    digits = []
    while i:
        digits.append(i % base)
        i //= base
    return sum(dg * base ** -(k + 1) for k, dg in enumerate(digits))


# --- static layouts ----------------------------------------------------------------


def test_uniform_grid_small_cases():
    g4 = uniform_grid(4, UNIT2)
    assert sorted(map(tuple, g4.points)) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    g9 = uniform_grid(9, UNIT2)
    assert len(g9) == 9
    np.testing.assert_array_equal(np.unique(g9.points[:, 0]), [0.0, 0.5, 1.0])


def test_uniform_grid_burgers_size():
    g = uniform_grid(2500, BURGERS_BOX)
    assert len(g) == 2500
    assert len(np.unique(g.points[:, 0])) == 50 and len(np.unique(g.points[:, 1])) == 50
    assert (g.origin == "initial").all()


@pytest.mark.parametrize("n,d", [(10, 2), (50, 2), (99, 2), (30, 3), (130, 3), (200, 4)])
def test_balanced_counts_match_brute_force(n, d):
    assert balanced_counts(n, d) == brute_balanced(n, d)


def test_balanced_counts_too_few_points():
    with pytest.raises(ConfigError):
        balanced_counts(3, 2)


def test_hammersley_small_case():
    np.testing.assert_array_equal(
        hammersley(4, UNIT2).points, [[0, 0], [0.25, 0.5], [0.5, 0.25], [0.75, 0.75]]
    )


def test_radical_inverse_against_brute_force():
    assert radical_inverse(3, 2) == 0.75
    for base in (2, 3, 5, 7):
        for i in range(200):
            assert abs(radical_inverse(i, base) - brute_radical_inverse(i, base)) < 1e-15


def test_hammersley_unit_cube_and_bases():
    U = hammersley_unit(1000, 5)
    assert U.min() >= 0 and U.max() < 1
    np.testing.assert_array_equal(U[:, 0], np.arange(1000) / 1000)
    np.testing.assert_array_equal(U[:, 4], radical_inverse(np.arange(1000), 7))


def test_resample_random_statistics():
    a = resample_random(10_000, BURGERS_BOX, 5)
    b = resample_random(10_000, BURGERS_BOX, 5)
    np.testing.assert_array_equal(a.points, b.points)
    assert BURGERS_BOX.contains(a.points).all()
    sd = BURGERS_BOX.width / np.sqrt(12) / np.sqrt(10_000)
    assert np.all(np.abs(a.points.mean(axis=0) - BURGERS_BOX.center) < 3 * sd)


# --- residual-driven strategies -------------------------------------------------


def test_rar_step_examples():
    base = CollocationSet.initial(np.zeros((2, 2)))
    pool = np.array([[0.1, 0.1], [0.2, 0.2], [0.3, 0.3]])
    out = rar_step(base, pool, [1.0, 5.0, 3.0], 1)
    np.testing.assert_array_equal(out.points[-1], pool[1])
    assert list(out.origin) == ["initial", "initial", "added"]
    np.testing.assert_array_equal(rar_step(base, pool, [1, 5, 3], 0).points, base.points)
    tie = rar_step(base, pool, [2.0, 7.0, 7.0], 1)
    np.testing.assert_array_equal(tie.points[-1], pool[1])


def test_rad_weights_formula():
    np.testing.assert_allclose(rad_weights([1.0, 3.0], k=1, c=1), [1.5, 2.5])
    np.testing.assert_allclose(rad_weights([1.0, 3.0], k=2, c=0), [0.2, 1.8])


def test_rad_equal_residuals_gives_uniform_draw():
    pool_n, reps, n = 10, 10_000, 1
    pool = np.arange(pool_n, dtype=float)[:, None].repeat(2, axis=1) / pool_n
    rng = np.random.default_rng(0)
    counts = np.zeros(pool_n)
    for _ in range(reps):
        pick = rad_resample(n, pool, np.ones(pool_n), 1.0, 1.0, rng).points[0, 0]
        counts[int(round(pick * pool_n))] += 1
    assert stats.chisquare(counts).pvalue > 0.01


def test_rad_large_offset_ignores_residuals():
    w = rad_weights([0.0, 100.0, 3.0], k=1, c=1e12)
    np.testing.assert_allclose(w / w.sum(), 1 / 3, rtol=1e-9)


def test_rad_zero_residual_point_is_never_first():
    pool = np.array([[0.0, 0.0], [1.0, 1.0]])
    for seed in range(50):
        idx = weighted_sample_without_replacement(rad_weights([0.0, 2.0], 1, 0), 1, seed)
        assert idx[0] == 1
        assert rad_resample(1, pool, [0.0, 2.0], 1, 0, seed).points.tolist() == [[1.0, 1.0]]


def test_rad_pool_too_small():
    with pytest.raises(ConfigError):
        rad_resample(5, np.zeros((3, 2)), np.ones(3))


def test_weighted_sampling_marginals():
    # first-draw frequencies are proportional to the weights
    w = np.array([1.0, 2.0, 3.0, 4.0])
    rng = np.random.default_rng(1)
    first = np.bincount([weighted_sample_without_replacement(w, 2, rng)[0] for _ in range(20_000)], minlength=4)
    assert stats.chisquare(first, 20_000 * w / w.sum()).pvalue > 0.01


def test_rard_step_appends_from_pool():
    base = CollocationSet.initial(np.full((3, 2), 0.5))
    pool = np.random.default_rng(2).uniform(size=(40, 2))
    r = np.random.default_rng(3).uniform(size=40)
    out = rard_step(base, pool, r, 4, seed=9)
    assert len(out) == 7
    assert all(any(np.array_equal(p, q) for q in pool) for p in out.points[3:])
    np.testing.assert_array_equal(rard_step(base, pool, r, 0).points, base.points)
    np.testing.assert_array_equal(out.points, rard_step(base, pool, r, 4, seed=9).points)


@given(st.integers(0, 10_000), st.integers(0, 5))
def test_growth_and_containment(seed, m):
    rng = np.random.default_rng(seed)
    base = resample_random(20, BURGERS_BOX, rng)
    pool = BURGERS_BOX.sample(200, rng)
    r = rng.uniform(size=200)
    for out in (rar_step(base, pool, r, m), rard_step(base, pool, r, m, seed=seed)):
        assert len(out) == len(base) + m
        assert BURGERS_BOX.contains(out.points).all()
        np.testing.assert_array_equal(out.points[:20], base.points)
    rad = rad_resample(20, pool, r, 1.0, 1.0, seed)
    assert len(rad) == 20 and BURGERS_BOX.contains(rad.points).all()
    np.testing.assert_array_equal(rad.points, rad_resample(20, pool, r, 1.0, 1.0, seed).points)


# --- containers and config -----------------------------------------------------


def test_collocation_set_validation():
    with pytest.raises(ConfigError):
        CollocationSet(np.zeros((0, 2)), "initial")
    with pytest.raises(ConfigError):
        CollocationSet(np.zeros((2, 2)), ["initial"])
    with pytest.raises(ConfigError):
        CollocationSet(np.zeros((1, 2)), "moved")
    with pytest.raises(AssertionError):
        CollocationSet.initial([[2.0, 0.5]]).check(UNIT2)


def test_baseline_config_validation():
    assert BaselineSamplerConfig("rad").pool_size(2500) == 25_000
    for bad in (dict(kind="pacmann"), dict(kind="rar", rar_add=0), dict(kind="rad", pool_factor=5)):
        with pytest.raises(ConfigError):
            BaselineSamplerConfig(**bad)


def test_expected_events():
    assert expected_events(7000, 50, 1) == 140
    assert expected_events(2000, 50, 2) == 80
    assert expected_events(99, 50, 3) == 3


def test_snapshot_round_trip(tmp_path):
    a = hammersley(6, BURGERS_BOX)
    b = a.extended([[0.1, 0.2]])
    fh = io.StringIO()
    write_snapshot(fh, 0, a, header=True)
    write_snapshot(fh, 50, b)
    assert fh.getvalue().splitlines()[0] == "iteration,point_id,origin,c0,c1"
    p = tmp_path / "s.csv"
    p.write_text(fh.getvalue())
    snaps = read_snapshots(p)
    assert list(snaps) == [0, 50]
    np.testing.assert_array_equal(snaps[0].points, a.points)
    assert snaps[50].origin[-1] == "added"
