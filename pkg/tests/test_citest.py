from __future__ import annotations

import itertools

import numpy as np
import pytest

from mosacd.citest import (
    DegenerateTestError,
    NoiseParams,
    chi2_sf,
    g2_test,
    noisy_oracle_test,
    oracle_test,
)
from mosacd.data import Dataset
from mosacd.graph import Dag, d_separated, random_dag


def quadrature_chi2_sf(statistic: float, dof: int) -> float:
    """Independent tail oracle: integrate the gamma density directly."""
    import mpmath

    mpmath.mp.dps = 40
    a = mpmath.mpf(dof) / 2
    x = mpmath.mpf(statistic) / 2
    integrand = lambda t: mpmath.e ** (-t) * t ** (a - 1)
    upper = mpmath.quad(integrand, [x, mpmath.inf])
    return float(upper / mpmath.gamma(a))


def make_dataset(columns, rows):
    return Dataset.from_rows(columns, rows)


# -- chi-square tail ----------------------------------------------------------


def test_chi2_tail_reference_point():
    assert chi2_sf(3.841, 1) == pytest.approx(0.0500, abs=1e-3)


@pytest.mark.parametrize("stat,dof", [(0.5, 1), (3.841, 1), (10.0, 4), (25.0, 10), (150.0, 100)])
def test_chi2_tail_matches_quadrature(stat, dof):
    assert chi2_sf(stat, dof) == pytest.approx(quadrature_chi2_sf(stat, dof), rel=1e-10)


def test_chi2_tail_validates():
    with pytest.raises(ValueError):
        chi2_sf(1.0, 0)
    with pytest.raises(ValueError):
        chi2_sf(-1.0, 2)


# -- G2 ------------------------------------------------------------------------


def test_g2_exact_product_counts_gives_zero():
    # 2x2 table with O = E everywhere: counts 10,10 / 10,10
    rows = []
    for a in "01":
        for b in "01":
            rows += [[a, b]] * 10
    ds = make_dataset(["x", "y"], rows)
    res = g2_test(ds, 0, 1, set())
    assert res.statistic == pytest.approx(0.0, abs=1e-12)
    assert res.p_value == pytest.approx(1.0)
    assert res.independent
    assert res.dof == 1


def test_g2_detects_deterministic_dependence():
    rows = [["0", "0"]] * 50 + [["1", "1"]] * 50
    ds = make_dataset(["x", "y"], rows)
    res = g2_test(ds, 0, 1, set())
    assert not res.independent
    assert res.p_value < 1e-6


def test_g2_symmetric_in_x_y(rng):
    rows = [
        [str(rng.integers(0, 3)), str(rng.integers(0, 2)), str(rng.integers(0, 2))]
        for _ in range(300)
    ]
    ds = make_dataset(["a", "b", "c"], rows)
    r1 = g2_test(ds, 0, 1, {2})
    r2 = g2_test(ds, 1, 0, {2})
    assert r1.statistic == pytest.approx(r2.statistic)
    assert r1.dof == r2.dof
    assert r1.p_value == pytest.approx(r2.p_value)


def test_g2_invariant_under_category_relabeling(rng):
    rows = [[str(rng.integers(0, 3)), str(rng.integers(0, 3))] for _ in range(400)]
    ds = make_dataset(["a", "b"], rows)
    relabeled = [[{"0": "zz", "1": "aa", "2": "mm"}[r[0]], r[1]] for r in rows]
    ds2 = make_dataset(["a", "b"], relabeled)
    r1 = g2_test(ds, 0, 1, set())
    r2 = g2_test(ds2, 0, 1, set())
    assert r1.statistic == pytest.approx(r2.statistic)
    assert r1.dof == r2.dof


def test_g2_zero_count_strata_dropped():
    # conditioning variable has 3 levels but only 2 appear with data
    rows = [["0", "0", "a"], ["0", "1", "a"], ["1", "0", "b"], ["1", "1", "b"]] * 20
    ds = make_dataset(["x", "y", "s"], rows)
    res = g2_test(ds, 0, 1, {2})
    assert res.dof == 2  # one (2-1)(2-1) block per occupied stratum


def test_g2_degenerate_single_level_column():
    rows = [["0", "x"], ["0", "y"]] * 5
    ds = make_dataset(["a", "b"], rows)
    with pytest.raises(DegenerateTestError):
        g2_test(ds, 0, 1, set())


def test_g2_input_validation():
    ds = make_dataset(["a", "b"], [["0", "1"], ["1", "0"]])
    with pytest.raises(ValueError):
        g2_test(ds, 0, 1, set(), threshold=1.5)
    with pytest.raises(ValueError):
        g2_test(ds, 0, 0, set())
    with pytest.raises(ValueError):
        g2_test(ds, 0, 1, {0})


def test_g2_calibration_independent_coins():
    # smaller companion to the acceptance-scale run: 200 resamples of n=2000
    rng = np.random.default_rng(11)
    resamples, n = 200, 2000
    rejections = 0
    for _ in range(resamples):
        codes = rng.integers(0, 2, size=(n, 2)).astype(np.int32)
        ds = Dataset(["a", "b"], codes, [["0", "1"], ["0", "1"]])
        if not g2_test(ds, 0, 1, set(), threshold=0.05).independent:
            rejections += 1
    rate = rejections / resamples
    sigma = np.sqrt(0.05 * 0.95 / resamples)
    assert abs(rate - 0.05) < 3 * sigma


# -- oracle -----------------------------------------------------------------------


def test_oracle_collider_and_chain():
    collider = Dag(3, [(0, 2), (1, 2)])
    res = oracle_test(collider, 0, 1, set())
    assert res.independent and res.p_value == 1.0
    chain = Dag(3, [(0, 2), (2, 1)])
    res = oracle_test(chain, 0, 1, set())
    assert not res.independent and res.p_value == 0.0


def test_oracle_matches_d_separation(rng):
    for _ in range(10):
        g = random_dag(6, 0.4, rng)
        for x, y in itertools.combinations(range(6), 2):
            rest = [v for v in range(6) if v not in (x, y)]
            for k in range(3):
                for s in itertools.combinations(rest, k):
                    assert oracle_test(g, x, y, s).independent == d_separated(g, x, y, s)


def test_oracle_faithfulness_and_markov(rng):
    # adjacent pairs never independent; d-separated pairs always are
    for _ in range(10):
        g = random_dag(6, 0.5, rng)
        for x, y in itertools.combinations(range(6), 2):
            rest = [v for v in range(6) if v not in (x, y)]
            for s in itertools.combinations(rest, 2):
                res = oracle_test(g, x, y, s)
                if g.adjacent(x, y):
                    assert not res.independent
                if d_separated(g, x, y, s):
                    assert res.independent


# -- noisy oracle --------------------------------------------------------------------


def test_noisy_zero_rates_match_oracle(rng):
    noise = NoiseParams(alpha=0.0, beta=0.0, rng_seed=9)
    for _ in range(5):
        g = random_dag(5, 0.4, rng)
        for x, y in itertools.combinations(range(5), 2):
            assert (
                noisy_oracle_test(g, x, y, set(), noise).independent
                == oracle_test(g, x, y, set()).independent
            )


def test_noisy_alpha_one_flips_all_dependences():
    g = Dag(3, [(0, 2), (2, 1)])
    noise = NoiseParams(alpha=1.0, beta=0.0, rng_seed=4)
    res = noisy_oracle_test(g, 0, 1, set(), noise)
    assert res.independent


def test_noisy_deterministic_and_symmetric():
    g = Dag(4, [(0, 1), (1, 2), (2, 3)])
    noise = NoiseParams(alpha=0.3, beta=0.3, rng_seed=123)
    a = noisy_oracle_test(g, 0, 3, {1}, noise)
    b = noisy_oracle_test(g, 0, 3, {1}, noise)
    c = noisy_oracle_test(g, 3, 0, {1}, noise)
    assert a == b == c


def test_noisy_flip_rates_within_3_sigma():
    # chains give dependence, disconnected pairs independence
    alpha, beta = 0.05, 0.10
    n_queries = 10_000
    dep_flips = 0
    indep_flips = 0
    rng = np.random.default_rng(0)
    for i in range(n_queries):
        seed = int(rng.integers(0, 2**31))
        noise = NoiseParams(alpha=alpha, beta=beta, rng_seed=seed)
        dep_graph = Dag(3, [(0, 2), (2, 1)])
        if noisy_oracle_test(dep_graph, 0, 1, set(), noise).independent:
            dep_flips += 1
        indep_graph = Dag(3, [(0, 2)])
        if not noisy_oracle_test(indep_graph, 0, 1, set(), noise).independent:
            indep_flips += 1
    for observed, p in ((dep_flips, alpha), (indep_flips, beta)):
        rate = observed / n_queries
        sigma = np.sqrt(p * (1 - p) / n_queries)
        assert abs(rate - p) < 3 * sigma


def test_noise_params_validate():
    with pytest.raises(ValueError):
        NoiseParams(alpha=-0.1, beta=0.0)
