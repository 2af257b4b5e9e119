import numpy as np
import pytest

from rabisense.collapse import (
    CollapseDataset,
    CollapseSet,
    NoOverlapError,
    collapse_measure,
    collapse_measure_known,
    optimize_collapse,
    quality_factor,
    weighted_collapse_measure,
)


def master(x):
    return 1.0 + 0.5 * x + 0.1 * x ** 2


def synthetic_dataset(a=2.0, b=1.0, Ls=(10.0, 20.0, 40.0), n=60, lo=0.05, hi=4.0,
                      noise=0.0, rng=None):
    """Family generated exactly as A = h^a f(h / L^b)."""
    sets = []
    for L in Ls:
        x = np.geomspace(lo, hi, n)
        h = x * L ** b
        A = h ** a * master(x)
        if noise and rng is not None:
            A = A * (1.0 + noise * rng.standard_normal(n))
        sets.append(CollapseSet(L=L, h=h, A=A))
    return CollapseDataset(tuple(sets))


def test_known_measure_zero_on_exact_data():
    data = synthetic_dataset()
    assert collapse_measure_known(data, 2.0, 1.0, master) == pytest.approx(0.0, abs=1e-14)


def test_known_measure_single_point_perturbation():
    data = synthetic_dataset(Ls=(10.0, 20.0), n=25)
    bumped = []
    for k, s in enumerate(data.sets):
        A = s.A.copy()
        if k == 0:
            A[7] *= 1.1
        bumped.append(CollapseSet(s.L, s.h, A))
    data2 = CollapseDataset(tuple(bumped))
    n_total = sum(s.h.size for s in data2.sets)
    # one relative residual of 0.1: M_kn = 0.1/sqrt(N)
    assert collapse_measure_known(data2, 2.0, 1.0, master) == pytest.approx(
        0.1 / np.sqrt(n_total))


def test_known_measure_wrong_exponent_positive():
    data = synthetic_dataset()
    assert collapse_measure_known(data, 3.0, 1.0, master) > 0.01


def test_known_measure_zero_division():
    data = synthetic_dataset()
    with pytest.raises(ZeroDivisionError):
        collapse_measure_known(data, 2.0, 1.0, lambda x: x - x)


def test_interpolation_measure_small_on_master_curve():
    # two sets sampled from one smooth curve: M below the interpolation-error bound
    data = synthetic_dataset(Ls=(10.0, 30.0), n=100)
    res = collapse_measure(data, 2.0, 1.0)
    assert res.valid
    assert res.measure < 1e-3


def test_interpolation_measure_matches_known_on_dense_data():
    data = synthetic_dataset(n=160)
    m_interp = collapse_measure(data, 2.0, 1.0).measure
    m_known = collapse_measure_known(data, 2.0, 1.0, master)
    assert m_interp == pytest.approx(m_known, abs=1e-3)


def test_self_comparison_excluded():
    # identical L values are rejected, so self-pairs cannot enter at all
    with pytest.raises(ValueError):
        CollapseDataset((CollapseSet(10.0, np.array([1.0, 2.0]), np.array([1.0, 2.0])),
                         CollapseSet(10.0, np.array([1.0, 2.0]), np.array([1.0, 2.0]))))
    # contributions diagonal stays empty
    data = synthetic_dataset(Ls=(10.0, 20.0))
    res = collapse_measure(data, 2.0, 1.0)
    assert np.all(np.diag(res.contributions) == 0.0)


def test_disjoint_ranges_error():
    s1 = CollapseSet(10.0, np.array([1.0, 2.0, 3.0]), np.array([1.0, 2.0, 3.0]))
    s2 = CollapseSet(20.0, np.array([100.0, 200.0, 300.0]), np.array([1.0, 2.0, 3.0]))
    with pytest.raises(NoOverlapError):
        collapse_measure(CollapseDataset((s1, s2)), 0.0, 0.0)


def test_measure_invariant_under_relabeling():
    data = synthetic_dataset(noise=0.03, rng=np.random.default_rng(1))
    m1 = collapse_measure(data, 2.0, 1.0).measure
    reordered = CollapseDataset(tuple(reversed(data.sets)))
    m2 = collapse_measure(reordered, 2.0, 1.0).measure
    assert m1 == pytest.approx(m2, rel=1e-12)


def test_measure_scaling_units_invariance():
    # h -> c·h with A -> c^a·A leaves the measure unchanged
    rng = np.random.default_rng(2)
    data = synthetic_dataset(noise=0.05, rng=rng)
    c, a = 3.7, 2.0
    rescaled = CollapseDataset(tuple(
        CollapseSet(s.L, c * s.h, c ** a * s.A) for s in data.sets))
    m1 = collapse_measure(data, a, 1.0).measure
    m2 = collapse_measure(rescaled, a, 1.0).measure
    assert m1 == pytest.approx(m2, rel=1e-9)


def test_optimize_collapse_recovers_planted_exponents():
    data = synthetic_dataset(a=2.0, b=1.0)
    res = optimize_collapse(data, a_range=(1.4, 2.6), b_range=(0.5, 1.5))
    assert abs(res.a - 2.0) < 0.05
    assert abs(res.b - 1.0) < 0.05
    assert not res.boundary_warning


def test_optimize_collapse_flat_data_boundary_warning():
    # constant family collapses on the whole degenerate valley a·b = 0:
    # the exponents are unidentifiable and the optimum hugs a range edge
    sets = tuple(CollapseSet(L, np.linspace(1.0, 5.0, 30), np.full(30, 7.0))
                 for L in (10.0, 20.0, 40.0))
    res = optimize_collapse(CollapseDataset(sets), a_range=(-0.5, 0.5),
                            b_range=(0.0, 1.5))
    assert res.measure < 1e-10
    assert min(abs(res.a), abs(res.b)) < 0.05
    assert res.boundary_warning


def test_quality_factor_self_ratio():
    data = synthetic_dataset(noise=0.05, rng=np.random.default_rng(3))
    assert quality_factor(data, data) == pytest.approx(1.0)


def test_quality_factor_degrades_under_noise():
    rng = np.random.default_rng(4)
    ideal = synthetic_dataset(noise=0.01, rng=rng)
    noisy = CollapseDataset(tuple(
        CollapseSet(s.L, s.h, s.A * (1.0 + 0.2 * rng.standard_normal(s.A.size)))
        for s in ideal.sets))
    q = quality_factor(noisy, ideal)
    assert q < 1.0


def test_quality_factor_perfect_noisy_infinite():
    exact = synthetic_dataset()
    wobbly = synthetic_dataset(noise=0.05, rng=np.random.default_rng(6))
    assert quality_factor(exact, wobbly) == float("inf")


def test_csv_round_trip():
    data = synthetic_dataset(Ls=(10.0, 20.0), n=12)
    text = data.to_csv()
    back = CollapseDataset.from_csv(text)
    assert len(back.sets) == 2
    for s1, s2 in zip(data.sets, back.sets):
        assert s1.L == s2.L
        assert np.allclose(s1.h, s2.h)
        assert np.allclose(s1.A, s2.A)


def test_weighted_variant_requires_sigma():
    data = synthetic_dataset()
    with pytest.raises(ValueError):
        weighted_collapse_measure(data, 2.0, 1.0)
    with_sigma = CollapseDataset(tuple(
        CollapseSet(s.L, s.h, s.A, sigma=0.01 * np.abs(s.A) + 1e-12)
        for s in data.sets))
    res = weighted_collapse_measure(with_sigma, 2.0, 1.0)
    assert res.measure >= 0.0


def test_dataset_validation():
    with pytest.raises(ValueError):
        CollapseSet(10.0, np.array([2.0, 1.0]), np.array([1.0, 2.0]))  # not increasing
    with pytest.raises(ValueError):
        CollapseDataset((CollapseSet(10.0, np.array([1.0, 2.0]), np.array([1.0, 2.0])),))
