from math import comb

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from hessquo.oracle import sigma_enumeration
from hessquo.symcone import (
    ConeError,
    chain_pairs,
    elementary_symmetric,
    in_gamma_k,
    maclaurin_ratio,
    maclaurin_ratios,
    newton_maclaurin_check,
    sigma_all,
    sigma_deleted,
    sigma_partial,
)

finite = st.floats(min_value=-50, max_value=50, allow_nan=False, allow_infinity=False)


@pytest.mark.parametrize(
    "lam, k, expected",
    [
        ((1, 1, 1), 2, 3.0),
        ((2, 1, 0), 2, 2.0),
        ((2, 1, 0), 0, 1.0),
        ((5, -3), 0, 1.0),
        ((1, 2, 3), 3, 6.0),
        ((1, 2, 3), 4, 0.0),
        ((1, 2, 3), -1, 0.0),
    ],
)
def test_elementary_symmetric_values(lam, k, expected):
    assert elementary_symmetric(lam, k) == expected


@pytest.mark.parametrize("n", range(1, 9))
def test_all_ones_gives_binomials(n):
    s = sigma_all(np.ones(n))
    assert s.tolist() == [comb(n, k) for k in range(n + 1)]


def test_rejects_bad_spectra():
    with pytest.raises(ValueError):
        elementary_symmetric([], 1)
    with pytest.raises(ValueError):
        elementary_symmetric([1.0, np.nan], 1)
    with pytest.raises(ValueError):
        elementary_symmetric([[1.0, 2.0]], 1)


@pytest.mark.parametrize(
    "k, i, expected",
    [(1, 0, 1.0), (2, 0, 1.0), (2, 1, 2.0), (3, 2, 2.0)],
)
def test_sigma_partial_examples(k, i, expected):
    # indices are 0-based: i=0 deletes the entry 2
    assert sigma_partial((2, 1, 0), k, i) == expected


def test_sigma_partial_symmetric_spectrum():
    assert [sigma_partial((1, 1, 1), 2, i) for i in range(3)] == [2.0, 2.0, 2.0]


def test_sigma_partial_index_checked():
    with pytest.raises(IndexError):
        sigma_partial((1, 2, 3), 2, 3)
    with pytest.raises(ValueError):
        sigma_partial((1, 2, 3), 0, 1)


def test_sigma_deleted_matches_np_delete():
    rng = np.random.default_rng(0)
    lam = rng.normal(size=6)
    dele = sigma_deleted(lam)
    for i in range(6):
        np.testing.assert_allclose(dele[i, :6], sigma_all(np.delete(lam, i)), rtol=1e-13, atol=1e-13)
        assert dele[i, 6] == 0.0


def test_cone_membership_examples():
    assert in_gamma_k((1, 1, 1), 3).member
    rep = in_gamma_k((-1, 3, 3), 2)
    assert rep.member and rep.margins == (5.0, 3.0)
    rep = in_gamma_k((-1, 3, 3), 3)
    assert not rep.member and rep.margins[-1] == -9.0
    for k in (1, 2, 3):
        assert not in_gamma_k((0, 0, 0), k).member


def test_maclaurin_ratio_examples():
    assert maclaurin_ratio((1, 1, 1), 2, 0) == pytest.approx(1.0, rel=1e-15)
    assert maclaurin_ratio((1, 1, 1), 2, 1) == pytest.approx(1.0, rel=1e-15)
    assert maclaurin_ratio((2, 1, 0), 2, 0) == pytest.approx((2 / 3) ** 0.5, rel=1e-15)


def test_maclaurin_ratio_needs_cone():
    with pytest.raises(ConeError):
        maclaurin_ratio((-1, 3, 3), 3, 0)


def test_newton_maclaurin_equal_spectrum():
    rep = newton_maclaurin_check((1, 1, 1), 2)
    assert rep.passed
    assert rep.ratio_to_sigma == pytest.approx(2 / 3, rel=1e-15)


def test_newton_maclaurin_sorted_spectrum():
    rep = newton_maclaurin_check((3, 2, 1), 2)
    assert rep.monotone and rep.passed
    assert rep.deleted == (3.0, 4.0, 5.0)


def test_newton_maclaurin_single_ratio():
    assert newton_maclaurin_check((1, 1), 1).passed


def test_newton_maclaurin_requires_descending_order():
    with pytest.raises(ValueError):
        newton_maclaurin_check((1, 2, 3), 2)


def test_chain_pairs_shape():
    pairs = chain_pairs(3)
    assert (3, 2, 1, 0) in pairs and (2, 1, 1, 0) in pairs
    for a, b, r, s in pairs:
        assert 3 >= a >= r and a > b >= s and r > s >= 0 and (a, b) != (r, s)


@settings(max_examples=200, deadline=None)
@given(st.lists(finite, min_size=1, max_size=8), st.integers(0, 8))
def test_dp_matches_enumeration(lam, k):
    lam = np.array(lam)
    ref = sigma_all(np.abs(lam))[min(k, lam.size)] if k <= lam.size else 1.0
    assert abs(elementary_symmetric(lam, k) - sigma_enumeration(lam, k)) <= 1e-12 * max(ref, 1e-300) + 1e-300


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(min_value=-1, max_value=5, allow_nan=False), min_size=3, max_size=5), st.integers(1, 5))
def test_maclaurin_chain_in_cone(lam, k):
    lam = np.sort(np.array(lam))[::-1]
    assume(k <= lam.size)
    assume(np.all(sigma_all(lam)[1 : k + 1] > 1e-6))
    rep = newton_maclaurin_check(lam, k, rtol=1e-10)
    assert not rep.chain_violations
    assert rep.monotone


def test_batched_ratios_agree_with_scalar():
    lam = np.array([[3.0, 2.0, 1.0], [1.0, 1.0, 0.5]])
    batch = maclaurin_ratios(lam, 3, 1)
    assert batch == pytest.approx([maclaurin_ratio(row, 3, 1) for row in lam], rel=1e-15)


def test_recursion_identity_batched():
    # sigma_k = sigma_k(lam|i) + lam_i sigma_{k-1}(lam|i), scaled by sigma_k(|lam|)
    rng = np.random.default_rng(7)
    for n in range(2, 9):
        lam = rng.normal(size=(100_000 // 7, n)) * rng.uniform(0.1, 10, size=(100_000 // 7, 1))
        full = sigma_all(lam)
        dele = sigma_deleted(lam)
        scale = sigma_all(np.abs(lam))
        for i in range(n):
            rebuilt = dele[:, i, 1:] + lam[:, i : i + 1] * dele[:, i, :-1]
            err = np.abs(full[:, 1:] - rebuilt) / np.maximum(scale[:, 1:], 1e-300)
            assert err.max() <= 1e-12


def test_partial_matches_central_difference():
    rng = np.random.default_rng(8)
    for _ in range(200):
        n = int(rng.integers(2, 9))
        lam = rng.normal(size=n)
        k = int(rng.integers(1, n + 1))
        i = int(rng.integers(0, n))
        h = 1e-5 * max(1.0, abs(lam[i]))
        up, dn = lam.copy(), lam.copy()
        up[i] += h
        dn[i] -= h
        fd = (elementary_symmetric(up, k) - elementary_symmetric(dn, k)) / (2 * h)
        exact = sigma_partial(lam, k, i)
        # sigma_k is affine in each entry, so the difference is exact up to rounding
        assert abs(fd - exact) <= 1e-6 * max(abs(exact), sigma_all(np.abs(np.delete(lam, i)))[k - 1])


def test_deleted_sums_nondecreasing_when_sorted():
    rng = np.random.default_rng(9)
    checked = 0
    for _ in range(2000):
        n = int(rng.integers(2, 7))
        k = int(rng.integers(1, n + 1))
        lam = np.sort(rng.uniform(-1, 4, size=n))[::-1]
        if not in_gamma_k(lam, k).member:
            continue
        d = sigma_deleted(lam)[:, k - 1]
        assert np.all(np.diff(d) >= 0)
        checked += 1
    assert checked > 500


@pytest.mark.parametrize("t", [0.3, 2.0, 11.0])
def test_maclaurin_ratio_scale_covariant(t):
    rng = np.random.default_rng(10)
    for n, k, l in [(3, 2, 0), (4, 3, 1), (5, 4, 2), (5, 1, 0)]:
        lam = rng.uniform(0.1, 3.0, size=n)
        r = maclaurin_ratio(lam, k, l)
        assert maclaurin_ratio(t * lam, k, l) == pytest.approx(t * r, rel=1e-12)
