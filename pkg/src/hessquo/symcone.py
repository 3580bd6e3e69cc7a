"""
Elementary symmetric functions and Garding cones
~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~
sigma_k of a real vector, its partial derivatives sigma_{k-1}(lam|i), membership
in the cone Gamma_k = {sigma_1 > 0, ..., sigma_k > 0} and the Newton-Maclaurin
quotients.

All batched helpers broadcast over leading axes: a spectrum is the last axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np


class ConeError(ValueError):
    """Raised when a spectrum lies outside the cone an operation needs."""


def as_spectrum(lam) -> np.ndarray:
    """Validate a single spectrum: 1-d, length >= 1, finite."""
    lam = np.asarray(lam, dtype=float)
    if lam.ndim != 1 or lam.size == 0:
        raise ValueError(f"spectrum must be a non-empty 1-d sequence, got shape {lam.shape}")
    if not np.all(np.isfinite(lam)):
        raise ValueError("spectrum entries must be finite")
    return lam


def sigma_all(lam) -> np.ndarray:
    """
    All elementary symmetric functions sigma_0..sigma_n.

    Uses the prefix recurrence ``s_j <- s_j + x * s_{j-1}``, O(n^2) per spectrum.

    Parameters
    ----------
    lam : array_like, shape (..., n)

    Returns
    -------
    ndarray, shape (..., n + 1)
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    out = np.zeros(lam.shape[:-1] + (n + 1,))
    out[..., 0] = 1.0
    for i in range(n):
        x = lam[..., i]
        # descending j so s_{j-1} is still the previous prefix value
        for j in range(i + 1, 0, -1):
            out[..., j] += x * out[..., j - 1]
    return out


def sigma(lam, k: int) -> np.ndarray:
    """Batched sigma_k with the sigma_0 = 1, sigma_{k<0 or k>n} = 0 convention."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if k < 0 or k > n:
        return np.zeros(lam.shape[:-1])
    return sigma_all(lam)[..., k]


def sigma_deleted(lam) -> np.ndarray:
    """
    sigma_j(lam | i) for every deleted index i and every order j.

    Returns
    -------
    ndarray, shape (..., n, n + 1)
        ``out[..., i, j]`` is sigma_j of lam with entry i removed; the last
        column (j = n) is always zero.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    out = np.zeros(lam.shape[:-1] + (n, n + 1))
    for i in range(n):
        rest = np.delete(lam, i, axis=-1)
        out[..., i, :n] = sigma_all(rest)
    return out


def elementary_symmetric(lam, k: int) -> float:
    """
    sigma_k(lam) for a single spectrum.

    Total in ``k``: returns 1 for k = 0 and 0 for k < 0 or k > n.

    >>> elementary_symmetric([2.0, 1.0, 0.0], 2)
    2.0
    """
    lam = as_spectrum(lam)
    return float(sigma(lam, k))


def sigma_partial(lam, k: int, i: int) -> float:
    """
    d sigma_k / d lam_i, i.e. sigma_{k-1} of lam with entry ``i`` deleted.

    ``i`` is a 0-based index.
    """
    lam = as_spectrum(lam)
    n = lam.size
    if not 0 <= i < n:
        raise IndexError(f"index {i} out of range for spectrum of length {n}")
    if not 1 <= k <= n:
        raise ValueError(f"order k={k} must satisfy 1 <= k <= {n}")
    return float(sigma(np.delete(lam, i), k - 1))


@dataclass(frozen=True)
class ConeReport:
    """Membership of a spectrum in Gamma_k, with sigma_1..sigma_k as margins."""

    k: int
    member: bool
    margins: tuple[float, ...] = field(default_factory=tuple)

    @property
    def min_margin(self) -> float:
        return min(self.margins) if self.margins else float("inf")


def cone_margins(lam, k: int) -> np.ndarray:
    """Batched sigma_1..sigma_k, shape (..., k)."""
    return sigma_all(lam)[..., 1 : k + 1]


def in_gamma_k(lam, k: int) -> ConeReport:
    """Strict membership test lam in Gamma_k (no tolerance)."""
    lam = as_spectrum(lam)
    if not 1 <= k <= lam.size:
        raise ValueError(f"cone order k={k} must satisfy 1 <= k <= {lam.size}")
    margins = cone_margins(lam, k)
    return ConeReport(k=k, member=bool(np.all(margins > 0)), margins=tuple(float(m) for m in margins))


def _check_pair(n: int, k: int, l: int) -> None:
    if not 0 <= l < k <= n:
        raise ValueError(f"need 0 <= l < k <= n, got k={k}, l={l}, n={n}")


def maclaurin_ratios(lam, k: int, l: int) -> np.ndarray:
    """
    Batched normalized quotient [(sigma_k/C(n,k)) / (sigma_l/C(n,l))]^(1/(k-l)).

    No cone check; entries outside Gamma_k come back as nan or garbage.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    _check_pair(n, k, l)
    s = sigma_all(lam)
    q = (s[..., k] / comb(n, k)) / (s[..., l] / comb(n, l))
    with np.errstate(invalid="ignore"):
        return q ** (1.0 / (k - l))


def maclaurin_ratio(lam, k: int, l: int) -> float:
    """
    Newton-Maclaurin quotient of orders (k, l) for lam in Gamma_k.

    Equals 1 on the all-ones spectrum and is positively homogeneous of degree 1.
    """
    lam = as_spectrum(lam)
    _check_pair(lam.size, k, l)
    rep = in_gamma_k(lam, k)
    if not rep.member:
        raise ConeError(f"spectrum not in Gamma_{k}: margins {rep.margins}")
    return float(maclaurin_ratios(lam, k, l))


def chain_pairs(k: int) -> list[tuple[int, int, int, int]]:
    """All (a, b, r, s) with k >= a >= r, a > b >= s, r > s >= 0 and (a,b) != (r,s)."""
    out = []
    for a in range(1, k + 1):
        for b in range(a):
            for r in range(1, a + 1):
                for s in range(min(r, b + 1)):
                    if (a, b) != (r, s):
                        out.append((a, b, r, s))
    return out


@dataclass
class NewtonMaclaurinReport:
    """
    Diagnostics for a sorted spectrum in Gamma_k.

    ``chain_violations`` lists (a, b, r, s, lhs, rhs) for every pair where
    ratio(a, b) > ratio(r, s) beyond relative rounding; ``monotone`` is True
    when sigma_{k-1}(lam|i) is nondecreasing in i. The two raw ratios stand in
    for the unspecified constant C(n, k).
    """

    k: int
    chain_violations: list
    monotone: bool
    deleted: tuple[float, ...]
    ratio_to_sigma: float
    ratio_to_sum: float

    @property
    def passed(self) -> bool:
        return self.monotone and not self.chain_violations


def newton_maclaurin_check(lam, k: int, rtol: float = 1e-12) -> NewtonMaclaurinReport:
    lam = as_spectrum(lam)
    n = lam.size
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must satisfy 1 <= k <= {n}")
    if np.any(np.diff(lam) > 0):
        raise ValueError("spectrum must be sorted in descending order")
    rep = in_gamma_k(lam, k)
    if not rep.member:
        raise ConeError(f"spectrum not in Gamma_{k}: margins {rep.margins}")

    violations = []
    for a, b, r, s in chain_pairs(k):
        lhs = float(maclaurin_ratios(lam, a, b))
        rhs = float(maclaurin_ratios(lam, r, s))
        if lhs > rhs * (1 + rtol):
            violations.append((a, b, r, s, lhs, rhs))

    deleted = sigma_deleted(lam)[:, k - 1]
    slack = rtol * float(np.max(np.abs(deleted)))
    monotone = bool(np.all(np.diff(deleted) >= -slack))
    total = float(sigma(lam, k - 1))
    return NewtonMaclaurinReport(
        k=k,
        chain_violations=violations,
        monotone=monotone,
        deleted=tuple(float(d) for d in deleted),
        ratio_to_sigma=float(deleted[k - 1] / total),
        ratio_to_sum=float(deleted[k - 1] / deleted.sum()),
    )
