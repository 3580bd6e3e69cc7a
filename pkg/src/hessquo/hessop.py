"""
Hessian quotient operator on symmetric matrices.

For a Hessian M with spectrum lam the operator acts on the transformed
spectrum

    eta_i = gamma * sum(lam) + sign * lam_i

(the eigenvalues of U = gamma * tr(M) I + sign * M) through
F = sigma_k(eta) / sigma_l(eta) and its normalized form F~ = F^(1/(k-l)).
Everything is evaluated through the spectrum; matrix derivatives are rotated
back with the eigenframe.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .symcone import ConeError, ConeReport, as_spectrum, sigma_all, sigma_deleted


@dataclass(frozen=True)
class OperatorSpec:
    """
    Parameters of sigma_k/sigma_l(gamma * tr(M) I + sign * M).

    ``sign=-1`` is the main form gamma*Lap(u) I - D^2 u and requires gamma >= 1
    with k < n, or k = n when gamma > 1. ``sign=+1`` accepts any gamma > 0 and
    0 <= l < k <= n.
    """

    n: int
    k: int
    l: int = 0
    gamma: float = 1.0
    sign: int = -1

    def __post_init__(self):
        n, k, l, gamma, sign = self.n, self.k, self.l, self.gamma, self.sign
        if int(n) != n or n < 2:
            raise ValueError(f"dimension n must be an integer >= 2, got {n}")
        if not (0 <= l < k <= n):
            raise ValueError(f"orders must satisfy 0 <= l < k <= n, got k={k}, l={l}, n={n}")
        if sign not in (-1, 1):
            raise ValueError(f"sign must be -1 or +1, got {sign}")
        if not np.isfinite(gamma):
            raise ValueError("gamma must be finite")
        if sign == -1:
            if gamma < 1:
                raise ValueError(f"sign=-1 requires gamma >= 1, got {gamma}")
            if k == n and not gamma > 1:
                raise ValueError(f"sign=-1 requires k < n (k = n only when gamma > 1); got k={k}, n={n}, gamma={gamma}")
        elif gamma <= 0:
            raise ValueError(f"sign=+1 requires gamma > 0, got {gamma}")

    @property
    def degree(self) -> int:
        """Homogeneity degree k - l of F."""
        return self.k - self.l

    @property
    def trace_factor(self) -> float:
        """sum(eta) / sum(lam) = gamma * n + sign."""
        return self.gamma * self.n + self.sign

    def _check_dim(self, n: int) -> None:
        if n != self.n:
            raise ValueError(f"operator built for n={self.n}, got spectrum of length {n}")


class SpectralData(NamedTuple):
    eigenvalues: np.ndarray  # descending
    frame: np.ndarray  # columns are eigenvectors
    clusters: list


def spectral_data(M, rel_split: float = 1e-12) -> SpectralData:
    """Symmetric eigendecomposition, eigenvalues descending, with degeneracy clusters."""
    M = _as_symmetric(M)
    w, Q = np.linalg.eigh(M)
    w, Q = w[::-1], Q[:, ::-1]
    return SpectralData(w, Q, _clusters(w, rel_split * max(np.abs(M).max(), 1e-300)))


def _clusters(w: np.ndarray, thresh: float) -> list:
    groups = [[0]]
    for i in range(1, w.size):
        if abs(w[i - 1] - w[i]) <= thresh:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def _as_symmetric(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix entries must be finite")
    if not np.array_equal(M, M.T):
        raise ValueError("matrix must be exactly symmetric")
    return M


def transformed_spectrum(lam, spec: OperatorSpec) -> np.ndarray:
    """eta = gamma * sigma_1(lam) + sign * lam, batched over leading axes."""
    lam = np.asarray(lam, dtype=float)
    return spec.gamma * lam.sum(axis=-1, keepdims=True) + spec.sign * lam


def spectrum_from_eta(eta, spec: OperatorSpec) -> np.ndarray:
    """Inverse of :func:`transformed_spectrum` (gamma * n + sign is never zero for a valid spec)."""
    eta = np.asarray(eta, dtype=float)
    s1 = eta.sum(axis=-1, keepdims=True) / spec.trace_factor
    return spec.sign * (eta - spec.gamma * s1)


def in_admissible_cone(lam, spec: OperatorSpec) -> ConeReport:
    """lam in Gamma~_k, i.e. eta(lam) in Gamma_k."""
    lam = as_spectrum(lam)
    spec._check_dim(lam.size)
    margins = sigma_all(transformed_spectrum(lam, spec))[1 : spec.k + 1]
    return ConeReport(spec.k, bool(np.all(margins > 0)), tuple(float(m) for m in margins))


class SpectralEval(NamedTuple):
    """Batched operator evaluation on spectra (leading axes preserved)."""

    eta: np.ndarray
    margins: np.ndarray  # sigma_1..sigma_k of eta
    member: np.ndarray
    F: np.ndarray
    dF_deta: np.ndarray
    dF_dlam: np.ndarray


def evaluate_spectrum(lam, spec: OperatorSpec) -> SpectralEval:
    """
    F and its first derivatives in eta and in lam, batched.

    dF/deta_i = (sigma_{k-1}(eta|i) sigma_l - sigma_k sigma_{l-1}(eta|i)) / sigma_l^2
    dF/dlam_q = gamma * sum_i dF/deta_i + sign * dF/deta_q
    """
    lam = np.asarray(lam, dtype=float)
    spec._check_dim(lam.shape[-1])
    k, l = spec.k, spec.l
    eta = transformed_spectrum(lam, spec)
    s = sigma_all(eta)
    margins = s[..., 1 : k + 1]
    member = np.all(margins > 0, axis=-1)
    sk, sl = s[..., k], s[..., l]
    dele = sigma_deleted(eta)
    dk = dele[..., k - 1]
    dl = dele[..., l - 1] if l >= 1 else np.zeros_like(dk)
    with np.errstate(divide="ignore", invalid="ignore"):
        F = sk / sl
        g = (dk * sl[..., None] - sk[..., None] * dl) / (sl**2)[..., None]
    dlam = spec.gamma * g.sum(axis=-1, keepdims=True) + spec.sign * g
    return SpectralEval(eta, margins, member, F, g, dlam)


def _require_member(ev: SpectralEval) -> None:
    if not np.all(ev.member):
        bad = np.argwhere(~np.atleast_1d(ev.member))
        raise ConeError(
            f"spectrum outside the admissible cone at {len(bad)} point(s); "
            f"first margins {np.atleast_2d(ev.margins)[bad[0][0]].tolist()}"
        )


def quotient_value(M, spec: OperatorSpec) -> float:
    """F(M) = sigma_k(eta) / sigma_l(eta) with eta the transformed spectrum of M."""
    lam = spectral_data(M).eigenvalues
    ev = evaluate_spectrum(lam, spec)
    _require_member(ev)
    return float(ev.F)


def normalized_value(M, spec: OperatorSpec) -> float:
    """F~(M) = F(M)^(1/(k-l)), positively homogeneous of degree 1."""
    return quotient_value(M, spec) ** (1.0 / spec.degree)


def _outer_factor(F, degree: int):
    # d(F^(1/m))/dF
    return (1.0 / degree) * F ** (1.0 / degree - 1.0)


def gradient_matrix(M, spec: OperatorSpec, normalized: bool = False) -> np.ndarray:
    """
    dF/dM_ij (or dF~/dM_ij) at an admissible symmetric M.

    The result G satisfies dF = sum_ij G_ij dM_ij for symmetric perturbations.
    Within a cluster of (numerically) repeated eigenvalues the per-eigenvalue
    derivatives are averaged before rotating back, so the result does not depend
    on the arbitrary basis chosen inside an eigenspace.
    """
    sd = spectral_data(M)
    ev = evaluate_spectrum(sd.eigenvalues, spec)
    _require_member(ev)
    d = ev.dF_dlam.copy()
    for group in sd.clusters:
        if len(group) > 1:
            d[group] = d[group].mean()
    G = (sd.frame * d) @ sd.frame.T
    G = 0.5 * (G + G.T)
    if normalized:
        G = G * _outer_factor(ev.F, spec.degree)
    return G


class BatchEval(NamedTuple):
    """Operator data on a stack of symmetric matrices, shape (m, n, n)."""

    F: np.ndarray
    Ftilde: np.ndarray
    grad: np.ndarray  # dF~/dM
    margins: np.ndarray
    member: np.ndarray


def evaluate_matrices(Ms: np.ndarray, spec: OperatorSpec) -> BatchEval:
    """
    Vectorized F, F~ and dF~/dM over a stack of matrices.

    Outside the open cone grad is nan and so are F, F~, except that for
    l = 0 the values extend continuously to the closed cone (F = sigma_k >= 0
    when all margins are >= 0). Callers check ``member`` for admissibility.
    """
    Ms = np.asarray(Ms, dtype=float)
    w, Q = np.linalg.eigh(Ms)
    ev = evaluate_spectrum(w, spec)
    defined = ev.member
    if spec.l == 0:
        defined = defined | np.all(ev.margins >= 0, axis=-1)
    F = np.where(defined, ev.F, np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        Ft = F ** (1.0 / spec.degree)
        d = ev.dF_dlam * _outer_factor(np.where(ev.member, F, np.nan), spec.degree)[..., None]
    grad = np.einsum("...ai,...i,...bi->...ab", Q, d, Q)
    return BatchEval(F, Ft, grad, ev.margins, ev.member)


class ConcavityProbe(NamedTuple):
    second_derivative: float  # d^2/dt^2 F~(lam + t xi) at t = 0
    power_concavity_gap: float  # (1 - 1/(k-l)) (F')^2 / F - F''
    value: float  # F~(lam)


def directional_jets(lam, xi, spec: OperatorSpec):
    """
    Exact Taylor data of F along lam + t xi at t = 0, batched.

    sigma_j(eta + t zeta) is a polynomial in t; the prefix recurrence is run on
    2-jets (c0, c1, c2) so F, F' and F'' come out without differencing.

    Returns (F, dF, d2F, member).
    """
    lam = np.asarray(lam, dtype=float)
    xi = np.asarray(xi, dtype=float)
    eta = transformed_spectrum(lam, spec)
    zeta = transformed_spectrum(xi, spec)
    n = eta.shape[-1]
    c = np.zeros((3,) + eta.shape[:-1] + (n + 1,))
    c[0, ..., 0] = 1.0
    for i in range(n):
        e, z = eta[..., i], zeta[..., i]
        for j in range(i + 1, 0, -1):
            c[2, ..., j] += e * c[2, ..., j - 1] + z * c[1, ..., j - 1]
            c[1, ..., j] += e * c[1, ..., j - 1] + z * c[0, ..., j - 1]
            c[0, ..., j] += e * c[0, ..., j - 1]
    member = np.all(c[0, ..., 1 : spec.k + 1] > 0, axis=-1)
    p0, p1, p2 = c[0, ..., spec.k], c[1, ..., spec.k], c[2, ..., spec.k]
    q0, q1, q2 = c[0, ..., spec.l], c[1, ..., spec.l], c[2, ..., spec.l]
    F = p0 / q0
    dF = (p1 - F * q1) / q0
    d2F = 2.0 * (p2 - F * q2 - dF * q1) / q0
    return F, dF, d2F, member


def normalized_second_derivative(F, dF, d2F, degree: int):
    """d^2/dt^2 of F^(1/m) from F, F', F''."""
    m = degree
    return (1.0 / m) * F ** (1.0 / m - 1.0) * (d2F + (1.0 / m - 1.0) * dF**2 / F)


def concavity_probe(lam, xi, spec: OperatorSpec, method: str = "jet") -> ConcavityProbe:
    """
    Second directional derivative of F~ at lam along xi, plus the residual of
    the unnormalized inequality F'' <= (1 - 1/(k-l)) (F')^2 / F.

    ``method="jet"`` uses exact polynomial jets; ``method="fd"`` uses second
    central differences of F~ with a step that shrinks until both probe points
    stay admissible.
    """
    lam = as_spectrum(lam)
    xi = as_spectrum(xi)
    spec._check_dim(lam.size)
    if xi.size != lam.size:
        raise ValueError("direction must match the spectrum length")
    F, dF, d2F, member = directional_jets(lam, xi, spec)
    if not member:
        raise ConeError("spectrum outside the admissible cone")
    m = spec.degree
    residual = float((1.0 - 1.0 / m) * dF**2 / F - d2F)
    Ft = float(F ** (1.0 / m))
    if method == "jet":
        return ConcavityProbe(float(normalized_second_derivative(F, dF, d2F, m)), residual, Ft)
    if method != "fd":
        raise ValueError(f"unknown method {method!r}")

    def ft(x):
        ev = evaluate_spectrum(x, spec)
        return float(ev.F) ** (1.0 / m), bool(ev.member)

    scale = np.linalg.norm(lam) / max(np.linalg.norm(xi), 1e-300)
    t = 1e-3 * scale
    for _ in range(40):
        (fp, okp), (fm, okm) = ft(lam + t * xi), ft(lam - t * xi)
        if okp and okm:
            return ConcavityProbe((fp - 2.0 * Ft + fm) / t**2, residual, Ft)
        t *= 0.5
    raise ConeError("probe points leave the admissible cone for every trial step")


@dataclass
class EllipticityReport:
    """
    Per-eigenvalue derivatives of F at a sorted admissible spectrum.

    ``item1`` : dF/dlam_i nondecreasing in i.
    ``item2`` : dF/deta_i nonincreasing in i (verbatim ordering).
    ``item2_mirrored`` : the same ordering taken along increasing eta, which is
    what item (2) becomes when eta is ordered like lam (sign=+1).
    ``min_share`` : min_i dF/dlam_i / sum_j dF/dlam_j.
    ``trace_ratio`` : sum_j dF/dlam_j / F^(1 - 1/(k-l)).
    """

    dF_dlam: np.ndarray
    dF_deta: np.ndarray
    item1: bool
    item2: bool
    item2_mirrored: bool
    min_share: float
    trace_ratio: float

    @property
    def item2_analogue(self) -> bool:
        return self.item2 or self.item2_mirrored

    @property
    def positive(self) -> bool:
        return self.min_share > 0 and self.trace_ratio > 0


def ellipticity_report(lam, spec: OperatorSpec, rtol: float = 1e-12) -> EllipticityReport:
    lam = as_spectrum(lam)
    spec._check_dim(lam.size)
    if np.any(np.diff(lam) > 0):
        raise ValueError("spectrum must be sorted in descending order")
    ev = evaluate_spectrum(lam, spec)
    _require_member(ev)
    dl, de = ev.dF_dlam, ev.dF_deta
    sl = rtol * np.abs(dl).max()
    se = rtol * np.abs(de).max()
    item1 = bool(np.all(np.diff(dl) >= -sl))
    item2 = bool(np.all(np.diff(de) <= se))
    order = np.argsort(ev.eta, kind="stable")
    item2_m = bool(np.all(np.diff(de[order]) <= se))
    total = float(dl.sum())
    report = EllipticityReport(
        dF_dlam=dl,
        dF_deta=de,
        item1=item1,
        item2=item2,
        item2_mirrored=item2_m,
        min_share=float(dl.min() / total),
        trace_ratio=float(total / float(ev.F) ** (1.0 - 1.0 / spec.degree)),
    )
    if not report.positive:
        raise ArithmeticError(f"non-positive ellipticity ratios: {report.min_share}, {report.trace_ratio}")
    return report
