"""
Independent reference computations used to check the main code paths.

- brute-force enumeration of sigma_k over explicit k-subsets
- central finite differences of the operator in the matrix entries
- a radial ODE solver on a ball (smooth-domain cross-check)
- the k=1, l=0 case reduced to a single linear solve
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .grid import ProblemSpec, ScalarField
from .linsolve import sparse_solve
from .hessop import ConeError, OperatorSpec, normalized_value, quotient_value

MAX_ENUM_DIM = 12


def sigma_enumeration(lam, k: int):
    """
    sigma_k by summing products over every k-subset.

    Accepts a batch (..., n). Orders outside [0, n] follow the usual convention.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if n > MAX_ENUM_DIM:
        raise ValueError(f"enumeration limited to n <= {MAX_ENUM_DIM}, got {n}")
    if k == 0:
        return np.ones(lam.shape[:-1]) if lam.ndim > 1 else 1.0
    if k < 0 or k > n:
        return np.zeros(lam.shape[:-1]) if lam.ndim > 1 else 0.0
    total = np.zeros(lam.shape[:-1])
    for subset in combinations(range(n), k):
        total = total + np.prod(lam[..., list(subset)], axis=-1)
    return total if lam.ndim > 1 else float(total)


def fd_matrix_derivative(M, spec: OperatorSpec, normalized: bool = False, step: float | None = None) -> np.ndarray:
    """
    Entrywise fourth-order central differences of F (or F~) in the matrix entries.

    Off-diagonal pairs (i, j), (j, i) are perturbed together and the quotient
    halved, matching the symmetric-gradient convention dF = sum G_ij dM_ij.
    The default step is relative to max |M_ij|.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    value = normalized_value if normalized else quotient_value
    scale = np.abs(M).max()
    h0 = step if step is not None else 1e-5 * (scale if scale > 0 else 1.0)
    G = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1.0
            h = h0
            for attempt in range(4):
                try:
                    f1 = value(M + h * E, spec) - value(M - h * E, spec)
                    f2 = value(M + 2 * h * E, spec) - value(M - 2 * h * E, spec)
                    break
                except ConeError:
                    if attempt == 3:
                        raise
                    h *= 0.1
            # diagonal: one entry moved by h; off-diagonal: two entries moved by h
            G[i, j] = G[j, i] = (8 * f1 - f2) / (12 * h) / (1.0 if i == j else 2.0)
    return G


@dataclass
class RadialProfile:
    r: np.ndarray
    u: np.ndarray
    du: np.ndarray
    d2u: np.ndarray
    n: int

    def __call__(self, radius):
        return np.interp(radius, self.r, self.u)


def _radial_value(s: float, w: float, n: int, spec: OperatorSpec) -> float:
    # F~ on lam = (s, w, ..., w), zero outside the admissible cone
    lam = [s] + [w] * (n - 1)
    tot = sum(lam)
    eta = [spec.gamma * tot + spec.sign * x for x in lam]
    sig = [1.0] + [0.0] * n
    for i, e in enumerate(eta):
        for j in range(i + 1, 0, -1):
            sig[j] += e * sig[j - 1]
    if any(sig[j] <= 0 for j in range(1, spec.k + 1)):
        return 0.0
    return (sig[spec.k] / sig[spec.l]) ** (1.0 / spec.degree)


def _solve_radial_second(w: float, target: float, n: int, spec: OperatorSpec) -> float:
    """u'' such that F~(u'', w, ..., w) = target (F~ is increasing in the first slot)."""
    g = lambda s: _radial_value(s, w, n, spec) - target
    span = max(1.0, abs(w), abs(target))
    lo, hi = -span, span
    while g(lo) >= 0:
        lo *= 2.0
    while g(hi) <= 0:
        hi *= 2.0
    return brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=400)


def radial_solve(
    n: int,
    spec: OperatorSpec,
    f: Callable,
    phi: Callable,
    R: float = 1.0,
    samples: int = 201,
    shoot_bracket: float = 10.0,
) -> RadialProfile:
    """
    Radial solution of F~(u'', u'/r, ..., u'/r) = f(r, u) on the ball of radius R,
    u'(0) = 0 and the inner-normal condition -u'(R) = phi(R, u(R)).

    The ODE starts at r_min = 1e-6 R from the series u ~ u(0) + u''(0) r^2 / 2
    and u(0) is found by bracketed root finding (the mismatch is monotone when
    f_z >= 0 and phi_z > 0).
    """
    if spec.n != n:
        raise ValueError("operator dimension must equal the ball dimension")
    rs = np.linspace(0.0, R, samples)
    f0 = [f(r, 0.0) for r in rs]
    if np.allclose(f0, 0.0) and spec.l == 0 and np.allclose([f(r, 1.0) for r in rs], 0.0):
        # degenerate datum: constant profile pinned by the boundary condition
        c = brentq(lambda z: phi(R, z), -shoot_bracket, shoot_bracket, xtol=1e-15)
        z = np.zeros_like(rs)
        return RadialProfile(rs, np.full_like(rs, c), z, z.copy(), n)

    unit = _radial_value(1.0, 1.0, n, spec)
    r0 = 1e-6 * R

    def second(r, u, v):
        target = f(r, u)
        if r <= r0:
            return target / unit
        return _solve_radial_second(v / r, target, n, spec)

    def rhs(r, y):
        return [y[1], second(r, y[0], y[1])]

    def integrate(u0):
        c = f(0.0, u0) / unit
        y0 = [u0 + 0.5 * c * r0**2, c * r0]
        sol = solve_ivp(rhs, (r0, R), y0, method="DOP853", rtol=1e-13, atol=1e-15, dense_output=True)
        if not sol.success:
            raise RuntimeError(f"radial integration failed: {sol.message}")
        return sol

    def mismatch(u0):
        sol = integrate(u0)
        uR, vR = sol.y[:, -1]
        return -vR - phi(R, uR)

    lo, hi = -shoot_bracket, shoot_bracket
    for _ in range(60):
        if mismatch(lo) > 0 and mismatch(hi) < 0:
            break
        lo, hi = 2 * lo, 2 * hi
    else:
        raise RuntimeError("could not bracket the shooting parameter")
    u0 = brentq(mismatch, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    sol = integrate(u0)
    rr = np.linspace(0.0, R, samples)
    uu, vv = sol.sol(np.clip(rr, r0, R))
    uu[0], vv[0] = u0, 0.0
    d2 = np.array([second(r, a, b) for r, a, b in zip(rr, uu, vv)])
    return RadialProfile(rr, uu, vv, d2, n)


def radial_ode_residual(profile: RadialProfile, spec: OperatorSpec, f: Callable) -> np.ndarray:
    """F~(diag(u'', u'/r, ...)) - f(r, u) evaluated with the matrix operator, r > 0."""
    out = []
    for r, u, v, s in zip(profile.r[1:], profile.u[1:], profile.du[1:], profile.d2u[1:]):
        M = np.diag([s] + [v / r] * (profile.n - 1))
        out.append(normalized_value(M, spec) - f(r, u))
    return np.asarray(out)


def linear_reduction_solve(p: ProblemSpec) -> ScalarField:
    """
    Solve the k=1, l=0 problem (gamma n + sign) Lap u = f~, beta . Du = phi with
    one sparse solve.

    f~ must not depend on u, and phi must be affine in u; both are read off
    at u = 0 (phi_z taken from z = 0).
    """
    op = p.op
    if not (op.k == 1 and op.l == 0):
        raise ValueError("linear reduction needs k=1, l=0")
    dom = p.domain
    nn, d, h = dom.n_nodes, dom.d, dom.h
    I, B = dom.interior, dom.boundary
    c = op.trace_factor
    shape = dom.shape
    rows, cols, vals = [], [], []
    # interior: 5/7-point Laplacian written out directly
    strides = np.array([int(np.prod(shape[a + 1 :])) for a in range(d)])
    for a in range(d):
        for off, wgt in ((-1, 1.0), (1, 1.0)):
            rows.append(I)
            cols.append(I + off * strides[a])
            vals.append(np.full(I.size, c * wgt / h**2))
    rows.append(I)
    cols.append(I)
    vals.append(np.full(I.size, -2.0 * d * c / h**2))
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nn, nn))
    zero = np.zeros(nn)
    rhs = np.zeros(nn)
    rhs[I] = p.rhs(dom.coords[I], zero[I])
    phi0, phiz = p.boundary_data(zero)
    # boundary rows: beta . D u - phi_z u = phi(x, 0)
    Bop = sp.csr_matrix((nn, nn))
    for a in range(d):
        w = np.zeros(nn)
        w[B] = dom.beta_eff[B, a]
        Bop = Bop + sp.diags(w) @ dom.D1[a]
    z = np.zeros(nn)
    z[B] = phiz
    A = (A + Bop - sp.diags(z)).tocsc()
    rhs[B] = phi0
    return ScalarField(dom, sparse_solve(A, rhs))
