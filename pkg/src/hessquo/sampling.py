"""
Random spectra and matrices inside the cones, for property checks.

Uniform sampling of Gamma_k is not meaningful, so spectra are drawn as a
positive multiple of (1, ..., 1) plus a signed perturbation of random size and
rejected when they fall outside. This covers both the well-inside region and
the neighbourhood of the cone boundary.
"""
from __future__ import annotations

import numpy as np

from .hessop import OperatorSpec, spectrum_from_eta
from .symcone import sigma_all


def sample_gamma(rng: np.random.Generator, n: int, k: int, size: int, rel_margin: float = 0.0) -> np.ndarray:
    """
    ``size`` spectra in Gamma_k, shape (size, n).

    ``rel_margin`` > 0 keeps sigma_i(lam) >= rel_margin * sigma_i(|lam|) for
    i <= k, i.e. away from the boundary relative to the spectrum's own scale.
    """
    out = []
    have = 0
    while have < size:
        m = max(64, 2 * (size - have))
        base = rng.uniform(0.5, 2.0, size=(m, 1))
        spread = 10.0 ** rng.uniform(-2.0, 0.6, size=(m, 1))
        lam = base * (1.0 + spread * rng.standard_normal((m, n)))
        lam *= 10.0 ** rng.uniform(-1.0, 1.0, size=(m, 1))
        s = sigma_all(lam)[:, 1 : k + 1]
        ok = np.all(s > 0, axis=1)
        if rel_margin > 0:
            ref = sigma_all(np.abs(lam))[:, 1 : k + 1]
            ok &= np.all(s >= rel_margin * ref, axis=1)
        out.append(lam[ok])
        have += int(ok.sum())
    return np.concatenate(out)[:size]


def sample_admissible(rng: np.random.Generator, spec: OperatorSpec, size: int, rel_margin: float = 0.0) -> np.ndarray:
    """Hessian spectra lam in Gamma~_k for ``spec``, obtained by pulling back eta in Gamma_k."""
    eta = sample_gamma(rng, spec.n, spec.k, size, rel_margin)
    return spectrum_from_eta(eta, spec)


def random_rotation(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def symmetric_from_spectrum(rng: np.random.Generator, lam) -> np.ndarray:
    """Q diag(lam) Q^T for a random rotation, exactly symmetrized."""
    lam = np.asarray(lam, dtype=float)
    Q = random_rotation(rng, lam.size)
    M = (Q * lam) @ Q.T
    return 0.5 * (M + M.T)


def legal_specs(ns=(2, 3, 4), gammas=(1.0, 2.0), signs=(-1, 1)) -> list[OperatorSpec]:
    """Every valid (n, k, l, gamma, sign) over the given grids."""
    out = []
    for n in ns:
        for k in range(1, n + 1):
            for l in range(k):
                for g in gammas:
                    for s in signs:
                        try:
                            out.append(OperatorSpec(n, k, l, g, s))
                        except ValueError:
                            pass
    return out
