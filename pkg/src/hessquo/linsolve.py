"""Direct sparse solves: UMFPACK through cvxopt when importable, SuperLU otherwise."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

try:
    from cvxopt import matrix as _cvx_matrix
    from cvxopt import spmatrix as _cvx_spmatrix
    from cvxopt import umfpack as _umfpack
except ImportError:  # pragma: no cover - cvxopt is a declared dependency
    _umfpack = None


class SingularSystemError(RuntimeError):
    pass


def sparse_solve(A, b, backend: str | None = None) -> np.ndarray:
    """Solve A x = b for square sparse A (unsymmetric allowed)."""
    A = sp.coo_matrix(A)
    b = np.asarray(b, dtype=float)
    backend = backend or ("umfpack" if _umfpack is not None else "superlu")
    if backend == "umfpack":
        M = _cvx_spmatrix(A.data.tolist(), A.row.tolist(), A.col.tolist(), size=A.shape)
        x = _cvx_matrix(b.copy())
        try:
            _umfpack.linsolve(M, x)
        except ArithmeticError as exc:
            raise SingularSystemError(str(exc)) from exc
        out = np.array(x).reshape(-1)
    elif backend == "superlu":
        try:
            out = spla.spsolve(A.tocsc(), b)
        except RuntimeError as exc:
            raise SingularSystemError(str(exc)) from exc
    else:
        raise ValueError(f"unknown backend {backend!r}")
    if not np.all(np.isfinite(out)):
        raise SingularSystemError("non-finite solution")
    return out
