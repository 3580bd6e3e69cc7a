"""
Finite differences on a uniform box grid.

Nodes are stored flat in C order. Every axis carries a 1-d first- and
second-derivative stencil (central inside, second-order one-sided at the two
ends) and the multi-dimensional operators are Kronecker products of these, so
mixed derivatives at interior nodes reduce to the 4-point cross stencil.

Interior nodes carry the normalized equation F~(D^2 u) = f~(x, u); boundary
nodes carry the oblique condition beta . Du = phi(x, u). At edge and corner
nodes the boundary residual is the average of the face residuals that meet
there, each evaluated with that face's normal. With ``corner_policy=
"normalized"`` that averaged row is rescaled so its beta has unit length.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .hessop import OperatorSpec, evaluate_matrices


class AdmissibilityError(ValueError):
    """Raised when D^2 u leaves the admissible cone at some interior node."""

    def __init__(self, message, nodes=None, margins=None):
        super().__init__(message)
        self.nodes = nodes
        self.margins = margins


class LinearizationError(RuntimeError):
    """Raised when an assembled Jacobian has an empty diagonal entry."""


def _first_1d(N: int, h: float) -> sp.csr_matrix:
    D = sp.lil_matrix((N + 1, N + 1))
    D[0, 0:3] = [-1.5, 2.0, -0.5]
    D[N, N - 2 : N + 1] = [0.5, -2.0, 1.5]
    for i in range(1, N):
        D[i, i - 1] = -0.5
        D[i, i + 1] = 0.5
    return (D / h).tocsr()


def _second_1d(N: int, h: float) -> sp.csr_matrix:
    D = sp.lil_matrix((N + 1, N + 1))
    D[0, 0:4] = [2.0, -5.0, 4.0, -1.0]
    D[N, N - 3 : N + 1] = [-1.0, 4.0, -5.0, 2.0]
    for i in range(1, N):
        D[i, i - 1 : i + 2] = [1.0, -2.0, 1.0]
    return (D / h**2).tocsr()


def _along_axis(op1d: sp.spmatrix, axis: int, d: int, N: int) -> sp.csr_matrix:
    eye = sp.identity(N + 1, format="csr")
    out = None
    for a in range(d):
        m = op1d if a == axis else eye
        out = m if out is None else sp.kron(out, m, format="csr")
    return out.tocsr()


def normal_beta(x, nu):
    """The Neumann choice beta = nu."""
    return np.asarray(nu, dtype=float)


@dataclass
class GridDomain:
    """
    Uniform grid on the box prod_a [lower_a, upper_a] with N cells per axis.

    ``beta(x, nu)`` gives the unit oblique field at boundary points for the
    face with inner normal ``nu`` (both arrays of shape (m, d)).
    """

    d: int
    N: int
    lower: tuple = None
    upper: tuple = None
    beta: Callable = normal_beta
    beta0: float = 1e-3
    corner_policy: str = "average"

    def __post_init__(self):
        if self.corner_policy not in ("average", "normalized"):
            raise ValueError(f"corner_policy must be 'average' or 'normalized', got {self.corner_policy!r}")
        if self.d not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.d}")
        if self.N < 3:
            raise ValueError("need at least 3 cells per axis for one-sided stencils")
        self.lower = tuple(float(v) for v in (self.lower or (0.0,) * self.d))
        self.upper = tuple(float(v) for v in (self.upper or (1.0,) * self.d))
        widths = np.subtract(self.upper, self.lower)
        if len(widths) != self.d or np.any(widths <= 0):
            raise ValueError("box extents must be positive in every axis")
        if not np.allclose(widths, widths[0], rtol=1e-14, atol=0):
            raise ValueError("uniform spacing requires equal box widths")
        self.h = float(widths[0] / self.N)
        self.shape = (self.N + 1,) * self.d
        idx = np.indices(self.shape).reshape(self.d, -1).T
        self.multi_index = idx
        self.coords = np.asarray(self.lower) + self.h * idx
        at_low = idx == 0
        at_high = idx == self.N
        self.kind = (at_low | at_high).sum(axis=1)
        self.interior = np.flatnonzero(self.kind == 0)
        self.boundary = np.flatnonzero(self.kind > 0)
        self._build_faces(at_low, at_high)
        self._build_stencils()

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    def _build_faces(self, at_low, at_high):
        nodes, normals = [], []
        for a in range(self.d):
            for mask, s in ((at_low[:, a], 1.0), (at_high[:, a], -1.0)):
                sel = np.flatnonzero(mask)
                nu = np.zeros((sel.size, self.d))
                nu[:, a] = s
                nodes.append(sel)
                normals.append(nu)
        self.face_node = np.concatenate(nodes)
        self.face_normal = np.concatenate(normals)
        self.face_weight = 1.0 / self.kind[self.face_node]
        x = self.coords[self.face_node]
        beta = np.asarray(self.beta(x, self.face_normal), dtype=float).reshape(-1, self.d)
        self.face_beta = beta
        norms = np.linalg.norm(beta, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-12):
            raise ValueError("oblique field beta must be a unit vector at every boundary point")
        obl = np.einsum("ea,ea->e", beta, self.face_normal)
        if np.any(obl < self.beta0) or self.beta0 <= 0:
            raise ValueError(f"obliqueness <beta, nu> >= beta0 = {self.beta0} fails (min {obl.min():.3g})")
        # node-level effective field: weighted average of the meeting faces
        nn = self.n_nodes
        self.beta_eff = np.zeros((nn, self.d))
        np.add.at(self.beta_eff, self.face_node, self.face_weight[:, None] * beta)
        nu_eff = np.zeros((nn, self.d))
        np.add.at(nu_eff, self.face_node, self.face_weight[:, None] * self.face_normal)
        b = self.boundary
        bdir = self.beta_eff[b] / np.linalg.norm(self.beta_eff[b], axis=1)[:, None]
        ndir = nu_eff[b] / np.linalg.norm(nu_eff[b], axis=1)[:, None]
        self.corner_obliqueness = np.einsum("ea,ea->e", bdir, ndir)
        if np.any(self.corner_obliqueness <= 0):
            raise ValueError("averaged oblique field is not oblique at some edge/corner node")
        # per-node factor applied to the whole boundary row (beta, phi, phi_z)
        self.boundary_scale = np.ones(nn)
        if self.corner_policy == "normalized":
            self.boundary_scale[b] = 1.0 / np.linalg.norm(self.beta_eff[b], axis=1)
            self.beta_eff[b] *= self.boundary_scale[b, None]

    def _build_stencils(self):
        d, N, h = self.d, self.N, self.h
        d1 = _first_1d(N, h)
        d2 = _second_1d(N, h)
        self.D1 = [_along_axis(d1, a, d, N) for a in range(d)]
        self.D2 = [[None] * d for _ in range(d)]
        for a in range(d):
            self.D2[a][a] = _along_axis(d2, a, d, N)
            for b in range(a + 1, d):
                m = (self.D1[a] @ self.D1[b]).tocsr()
                self.D2[a][b] = self.D2[b][a] = m

    def flat_index(self, node) -> int:
        """Flat index of a node given as a multi-index or an int."""
        if np.isscalar(node):
            i = int(node)
            if not 0 <= i < self.n_nodes:
                raise IndexError(f"node {i} out of range")
            return i
        node = tuple(int(v) for v in node)
        if len(node) != self.d or any(not 0 <= v <= self.N for v in node):
            raise IndexError(f"node {node} out of range for grid shape {self.shape}")
        return int(np.ravel_multi_index(node, self.shape))

    def node_at(self, x) -> int:
        """Flat index of the node nearest to point x."""
        i = np.rint((np.asarray(x, dtype=float) - self.lower) / self.h).astype(int)
        return self.flat_index(np.clip(i, 0, self.N))


@dataclass
class ScalarField:
    """One value per grid node, stored flat."""

    domain: GridDomain
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.values.size != self.domain.n_nodes:
            raise ValueError(f"field has {self.values.size} values for {self.domain.n_nodes} nodes")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @classmethod
    def from_function(cls, domain: GridDomain, fn) -> "ScalarField":
        return cls(domain, fn(domain.coords))

    def as_grid(self) -> np.ndarray:
        return self.values.reshape(self.domain.shape)

    def copy(self) -> "ScalarField":
        return ScalarField(self.domain, self.values.copy())


@dataclass
class ProblemSpec:
    """
    F~(D^2 u) = f(x, u) in the box, beta . Du = phi(x, u, nu) on its boundary.

    ``f`` is the normalized datum f^(1/(k-l)) (nonnegative, may vanish);
    ``phi`` receives the face inner normal ``nu`` so face-dependent data can be
    expressed on a box. All callables are vectorized: x of shape (m, d), z and
    the result of shape (m,).
    """

    domain: GridDomain
    op: OperatorSpec
    f: Callable
    f_z: Callable
    phi: Callable
    phi_z: Callable
    gamma0: float
    subsolution: Optional[ScalarField] = None
    regularization: float = field(default=0.0)

    def __post_init__(self):
        if self.op.n != self.domain.d:
            raise ValueError(f"operator dimension {self.op.n} does not match grid dimension {self.domain.d}")
        if not self.gamma0 > 0:
            raise ValueError("gamma0 must be positive")

    def rhs(self, x, z):
        return np.asarray(self.f(x, z), dtype=float) + self.regularization

    def rhs_z(self, x, z):
        return np.broadcast_to(np.asarray(self.f_z(x, z), dtype=float), np.shape(z))

    def regularized(self, eps: float) -> "ProblemSpec":
        """Same problem with f~ replaced by f~ + eps."""
        return replace(self, regularization=float(eps))

    def boundary_data(self, z):
        """Face-averaged phi and phi_z at the boundary nodes for node values z (full field)."""
        dom = self.domain
        x = dom.coords[dom.face_node]
        zf = np.asarray(z, dtype=float)[dom.face_node]
        w = dom.face_weight
        phi = np.zeros(dom.n_nodes)
        phiz = np.zeros(dom.n_nodes)
        np.add.at(phi, dom.face_node, w * np.broadcast_to(self.phi(x, zf, dom.face_normal), zf.shape))
        np.add.at(phiz, dom.face_node, w * np.broadcast_to(self.phi_z(x, zf, dom.face_normal), zf.shape))
        scale = dom.boundary_scale[dom.boundary]
        return scale * phi[dom.boundary], scale * phiz[dom.boundary]

    def validate(self, z_samples=(-1.0, 0.0, 1.0), tol: float = 0.0) -> None:
        """Check f~ >= 0, f~_z >= 0 and phi_z >= gamma0 on nodes x sampled z."""
        dom = self.domain
        xi = dom.coords[dom.interior]
        for z in z_samples:
            zi = np.full(len(xi), float(z))
            fv = np.asarray(self.f(xi, zi), dtype=float)
            fz = self.rhs_z(xi, zi)
            if not (np.all(np.isfinite(fv)) and np.all(np.isfinite(fz))):
                raise ValueError(f"f or f_z is not finite at z={z}")
            if np.any(fv < -tol):
                raise ValueError(f"f must be nonnegative; min {fv.min():.6g} at z={z}")
            if np.any(fz < -tol):
                raise ValueError(f"f_z must be nonnegative; min {fz.min():.6g} at z={z}")
            _, pz = self.boundary_data(np.full(dom.n_nodes, float(z)))
            if not np.all(np.isfinite(pz)):
                raise ValueError(f"phi_z is not finite at z={z}")
            if np.any(pz < self.gamma0 - tol):
                raise ValueError(f"phi_z must be >= gamma0={self.gamma0}; min {pz.min():.6g} at z={z}")


def hessian_at_node(u: ScalarField, node) -> np.ndarray:
    """Second-difference Hessian at one node (central inside, one-sided at the box ends)."""
    dom = u.domain
    i = dom.flat_index(node)
    H = np.empty((dom.d, dom.d))
    for a in range(dom.d):
        for b in range(a, dom.d):
            H[a, b] = H[b, a] = (dom.D2[a][b].getrow(i) @ u.values).item()
    return H


def gradient_at_node(u: ScalarField, node) -> np.ndarray:
    """Second-order difference gradient at one node."""
    dom = u.domain
    i = dom.flat_index(node)
    return np.array([(dom.D1[a].getrow(i) @ u.values).item() for a in range(dom.d)])


def hessian_field(u: ScalarField, nodes=None) -> np.ndarray:
    """Hessians at many nodes, shape (m, d, d); all nodes by default."""
    dom = u.domain
    v = u.values
    H = np.empty((dom.n_nodes if nodes is None else len(nodes), dom.d, dom.d))
    for a in range(dom.d):
        for b in range(a, dom.d):
            col = dom.D2[a][b] @ v
            H[:, a, b] = H[:, b, a] = col if nodes is None else col[nodes]
    return H


def gradient_field(u: ScalarField) -> np.ndarray:
    """Gradients at every node, shape (n_nodes, d)."""
    return np.stack([D @ u.values for D in u.domain.D1], axis=1)


@dataclass
class InteriorEval:
    residual: np.ndarray
    Ftilde: np.ndarray
    grad: np.ndarray
    margins: np.ndarray
    member: np.ndarray


def evaluate_interior(u: ScalarField, p: ProblemSpec, check: bool = True) -> InteriorEval:
    dom = p.domain
    nodes = dom.interior
    H = hessian_field(u, nodes)
    ev = evaluate_matrices(H, p.op)
    # the value exists on the closed cone when l = 0; strict membership is
    # what the Newton iteration asks of its iterates
    undefined = np.isnan(ev.Ftilde)
    if check and np.any(undefined):
        bad = nodes[undefined]
        raise AdmissibilityError(
            f"{bad.size} interior node(s) not admissible; first node {tuple(dom.multi_index[bad[0]])} "
            f"margins {ev.margins[undefined][0].tolist()}",
            nodes=bad,
            margins=ev.margins[undefined],
        )
    res = ev.Ftilde - p.rhs(dom.coords[nodes], u.values[nodes])
    return InteriorEval(res, ev.Ftilde, ev.grad, ev.margins, ev.member)


def interior_residual(u: ScalarField, p: ProblemSpec) -> np.ndarray:
    """F~(D^2 u) - f~(x, u) at the interior nodes (ordered as ``domain.interior``)."""
    return evaluate_interior(u, p).residual


def boundary_residual(u: ScalarField, p: ProblemSpec) -> np.ndarray:
    """beta . Du - phi(x, u) at the boundary nodes (ordered as ``domain.boundary``)."""
    dom = p.domain
    b = dom.boundary
    Du = np.stack([D[b] @ u.values for D in dom.D1], axis=1)
    phi, _ = p.boundary_data(u.values)
    return np.einsum("ea,ea->e", dom.beta_eff[b], Du) - phi


def full_residual(u: ScalarField, p: ProblemSpec) -> np.ndarray:
    """Interior and boundary residuals scattered into one node-indexed vector."""
    dom = p.domain
    r = np.empty(dom.n_nodes)
    r[dom.interior] = interior_residual(u, p)
    r[dom.boundary] = boundary_residual(u, p)
    return r


def assemble_linearization(u: ScalarField, p: ProblemSpec, ev: InteriorEval | None = None):
    """
    Newton system J du = -R.

    Interior rows: sum_ab F~^{ab}(D^2 u) D_ab - f~_z(x, u).
    Boundary rows: beta . D - phi_z(x, u).

    Returns
    -------
    J : scipy.sparse.csr_matrix, (n_nodes, n_nodes)
    rhs : ndarray, (n_nodes,)
    """
    dom = p.domain
    if ev is None:
        ev = evaluate_interior(u, p)
    nn, d = dom.n_nodes, dom.d
    I, B = dom.interior, dom.boundary
    J = sp.csr_matrix((nn, nn))
    # coefficients at rounding level (e.g. off-diagonals of a multiple of I
    # after an eigen round trip) are dropped so they do not densify the LU
    floor = 64 * np.finfo(float).eps * np.abs(ev.grad).max(axis=(1, 2))
    for a in range(d):
        for b in range(a, d):
            c = np.zeros(nn)
            cab = ev.grad[:, a, b]
            c[I] = np.where(np.abs(cab) > floor, cab, 0.0) * (1.0 if a == b else 2.0)
            if np.any(c):
                J = J + sp.diags(c) @ dom.D2[a][b]
        c = np.zeros(nn)
        c[B] = dom.beta_eff[B, a]
        J = J + sp.diags(c) @ dom.D1[a]
    zeroth = np.zeros(nn)
    zeroth[I] = p.rhs_z(dom.coords[I], u.values[I])
    phi, phiz = p.boundary_data(u.values)
    zeroth[B] = phiz
    J = (J - sp.diags(zeroth)).tocsr()
    J.eliminate_zeros()
    diag = J.diagonal()
    if np.any(diag == 0):
        raise LinearizationError(f"zero diagonal in {np.count_nonzero(diag == 0)} row(s)")
    rhs = np.empty(nn)
    rhs[I] = -ev.residual
    Du = np.stack([D[B] @ u.values for D in dom.D1], axis=1)
    rhs[B] = -(np.einsum("ea,ea->e", dom.beta_eff[B], Du) - phi)
    return J, rhs
