"""
Damped Newton, epsilon-regularization sweep and comparison checks.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .grid import (
    AdmissibilityError,
    InteriorEval,
    LinearizationError,
    ProblemSpec,
    ScalarField,
    assemble_linearization,
    boundary_residual,
    evaluate_interior,
    gradient_field,
    hessian_field,
)
from .hessop import evaluate_spectrum
from .linsolve import SingularSystemError, sparse_solve

log = logging.getLogger(__name__)

CONVERGED = "converged"
LINE_SEARCH_FAILED = "line_search_failed"
LINEAR_SOLVE_FAILED = "linear_solve_failed"
BUDGET_EXHAUSTED = "budget_exhausted"
STAGNATION = "stagnation"


class PreconditionError(ValueError):
    """A structural hypothesis of a check does not hold on the given data."""


@dataclass
class SolverConfig:
    tol_r: float = 1e-9
    tol_b: float = 1e-9
    max_iter: int = 50
    shrink: float = 0.5
    max_halvings: int = 30
    eps0: float = 1e-2
    eps_shrink: float = 0.1
    eps_final: float = 1e-2
    adm_margin: float = 0.0
    adm_relative: float = 0.0
    stagnation_tol: float = 1e-14

    def __post_init__(self):
        if not (self.tol_r > 0 and self.tol_b > 0):
            raise ValueError("tolerances must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink factor must lie in (0, 1)")
        if int(self.max_halvings) != self.max_halvings or self.max_halvings < 0:
            raise ValueError("max_halvings must be a nonnegative integer")
        if not (self.eps0 > 0 and self.eps_final > 0 and self.eps_final <= self.eps0):
            raise ValueError("epsilon schedule needs 0 < eps_final <= eps0")
        if not 0 < self.eps_shrink < 1:
            raise ValueError("eps_shrink must lie in (0, 1)")
        if self.adm_margin < 0 or self.adm_relative < 0:
            raise ValueError("admissibility margins must be nonnegative")

    def epsilon_schedule(self) -> list[float]:
        """eps0, eps0*shrink, ... down to eps_final (inclusive, up to rounding)."""
        out = [self.eps0]
        while out[-1] * self.eps_shrink >= self.eps_final * (1 - 1e-9):
            out.append(float(f"{out[-1] * self.eps_shrink:.15g}"))
        return out


@dataclass
class SolveReport:
    converged: bool = False
    status: str = ""
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    step_history: list = field(default_factory=list)
    margin_history: list = field(default_factory=list)  # min cone margin of each accepted iterate
    interior_residual: float = float("nan")
    boundary_residual: float = float("nan")
    sup_u: float = float("nan")
    sup_Du: float = float("nan")
    sup_D2u: float = float("nan")
    min_margin: float = float("nan")
    epsilon: Optional[float] = None
    solution: Optional[ScalarField] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "solution"}


def _thresholds(u: ScalarField, p: ProblemSpec, cfg: SolverConfig):
    if cfg.adm_relative == 0:
        return cfg.adm_margin
    H = hessian_field(u, p.domain.interior)
    eta_scale = 1.0 + np.abs(np.linalg.eigvalsh(H)).max(axis=1) * abs(p.op.trace_factor)
    powers = np.arange(1, p.op.k + 1)
    return cfg.adm_margin + cfg.adm_relative * eta_scale[:, None] ** powers


def _admissible(ev: InteriorEval, u, p, cfg) -> bool:
    return bool(np.all(ev.member)) and bool(np.all(ev.margins > _thresholds(u, p, cfg)))


def _norms(ev: InteriorEval, u: ScalarField, p: ProblemSpec):
    ri = float(np.abs(ev.residual).max()) if ev.residual.size else 0.0
    rb = float(np.abs(boundary_residual(u, p)).max())
    return ri, rb


@dataclass
class StepResult:
    alpha: float
    ok: bool
    status: str
    u: Optional[ScalarField] = None
    ev: Optional[InteriorEval] = None
    norm: float = float("nan")
    halvings: int = 0


def damped_step(u: ScalarField, du, p: ProblemSpec, cfg: SolverConfig, current: float) -> StepResult:
    """
    Largest alpha = shrink**j keeping every interior node admissible and
    strictly decreasing the combined sup-norm residual below ``current``.
    """
    du = np.asarray(du, dtype=float)
    if not np.any(du):
        return StepResult(1.0, False, STAGNATION, u, None, current, 0)
    alpha = 1.0
    for j in range(cfg.max_halvings + 1):
        trial = ScalarField(u.domain, u.values + alpha * du)
        ev = evaluate_interior(trial, p, check=False)
        if _admissible(ev, trial, p, cfg):
            norm = max(_norms(ev, trial, p))
            if norm < current:
                if current - norm < cfg.stagnation_tol:
                    return StepResult(alpha, False, STAGNATION, trial, ev, norm, j)
                return StepResult(alpha, True, "", trial, ev, norm, j)
        alpha *= cfg.shrink
    return StepResult(0.0, False, LINE_SEARCH_FAILED, None, None, current, cfg.max_halvings)


def _finish(report: SolveReport, u: ScalarField, ev: InteriorEval, p: ProblemSpec) -> None:
    ri, rb = _norms(ev, u, p)
    report.interior_residual, report.boundary_residual = ri, rb
    report.sup_u = float(np.abs(u.values).max())
    report.sup_Du = float(np.linalg.norm(gradient_field(u), axis=1).max())
    report.sup_D2u = float(np.abs(hessian_field(u, p.domain.interior)).max())
    report.min_margin = float(ev.margins.min())
    report.solution = u


def newton_solve(p: ProblemSpec, u0: ScalarField, cfg: SolverConfig | None = None):
    """
    Damped Newton iteration for the discrete problem.

    Returns ``(u, report)``. Failures (line search, linear solve, budget,
    stagnation) are reported through ``report.status``; an inadmissible
    starting field raises :class:`AdmissibilityError`.
    """
    cfg = cfg or SolverConfig()
    u = u0.copy()
    ev = evaluate_interior(u, p)
    if not _admissible(ev, u, p, cfg):
        raise AdmissibilityError(f"initial field violates the admissibility margin {cfg.adm_margin}")
    report = SolveReport(epsilon=p.regularization or None)
    ri, rb = _norms(ev, u, p)
    report.residual_history.append(max(ri, rb))
    report.margin_history.append(float(ev.margins.min()))
    while True:
        if ri <= cfg.tol_r and rb <= cfg.tol_b:
            report.converged, report.status = True, CONVERGED
            break
        if report.iterations >= cfg.max_iter:
            report.status = BUDGET_EXHAUSTED
            break
        try:
            J, rhs = assemble_linearization(u, p, ev)
            du = sparse_solve(J, rhs)
        except (LinearizationError, SingularSystemError) as exc:
            log.warning("linear solve failed: %s", exc)
            report.status = LINEAR_SOLVE_FAILED
            break
        step = damped_step(u, du, p, cfg, report.residual_history[-1])
        if not step.ok:
            report.status = step.status
            break
        u, ev = step.u, step.ev
        report.iterations += 1
        report.step_history.append(step.alpha)
        ri, rb = _norms(ev, u, p)
        report.residual_history.append(step.norm)
        report.margin_history.append(float(ev.margins.min()))
        log.debug("newton it=%d residual=%.3e alpha=%g", report.iterations, step.norm, step.alpha)
    _finish(report, u, ev, p)
    return u, report


def initial_guess(p: ProblemSpec, eps0: float = 1e-2, rounds: int = 6) -> ScalarField:
    """
    The supplied subsolution, or an admissible quadratic a|x - x_c|^2/2 + b.

    ``a`` makes F~(a I) >= max f~ + eps0 (F~ is 1-homogeneous, so this is a
    single division); ``b`` places the boundary residual at
    beta . Du - phi >= 0 with equality at the tightest node.
    """
    if p.subsolution is not None:
        return p.subsolution
    dom = p.domain
    x = dom.coords
    centre = 0.5 * (np.asarray(dom.lower) + np.asarray(dom.upper))
    q = 0.5 * np.sum((x - centre) ** 2, axis=1)
    unit = float(evaluate_spectrum(np.ones(p.op.n), p.op).F) ** (1.0 / p.op.degree)
    I = dom.interior

    def min_boundary(a, b):
        return float(boundary_residual(ScalarField(dom, a * q + b), p).min())

    b = 0.0
    a = 1.0
    for _ in range(rounds):
        fmax = float(np.max(p.rhs(x[I], a * q[I] + b)))
        a_new = 1.0 if fmax <= 0 else (fmax + eps0) / unit
        # min boundary residual is nonincreasing in b because phi_z >= gamma0 > 0
        g = lambda t: min_boundary(a_new, t)
        lo, hi = b - 1.0, b + 1.0
        while g(lo) < 0:
            lo = b - 2.0 * (b - lo)
        while g(hi) > 0:
            hi = b + 2.0 * (hi - b)
        b_new = brentq(g, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
        if a_new == a and abs(b_new - b) <= 1e-14 * max(1.0, abs(b)):
            a, b = a_new, b_new
            break
        a, b = a_new, b_new
    return ScalarField(dom, a * q + b)


def regularized_sweep(p: ProblemSpec, cfg: SolverConfig | None = None, u0: ScalarField | None = None) -> list:
    """
    Solve with f~ + eps for each eps in the schedule, warm-starting each stage
    from the previous solution. Stops at the first failed stage.
    """
    cfg = cfg or SolverConfig()
    reports = []
    u = u0
    for eps in cfg.epsilon_schedule():
        stage = p.regularized(eps)
        if u is None:
            u = initial_guess(stage, cfg.eps0)
        u, rep = newton_solve(stage, u, cfg)
        rep.epsilon = eps
        reports.append(rep)
        if not rep.converged:
            log.warning("sweep aborted at eps=%g: %s", eps, rep.status)
            break
    return reports


@dataclass
class SubsolutionCheck:
    passed: bool
    interior_margin: float  # min over nodes of F~(D^2 ubar) - f~(x, ubar)
    boundary_min: float  # min of beta . Dubar - phi(x, ubar)
    boundary_max: float


def subsolution_check(
    ubar: ScalarField, p: ProblemSpec, tol_r: float = 1e-8, tol_b: float = 1e-8, boundary: str = "inequality"
) -> SubsolutionCheck:
    """
    Interior F~(D^2 ubar) >= f~(x, ubar) - tol_r, and on the boundary either
    beta . Dubar - phi >= -tol_b (``"inequality"``, what the comparison
    argument consumes) or |beta . Dubar - phi| <= tol_b (``"equality"``).
    """
    ev = evaluate_interior(ubar, p)
    B = boundary_residual(ubar, p)
    interior = float(ev.residual.min()) if ev.residual.size else float("inf")
    if boundary == "inequality":
        ok_b = B.min() >= -tol_b
    elif boundary == "equality":
        ok_b = np.abs(B).max() <= tol_b
    else:
        raise ValueError(f"unknown boundary mode {boundary!r}")
    return SubsolutionCheck(bool(interior >= -tol_r and ok_b), interior, float(B.min()), float(B.max()))


def _structure_ok(p: ProblemSpec, *fields: ScalarField) -> None:
    dom = p.domain
    I = dom.interior
    for v in fields:
        if np.any(p.rhs_z(dom.coords[I], v.values[I]) < 0):
            raise PreconditionError("f~_z >= 0 fails")
        _, pz = p.boundary_data(v.values)
        if np.any(pz < p.gamma0):
            raise PreconditionError(f"phi_z >= gamma0 = {p.gamma0} fails")


@dataclass
class ComparisonResult:
    holds: bool
    min_gap: float  # min over nodes of u - ubar


def comparison_check(
    u: ScalarField, ubar: ScalarField, p: ProblemSpec, tol: float = 1e-6, sub_tol: float = 1e-8
) -> ComparisonResult:
    """u >= ubar - tol everywhere, for a solution u and a subsolution ubar."""
    _structure_ok(p, u, ubar)
    sub = subsolution_check(ubar, p, sub_tol, sub_tol)
    if not sub.passed:
        raise PreconditionError(f"ubar is not a subsolution: {sub}")
    gap = float(np.min(u.values - ubar.values))
    return ComparisonResult(gap >= -tol, gap)


@dataclass
class MaxBound:
    node: int
    u_max: float
    bound: float
    holds: bool


def max_principle_bound(u: ScalarField, p: ProblemSpec, tol: float = 1e-6) -> MaxBound:
    """If max u > 0 it must satisfy u(x0) <= -phi(x0, 0) / gamma0 at the maximizing node."""
    i = int(np.argmax(u.values))
    umax = float(u.values[i])
    dom = p.domain
    if dom.kind[i] == 0:
        phi0 = float("nan")
        bound = float("inf") if umax <= 0 else float("nan")
    else:
        phi, _ = p.boundary_data(np.zeros(dom.n_nodes))
        # undo any corner row scaling: the bound is stated for the face-averaged phi
        phi0 = float(phi[np.searchsorted(dom.boundary, i)] / dom.boundary_scale[i])
        bound = -phi0 / p.gamma0
    holds = umax <= 0 or (np.isfinite(bound) and umax <= bound + tol)
    return MaxBound(i, umax, bound, bool(holds))
