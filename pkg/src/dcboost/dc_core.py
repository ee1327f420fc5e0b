"""Solvers for programs of the form min phi = g - h with g, h convex.

Each outer iteration linearizes the smooth part h at the current point and
solves the strongly convex subproblem min g(.) - <grad_h(x), .>, giving a
point y and a direction d = y - x.  The next iterate is then chosen by the
configured variant:

* ``DCA``    take y itself.
* ``BDCA``   Armijo backtracking from y along d.  When g is nonsmooth, d can
  be an ascent direction at y and the search fails; the step then degrades
  to the plain DCA step.
* ``NMBDCA`` like BDCA but the acceptance test is relaxed by an allowance
  ||d||^2 / (k+1), so some positive step is essentially always available at
  the price of controlled objective increases.
* ``IBDCA``  backtracking from x along d under a two-part test: sufficient
  decrease from phi(x) and dominance over phi(y).  If no trial step above 1
  passes, the step is clamped to exactly 1 (a pure DCA step), which keeps
  the objective monotone even where BDCA fails.

Models supply evaluators through the :class:`DcModel` interface; points are
numpy arrays of any shape (the imaging model uses 2-D rasters directly).
"""

from __future__ import annotations

import math
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = [
    "DcModel",
    "IterateRecord",
    "SolveResult",
    "SolverConfig",
    "Status",
    "SubproblemError",
    "Variant",
    "bdca_line_search",
    "dca_step",
    "ibdca_line_search",
    "nmbdca_line_search",
    "solve",
    "trace_header",
    "trace_row",
    "write_trace_csv",
]


class Variant(str, Enum):
    """Which rule picks the next iterate from (x, y, d)."""

    DCA = "dca"
    BDCA = "bdca"
    NMBDCA = "nmbdca"
    IBDCA = "ibdca"


class Status(str, Enum):
    CRITICAL_POINT = "critical_point"
    REL_ENERGY_CONVERGED = "rel_energy_converged"
    MAX_ITERATIONS = "max_iterations"


class SubproblemError(RuntimeError):
    """The convex subproblem solver produced unusable output.

    Carries the inner residual (when known) and the partial outer trace so a
    failed run can still be inspected.
    """

    def __init__(self, message, residual=float("nan"), trace=None):
        super().__init__(message)
        self.residual = residual
        self.trace = trace if trace is not None else []


class DcModel(ABC):
    """A difference-of-convex program phi = g - h.

    Implementations expose the two convex parts, the gradient of the smooth
    part h, and the solver of the linearized subproblem
    ``min g(.) - <grad_h(x), .>``.  ``rho`` is a strong-convexity modulus
    valid for both g and h; it drives the per-step decrease bound
    ``phi(y) <= phi(x) - rho * ||y - x||^2`` that the line searches rely on.
    ``dim`` is the ambient dimension (number of scalar unknowns).

    Evaluators must be pure: many solves may run concurrently against one
    shared model instance.
    """

    dim: int
    rho: float

    @abstractmethod
    def eval_g(self, x):
        """Value of the (possibly nonsmooth) convex part, extended real."""

    @abstractmethod
    def eval_h(self, x):
        """Value of the smooth convex part."""

    @abstractmethod
    def grad_h(self, x):
        """Gradient of h at x, same shape as x."""

    @abstractmethod
    def solve_subproblem(self, x):
        """Unique minimizer of g(.) - <grad_h(x), .>."""

    def phi(self, x):
        return self.eval_g(x) - self.eval_h(x)

    def solve_subproblem_with_info(self, x):
        """Subproblem solution plus solver diagnostics (empty by default)."""
        return self.solve_subproblem(x), {}


@dataclass
class SolverConfig:
    """Outer-loop parameters.

    ``alpha`` is the sufficient-decrease coefficient (theory wants
    alpha < model.rho), ``beta`` the backtracking shrink factor, and
    ``lambda_bar`` the first trial step of every line search.  The loop stops
    when ``||d|| <= tol_direction`` (critical point), when the relative
    objective change drops to ``tol_rel_energy`` (disabled when <= 0), or
    after ``max_outer_iter`` iterations.
    """

    variant: Variant = Variant.IBDCA
    alpha: float = 0.2
    beta: float = 0.7
    lambda_bar: float = 3.0
    max_outer_iter: int = 500
    tol_rel_energy: float = 0.0
    tol_direction: float = 1e-10
    max_backtracks: int = 60

    def __post_init__(self):
        self.variant = Variant(self.variant)
        if not self.alpha > 0.0:
            raise ValueError("alpha must be positive")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie strictly between 0 and 1")
        if not self.lambda_bar > 1.0:
            raise ValueError("lambda_bar must exceed 1")
        if self.max_outer_iter < 1:
            raise ValueError("max_outer_iter must be at least 1")
        if self.tol_direction < 0.0:
            raise ValueError("tol_direction must be nonnegative")
        if self.max_backtracks < 1:
            raise ValueError("max_backtracks must be at least 1")


@dataclass
class IterateRecord:
    """One outer iteration: the state x^k plus the step taken from it.

    ``lam`` and ``backtracks`` describe the accepted line-search step; the
    terminal record of a critical-point stop has ``lam == 0`` (no step was
    taken).  ``wall_time`` is seconds since the solve started.  ``aux``
    carries model diagnostics such as inner-solver iteration counts.
    """

    k: int
    x: np.ndarray
    phi: float
    d_norm: float
    lam: float
    backtracks: int
    wall_time: float
    aux: dict = field(default_factory=dict)


@dataclass
class SolveResult:
    final_point: np.ndarray
    final_phi: float
    status: Status
    trace: list
    monotone_violations: int = 0
    linesearch_failures: int = 0


def _sqnorm(a):
    return float(np.vdot(a, a))


def dca_step(model, x):
    """One linearized step: returns (y, d) with y the subproblem solution."""
    y = model.solve_subproblem(x)
    if not np.all(np.isfinite(y)):
        raise SubproblemError("subproblem returned non-finite entries")
    return y, y - x


def ibdca_line_search(model, x, y, d, cfg, phi_x=None, phi_y=None):
    """Backtrack from x along d = y - x; returns ``(lam, backtracks)``.

    Trial steps walk the ladder lambda_bar * beta^j.  A rung is accepted
    when both phi(x + lam*d) <= phi(x) - alpha*lam*||d||^2 and
    phi(x + lam*d) <= phi(y) hold.  Rungs <= 1 are never evaluated: the
    search clamps to exactly 1, the pure DCA step, which satisfies both
    conditions whenever alpha <= model.rho.  The returned lam therefore
    always lies in [1, lambda_bar].
    """
    if phi_x is None:
        phi_x = model.phi(x)
    if phi_y is None:
        phi_y = model.phi(y)
    dsq = _sqnorm(d)
    lam = cfg.lambda_bar
    for bt in range(cfg.max_backtracks):
        if lam <= 1.0:
            return 1.0, bt
        trial = model.phi(x + lam * d)
        if trial <= phi_x - cfg.alpha * lam * dsq and trial <= phi_y:
            return lam, bt
        lam *= cfg.beta
    return 1.0, cfg.max_backtracks


def _armijo_floor(phi_y, alpha, dsq):
    # below this lam the decrease term is absorbed by rounding of phi(y),
    # so the test can no longer certify descent
    return np.finfo(float).eps * max(1.0, abs(phi_y)) / (alpha * dsq)


def bdca_line_search(model, y, d, cfg, phi_y=None):
    """Armijo backtracking from y along d; returns ``(lam, backtracks)``.

    Accepts the first ladder rung with
    phi(y + lam*d) <= phi(y) - alpha*lam*||d||^2.  Returns lam = 0 when the
    ladder is exhausted, which happens precisely when d is not a descent
    direction at y (the nonsmooth-g failure mode); callers should fall back
    to the plain DCA step in that case.  Rungs small enough that the
    decrease term vanishes in floating point are not tested: they could only
    be accepted through rounding, never through actual descent.
    """
    if phi_y is None:
        phi_y = model.phi(y)
    dsq = _sqnorm(d)
    floor = _armijo_floor(phi_y, cfg.alpha, dsq)
    lam = cfg.lambda_bar
    for bt in range(cfg.max_backtracks):
        if lam < floor:
            return 0.0, bt
        if model.phi(y + lam * d) <= phi_y - cfg.alpha * lam * dsq:
            return lam, bt
        lam *= cfg.beta
    return 0.0, cfg.max_backtracks


def nmbdca_line_search(model, y, d, k, cfg, phi_y=None):
    """Nonmonotone variant of :func:`bdca_line_search`.

    The acceptance threshold is relaxed by the allowance
    v_k = ||d||^2 / (k+1), so the objective may grow by at most v_k per
    step.  Because the right side exceeds phi(y) by v_k > 0 while the left
    side tends to phi(y) as lam -> 0, the search terminates with a positive
    step for any sufficiently deep ladder; lam = 0 signals that
    max_backtracks could not reach that regime.
    """
    if phi_y is None:
        phi_y = model.phi(y)
    dsq = _sqnorm(d)
    allowance = dsq / (k + 1)
    floor = _armijo_floor(phi_y, cfg.alpha, dsq)
    lam = cfg.lambda_bar
    for bt in range(cfg.max_backtracks):
        if lam < floor:
            return 0.0, bt
        if model.phi(y + lam * d) <= phi_y - cfg.alpha * lam * dsq + allowance:
            return lam, bt
        lam *= cfg.beta
    return 0.0, cfg.max_backtracks


def solve(model, x0, cfg, record_trace=True, on_record=None):
    """Run the configured variant from x0 until a stopping rule fires.

    Per iteration the subproblem is solved once; the trace gets one record
    per iteration holding the iterate at its start and the accepted step.
    Critical-point stops append a final record with lam = 0.  For DCA and
    IBDCA the phi column of the trace is nonincreasing; violations beyond
    1e-8 relative (possible only through inexact subproblems) are counted in
    ``monotone_violations``.

    ``on_record`` is called with each record as it is produced, which lets
    callers stream trace rows to disk so partial results survive an
    interrupted run.

    Raises :class:`SubproblemError` with the partial trace attached when the
    subproblem solver breaks down.
    """
    x = np.array(x0, dtype=float, copy=True)
    if x.size != model.dim:
        raise ValueError(f"x0 has {x.size} entries, model expects {model.dim}")
    phi_x = float(model.phi(x))
    if not math.isfinite(phi_x):
        raise ValueError("phi(x0) is not finite; x0 lies outside dom g")

    trace = []
    keep_records = record_trace or on_record is not None

    def emit(record):
        if record_trace:
            trace.append(record)
        if on_record is not None:
            on_record(record)

    monotone_violations = 0
    linesearch_failures = 0
    t0 = time.perf_counter()

    for k in range(cfg.max_outer_iter):
        try:
            y, info = model.solve_subproblem_with_info(x)
        except SubproblemError as err:
            err.trace = trace
            raise
        d = y - x
        d_norm = math.sqrt(_sqnorm(d))
        if not math.isfinite(d_norm):
            raise SubproblemError(
                "subproblem produced a non-finite direction",
                residual=d_norm,
                trace=trace,
            )

        if d_norm <= cfg.tol_direction:
            if keep_records:
                emit(IterateRecord(k, x, phi_x, d_norm, 0.0, 0,
                                   time.perf_counter() - t0, dict(info)))
            return SolveResult(x, phi_x, Status.CRITICAL_POINT, trace,
                               monotone_violations, linesearch_failures)

        phi_y = float(model.phi(y))
        if cfg.variant is Variant.DCA:
            lam, bt = 1.0, 0
            x_next, phi_next = y, phi_y
        elif cfg.variant is Variant.IBDCA:
            lam, bt = ibdca_line_search(model, x, y, d, cfg,
                                        phi_x=phi_x, phi_y=phi_y)
            if lam == 1.0:
                x_next, phi_next = y, phi_y
            else:
                x_next = x + lam * d
                phi_next = float(model.phi(x_next))
        else:
            if cfg.variant is Variant.BDCA:
                lam, bt = bdca_line_search(model, y, d, cfg, phi_y=phi_y)
            else:
                lam, bt = nmbdca_line_search(model, y, d, k, cfg, phi_y=phi_y)
            if lam == 0.0:
                linesearch_failures += 1
                x_next, phi_next = y, phi_y
            else:
                x_next = y + lam * d
                phi_next = float(model.phi(x_next))

        if keep_records:
            emit(IterateRecord(k, x, phi_x, d_norm, lam, bt,
                               time.perf_counter() - t0, dict(info)))
        if cfg.variant in (Variant.DCA, Variant.IBDCA):
            if phi_next > phi_x + 1e-8 * max(1.0, abs(phi_x)):
                monotone_violations += 1

        rel_change = abs(phi_x - phi_next) / max(abs(phi_x), 1e-300)
        x, phi_x = x_next, phi_next
        if cfg.tol_rel_energy > 0.0 and rel_change <= cfg.tol_rel_energy:
            return SolveResult(x, phi_x, Status.REL_ENERGY_CONVERGED, trace,
                               monotone_violations, linesearch_failures)

    return SolveResult(x, phi_x, Status.MAX_ITERATIONS, trace,
                       monotone_violations, linesearch_failures)


TRACE_COLUMNS = ("k", "phi", "d_norm", "lambda", "backtracks", "wall_time_s")


def _g17(value):
    return format(float(value), ".17g")


def trace_header(aux_keys=()):
    return ",".join(TRACE_COLUMNS + tuple(aux_keys))


def trace_row(rec, aux_keys=()):
    """One CSV row for a record, floats rendered with 17 significant digits."""
    row = [
        str(rec.k),
        _g17(rec.phi),
        _g17(rec.d_norm),
        _g17(rec.lam),
        str(rec.backtracks),
        _g17(rec.wall_time),
    ]
    row.extend(_g17(rec.aux.get(key, float("nan"))) for key in tuple(aux_keys))
    return ",".join(row)


def write_trace_csv(trace, path, aux_keys=()):
    """Write trace rows as CSV.

    ``aux_keys`` appends extra columns pulled from each record's aux dict
    (missing entries become nan).
    """
    aux_keys = tuple(aux_keys)
    with open(path, "w", newline="") as fh:
        fh.write(trace_header(aux_keys) + "\n")
        for rec in trace:
            fh.write(trace_row(rec, aux_keys) + "\n")
