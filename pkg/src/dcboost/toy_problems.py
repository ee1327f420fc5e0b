"""Two closed-form 2-D test problems and the random-start attractor count.

Both problems admit exact subproblem solvers, so the outer iterations carry
no inner-solver error and solver behavior can be checked against hand
arithmetic.  The second problem (a SCAD-shaped separable penalty plus
quadratic growth) has four critical points on [0,3]^2, only one of which is
the global minimum; counting which one each random start converges to is the
standard way to compare how well the solver variants escape the poor ones.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dc_core import DcModel, SolverConfig, Variant, solve

__all__ = [
    "ATTRACTOR_LABELS",
    "BasinReport",
    "QuadL1Problem",
    "ScadSeparableProblem",
    "basin_experiment",
    "classify_attractor",
    "default_basin_config",
    "quadl1_criticality_gap",
    "quadl1_subproblem",
    "scad_criticality_gap",
    "scad_g_tilde",
    "scad_h_tilde",
    "scad_h_tilde_prime",
    "scad_phi_tilde",
    "scad_subproblem_1d",
    "write_basin_csv",
]


# ---------------------------------------------------------------------------
# quadratic-plus-l1 problem
# ---------------------------------------------------------------------------

def soft_threshold_half(t):
    """argmin_s of s^2 + |s| - t*s, i.e. sign(t) * max(|t| - 1, 0) / 2."""
    return math.copysign(max(abs(t) - 1.0, 0.0) * 0.5, t)


def quadl1_subproblem(x):
    """Closed-form subproblem solution for :class:`QuadL1Problem`.

    grad_h(x) = x there, so the subproblem separates into two scalar
    soft thresholds: first coordinate s(5/2 + u), second s(v).
    """
    u, v = float(x[0]), float(x[1])
    return np.array([soft_threshold_half(2.5 + u), soft_threshold_half(v)])


class QuadL1Problem(DcModel):
    """phi(u,v) = -(5/2)u + (u^2+v^2)/2 + |u| + |v|, split as g - h with
    g = -(5/2)u + u^2 + v^2 + |u| + |v| and h = (u^2+v^2)/2.

    g is 2-strongly convex, h is 1-strongly convex; the shared modulus is 1.
    The global minimizer is (3/2, 0) with value -9/8.  The DCA direction at
    (1, 0) ascends through the |v| kink, which makes this the canonical case
    where a line search started at y fails.
    """

    dim = 2
    rho = 1.0

    def eval_g(self, x):
        u, v = float(x[0]), float(x[1])
        return -2.5 * u + u * u + v * v + abs(u) + abs(v)

    def eval_h(self, x):
        u, v = float(x[0]), float(x[1])
        return 0.5 * (u * u + v * v)

    def phi(self, x):
        u, v = float(x[0]), float(x[1])
        return -2.5 * u + 0.5 * (u * u + v * v) + abs(u) + abs(v)

    def grad_h(self, x):
        return np.array([float(x[0]), float(x[1])])

    def solve_subproblem(self, x):
        return quadl1_subproblem(x)


def quadl1_criticality_gap(x):
    """Distance from grad_h(x) to the subdifferential of g at x.

    Zero exactly at critical points; used as the termination certificate.
    """
    u, v = float(x[0]), float(x[1])
    if u != 0.0:
        gap_u = abs(u - (-2.5 + 2.0 * u + math.copysign(1.0, u)))
    else:
        gap_u = _dist_to_interval(u, -3.5, -1.5)
    if v != 0.0:
        gap_v = abs(v - (2.0 * v + math.copysign(1.0, v)))
    else:
        gap_v = _dist_to_interval(v, -1.0, 1.0)
    return max(gap_u, gap_v)


def _dist_to_interval(w, lo, hi):
    if w < lo:
        return lo - w
    if w > hi:
        return w - hi
    return 0.0


# ---------------------------------------------------------------------------
# SCAD-shaped separable problem
# ---------------------------------------------------------------------------

def scad_g_tilde(u):
    """Convex part per coordinate: |u| + u^2/5, plus (|u|-2)^2 beyond |u|=2."""
    a = abs(u)
    if a < 2.0:
        return a + u * u / 5.0
    return a + (a - 2.0) ** 2 + u * u / 5.0


def scad_h_tilde(u):
    """Smooth part per coordinate, C^1 across the breakpoints |u| in {1, 2}."""
    a = abs(u)
    if a <= 1.0:
        return u * u / 5.0
    if a < 2.0:
        return (u * u - 2.0 * a + 1.0) / 2.0 + u * u / 5.0
    return a - 1.5 + u * u / 5.0


def scad_h_tilde_prime(u):
    a = abs(u)
    if a <= 1.0:
        return 0.4 * u
    if a < 2.0:
        return u - math.copysign(1.0, u) + 0.4 * u
    return math.copysign(1.0, u) + 0.4 * u


def scad_phi_tilde(u):
    """The per-coordinate objective g~ - h~ in closed form.

    |u| on [-1,1], then |u| - (|u|-1)^2/2, then (|u|-2)^2 + 3/2 beyond 2:
    the SCAD shape with quadratic growth.  Nonnegative, zero only at 0;
    stationary also at |u| = 2, which is not a local minimum.
    """
    a = abs(u)
    if a <= 1.0:
        return a
    if a < 2.0:
        return a - (a - 1.0) ** 2 / 2.0
    return (a - 2.0) ** 2 + 1.5


def scad_subproblem_1d(w):
    """Unique minimizer of scad_g_tilde(t) - w*t.

    Candidates are the stationary point of each smooth branch (kept when it
    falls inside its interval) plus the breakpoints {-2, 0, 2}; strong
    convexity makes the best candidate the global minimizer.
    """
    w = float(w)
    candidates = [-2.0, 0.0, 2.0]
    t = 2.5 * (w - 1.0)            # branch (0, 2):    1 + 2t/5 = w
    if 0.0 < t < 2.0:
        candidates.append(t)
    t = 5.0 * (w + 3.0) / 12.0     # branch [2, inf):  1 + 2(t-2) + 2t/5 = w
    if t >= 2.0:
        candidates.append(t)
    t = 2.5 * (w + 1.0)            # branch (-2, 0):  -1 + 2t/5 = w
    if -2.0 < t < 0.0:
        candidates.append(t)
    t = 5.0 * (w - 3.0) / 12.0     # branch (-inf,-2]: -1 + 2(t+2) + 2t/5 = w
    if t <= -2.0:
        candidates.append(t)
    return min(candidates, key=lambda s: scad_g_tilde(s) - w * s)


class ScadSeparableProblem(DcModel):
    """phi(u, v) = scad_phi_tilde(u) + scad_phi_tilde(v).

    Critical points have each coordinate in {-2, 0, 2}; on the sampling box
    [0,3]^2 the four reachable ones are {0, 2}^2 and only (0, 0) is the
    global minimum.  Both parts carry the u^2/5 quadratic, so rho = 2/5.
    """

    dim = 2
    rho = 0.4

    def eval_g(self, x):
        return scad_g_tilde(float(x[0])) + scad_g_tilde(float(x[1]))

    def eval_h(self, x):
        return scad_h_tilde(float(x[0])) + scad_h_tilde(float(x[1]))

    def phi(self, x):
        return scad_phi_tilde(float(x[0])) + scad_phi_tilde(float(x[1]))

    def grad_h(self, x):
        return np.array([scad_h_tilde_prime(float(x[0])),
                         scad_h_tilde_prime(float(x[1]))])

    def solve_subproblem(self, x):
        return np.array([scad_subproblem_1d(scad_h_tilde_prime(float(x[0]))),
                         scad_subproblem_1d(scad_h_tilde_prime(float(x[1])))])


def _scad_g_tilde_prime(t):
    # single-valued away from 0; g~ is smooth at |t| = 2
    d = math.copysign(1.0, t) + 0.4 * t
    if abs(t) >= 2.0:
        d += 2.0 * (abs(t) - 2.0) * math.copysign(1.0, t)
    return d


def scad_criticality_gap(x):
    """Distance from grad_h(x) to the subdifferential of g at x."""
    gap = 0.0
    for t in (float(x[0]), float(x[1])):
        w = scad_h_tilde_prime(t)
        if t != 0.0:
            gap = max(gap, abs(w - _scad_g_tilde_prime(t)))
        else:
            gap = max(gap, _dist_to_interval(w, -1.0, 1.0))
    return gap


# ---------------------------------------------------------------------------
# attractor-count experiment
# ---------------------------------------------------------------------------

ATTRACTORS = ((0.0, 0.0), (0.0, 2.0), (2.0, 0.0), (2.0, 2.0))
ATTRACTOR_LABELS = ("(0,0)", "(0,2)", "(2,0)", "(2,2)")
OTHER_LABEL = "other"
CLASSIFY_RADIUS = 1e-3
SAMPLE_LOW, SAMPLE_HIGH = 0.0, 3.0


@dataclass
class BasinReport:
    """Attractor counts for one experiment; counts always sum to n_points."""

    counts: dict
    n_points: int
    variant: Variant
    elapsed: float
    seed: int | None = None


def classify_attractor(point):
    """Label of the attractor within the classification radius, else 'other'."""
    u, v = float(point[0]), float(point[1])
    for label, (au, av) in zip(ATTRACTOR_LABELS, ATTRACTORS):
        if math.hypot(u - au, v - av) <= CLASSIFY_RADIUS:
            return label
    return OTHER_LABEL


def default_basin_config(variant):
    """Experiment defaults: alpha 0.2, beta 0.7, first trial step 3.

    The nonmonotone variant searches from y = x + d, so its first trial step
    defaults to 2 to keep the farthest probed point (at x + 3d) the same.
    """
    variant = Variant(variant)
    lambda_bar = 2.0 if variant is Variant.NMBDCA else 3.0
    return SolverConfig(variant=variant, alpha=0.2, beta=0.7,
                        lambda_bar=lambda_bar, max_outer_iter=500,
                        tol_rel_energy=0.0, tol_direction=1e-10,
                        max_backtracks=60)


def _count_chunk(points, cfg):
    model = ScadSeparableProblem()
    counts = dict.fromkeys(ATTRACTOR_LABELS + (OTHER_LABEL,), 0)
    for point in points:
        result = solve(model, point, cfg, record_trace=False)
        counts[classify_attractor(result.final_point)] += 1
    return counts


def basin_experiment(n_points, seed, variant, cfg=None, points=None,
                     n_workers=1):
    """Solve from uniform random starts in [0,3]^2 and count the limits.

    Points are drawn once from a counter-based generator keyed by ``seed``,
    so the report is identical for any worker count.  ``points`` overrides
    the drawing with explicit start coordinates (used by tests that need a
    start sitting exactly on an attractor).
    """
    if points is None:
        if n_points < 1:
            raise ValueError("n_points must be at least 1")
        rng = np.random.Generator(np.random.Philox(key=seed))
        points = SAMPLE_LOW + (SAMPLE_HIGH - SAMPLE_LOW) * rng.random((n_points, 2))
    else:
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        n_points = len(points)

    cfg = default_basin_config(variant) if cfg is None else cfg
    t0 = time.perf_counter()
    if n_workers > 1:
        chunks = np.array_split(points, n_workers)
        counts = dict.fromkeys(ATTRACTOR_LABELS + (OTHER_LABEL,), 0)
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            for chunk_counts in pool.map(_count_chunk, chunks, [cfg] * len(chunks)):
                for label, n in chunk_counts.items():
                    counts[label] += n
    else:
        counts = _count_chunk(points, cfg)
    elapsed = time.perf_counter() - t0
    return BasinReport(counts, n_points, cfg.variant, elapsed, seed=seed)


def write_basin_csv(report, path):
    """Report as ``attractor,count`` rows under a metadata comment line."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# seed={report.seed} n_points={report.n_points} "
                 f"variant={report.variant.value} "
                 f"elapsed_s={report.elapsed:.3f}\n")
        fh.write("attractor,count\n")
        for label in ATTRACTOR_LABELS + (OTHER_LABEL,):
            name = f'"{label}"' if "," in label else label
            fh.write(f"{name},{report.counts.get(label, 0)}\n")
