"""Discrete total-variation operators and the Cauchy-noise restoration model.

The restoration energy on a noisy raster f is
``E(u) = tv(u) + (mu/2) * sum(log(gamma^2 + (u - f)^2))`` with the heavy-
tailed log fidelity.  Adding and subtracting (c/2)||u||^2 splits E into a
difference of two strongly convex parts whenever c > mu/gamma^2, which is
what :class:`CauchyModel` hands to the outer solvers.  Each outer iteration
then needs the strongly convex TV proximal problem
``min_u tv(u) + (c/2)||u||^2 - <v, u>``, solved here by an accelerated
primal-dual loop (:func:`tv_prox`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .dc_core import DcModel, SubproblemError

__all__ = [
    "CauchyModel",
    "GradientField",
    "PdConfig",
    "TvProxResult",
    "div",
    "energy",
    "grad",
    "grad_h_cauchy",
    "make_cauchy_model",
    "smooth_part_second_derivative",
    "tv",
    "tv_prox",
]

# squared operator norm of the forward-difference gradient pair
GRAD_NORM_SQ_BOUND = 8.0


class GradientField(NamedTuple):
    """Horizontal and vertical forward differences of a raster."""

    px: np.ndarray
    py: np.ndarray


def grad(u):
    """Forward differences, zero past the last column (px) / last row (py)."""
    u = np.asarray(u, dtype=float)
    px = np.zeros_like(u)
    py = np.zeros_like(u)
    px[:, :-1] = u[:, 1:] - u[:, :-1]
    py[:-1, :] = u[1:, :] - u[:-1, :]
    return GradientField(px, py)


def div(p):
    """Negative adjoint of :func:`grad`: <grad u, p> = -<u, div p> exactly.

    Backward differences with boundary truncation; values on the last column
    of px and last row of py never contribute (grad never produces them).
    """
    px, py = p
    out = np.zeros_like(np.asarray(px, dtype=float))
    out[:, :-1] += px[:, :-1]
    out[:, 1:] -= px[:, :-1]
    out[:-1, :] += py[:-1, :]
    out[1:, :] -= py[:-1, :]
    return out


def tv(u):
    """Isotropic discrete total variation: sum of sqrt(px^2 + py^2)."""
    px, py = grad(u)
    return float(np.sqrt(px * px + py * py).sum())


def energy(u, model):
    """Restoration energy tv(u) + (mu/2) * sum(log(gamma^2 + (u-f)^2))."""
    u = np.asarray(u, dtype=float)
    if u.shape != model.f.shape:
        raise ValueError(f"image shape {u.shape} does not match observation "
                         f"shape {model.f.shape}")
    r = u - model.f
    fidelity = 0.5 * model.mu * float(np.log(model.gamma ** 2 + r * r).sum())
    return tv(u) + fidelity


def grad_h_cauchy(u, model):
    """Gradient of the smooth DC part h at u, elementwise.

    h(u) = -(mu/2) sum log(gamma^2 + (u-f)^2) + (c/2)||u||^2, so the
    fidelity contributes -mu*(u-f)/(gamma^2 + (u-f)^2).
    """
    u = np.asarray(u, dtype=float)
    r = u - model.f
    return model.c * u - model.mu * r / (model.gamma ** 2 + r * r)


def smooth_part_second_derivative(t, mu, gamma, c):
    """Scalar d^2/dt^2 of -(mu/2) log(gamma^2 + t^2) + (c/2) t^2.

    Nonnegative everywhere iff c >= mu/gamma^2 (the minimum sits at t = 0).
    """
    t = np.asarray(t, dtype=float)
    g2 = gamma * gamma
    return mu * (t * t - g2) / (g2 + t * t) ** 2 + c


@dataclass
class PdConfig:
    """Inner primal-dual solver settings.

    tau0 * sigma0 must respect the operator-norm bound
    tau0 * sigma0 * 8 <= 1; the stop is on relative primal change.
    """

    max_inner_iter: int = 300
    tol_inner: float = 1e-5
    tau0: float = 1.0 / math.sqrt(8.0)
    sigma0: float = 1.0 / math.sqrt(8.0)

    def __post_init__(self):
        if self.max_inner_iter < 1:
            raise ValueError("max_inner_iter must be at least 1")
        if not self.tol_inner > 0.0:
            raise ValueError("tol_inner must be positive")
        if not (self.tau0 > 0.0 and self.sigma0 > 0.0):
            raise ValueError("step sizes must be positive")
        if self.tau0 * self.sigma0 * GRAD_NORM_SQ_BOUND > 1.0 + 1e-9:
            raise ValueError("tau0 * sigma0 * 8 must not exceed 1")


class TvProxResult(NamedTuple):
    u: np.ndarray
    iters: int
    resid: float
    converged: bool


def tv_prox(v, c, cfg=None, u0=None):
    """Minimize tv(u) + (c/2)||u||^2 - <v, u>.

    Accelerated primal-dual iteration on the saddle-point form
    min_u max_{||p||<=1 pointwise} <grad u, p> + (c/2)||u||^2 - <v, u>:
    dual ascent with pointwise projection of (px, py) onto the unit 2-ball,
    primal step (u + tau*div p + tau*v) / (1 + tau*c), and step sizes and
    extrapolation updated from the strong-convexity modulus c.  Starts from
    u0 (default v/c) so outer iterations can warm start from their current
    iterate.

    The returned point is the primal recovered from the dual variable,
    u_hat = (v + div p)/c, which the saddle-point optimality condition makes
    exact at the dual optimum; the dual settles orders of magnitude sooner
    than the prox iterate, whose step sizes vanish.  The stop is on the
    relative change of u_hat; when max_inner_iter is reached first the best
    iterate comes back flagged ``converged=False``.
    """
    if not c > 0.0:
        raise ValueError("c must be positive")
    cfg = PdConfig() if cfg is None else cfg
    v = np.asarray(v, dtype=float)
    u = v / c if u0 is None else np.array(u0, dtype=float, copy=True)
    ubar = u.copy()
    u_hat_prev = u
    px = np.zeros_like(v)
    py = np.zeros_like(v)
    tau, sigma = cfg.tau0, cfg.sigma0

    u_hat = u
    resid = math.inf
    converged = False
    iters = 0
    for iters in range(1, cfg.max_inner_iter + 1):
        gx, gy = grad(ubar)
        px += sigma * gx
        py += sigma * gy
        mag = np.maximum(1.0, np.sqrt(px * px + py * py))
        px /= mag
        py /= mag

        divp = div((px, py))
        u_hat = (v + divp) / c
        u_prev = u
        u = (u + tau * divp + tau * v) / (1.0 + tau * c)
        theta = 1.0 / math.sqrt(1.0 + 2.0 * c * tau)
        tau *= theta
        sigma /= theta
        ubar = u + theta * (u - u_prev)

        resid = float(np.linalg.norm(u_hat - u_hat_prev)) / max(
            float(np.linalg.norm(u_hat_prev)), 1e-300)
        u_hat_prev = u_hat
        if resid <= cfg.tol_inner:
            converged = True
            break
    return TvProxResult(u_hat, iters, resid, converged)


class CauchyModel(DcModel):
    """DC split of the Cauchy-noise restoration energy for one observation.

    g(u) = tv(u) + (c/2)||u||^2 and
    h(u) = -(mu/2) sum log(gamma^2 + (u-f)^2) + (c/2)||u||^2, so
    phi = g - h is exactly :func:`energy`.  Requires c > mu/gamma^2 strictly
    (h is then (c - mu/gamma^2)-strongly convex); g has modulus c, hence the
    shared modulus is rho = c - mu/gamma^2.

    The subproblem is :func:`tv_prox` at v = grad_h(u), warm started from u.
    """

    def __init__(self, f, mu, gamma, c, inner=None):
        f = np.asarray(f, dtype=float)
        if f.ndim != 2 or min(f.shape) < 2:
            raise ValueError("observation must be a 2-D raster, at least 2x2")
        if not np.all(np.isfinite(f)):
            raise ValueError("observation contains non-finite entries")
        if not (mu > 0.0 and gamma > 0.0 and c > 0.0):
            raise ValueError("mu, gamma and c must be positive")
        if c <= mu / gamma ** 2:
            raise ValueError(
                f"need c > mu/gamma^2 for a strongly convex split "
                f"(c={c:g}, mu/gamma^2={mu / gamma ** 2:g})")
        self.f = f
        self.mu = float(mu)
        self.gamma = float(gamma)
        self.c = float(c)
        self.inner = PdConfig() if inner is None else inner
        self.dim = f.size
        self.rho = self.c - self.mu / self.gamma ** 2

    def eval_g(self, u):
        u = np.asarray(u, dtype=float)
        return tv(u) + 0.5 * self.c * float(np.vdot(u, u))

    def eval_h(self, u):
        u = np.asarray(u, dtype=float)
        r = u - self.f
        return (-0.5 * self.mu * float(np.log(self.gamma ** 2 + r * r).sum())
                + 0.5 * self.c * float(np.vdot(u, u)))

    def phi(self, u):
        # direct form of g - h; avoids the cancelling (c/2)||u||^2 terms
        return energy(u, self)

    def grad_h(self, u):
        return grad_h_cauchy(u, self)

    def solve_subproblem(self, u):
        return self.solve_subproblem_with_info(u)[0]

    def solve_subproblem_with_info(self, u):
        result = tv_prox(self.grad_h(u), self.c, self.inner, u0=u)
        if not np.all(np.isfinite(result.u)):
            raise SubproblemError("inner solver produced non-finite iterate",
                                  residual=result.resid)
        info = {
            "inner_iters": float(result.iters),
            "inner_resid": result.resid,
            "inner_converged": 1.0 if result.converged else 0.0,
        }
        return result.u, info


def make_cauchy_model(f, mu, gamma, c, inner=None):
    """Build the restoration model; rejects c <= mu/gamma^2."""
    return CauchyModel(f, mu, gamma, c, inner)
