"""Catalog of closed-form solutions and the data they induce.

For a solution ``u`` the bulk source and the boundary source are

    f = u_t - div(kappa grad u)
    g = u_t - beta * lap_Gamma u + kappa * du/dn + alpha * u      (dynamic BC)
    g = u|_Gamma                                                   (Dirichlet)

All derivatives are written out by hand; :func:`strong_form_residual` checks
them against finite differences of ``u`` alone.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..assembly import CoefficientSet

__all__ = [
    "PRESETS",
    "ManufacturedCase",
    "make_manufactured_case",
    "list_presets",
    "square_normal",
    "strong_form_residual",
]

PRESETS = ("dirichlet_1d_poly", "wentzell_1d_trig", "wentzell_2d_cos", "nonlocal_2d_cos")

_DESCRIPTIONS = {
    "dirichlet_1d_poly": "u = exp(-t)(x^2+1) on [0,1], kappa=1, Dirichlet constraint",
    "wentzell_1d_trig": "u = exp(-t) sin(pi x + pi/4) on [0,1], kappa=1, alpha=1, beta=0",
    "wentzell_2d_cos": "u = exp(-t) cos(pi x) cos(pi y) on [0,1]^2, kappa=1, alpha=1, beta=0",
    "nonlocal_2d_cos": "u = exp(-t) cos(pi x) cos(pi y) on [0,1]^2, kappa=1, alpha=1, beta=1",
}

_FORMULATION = {
    "dirichlet_1d_poly": "dirichlet_pdae",
    "wentzell_1d_trig": "wentzell",
    "wentzell_2d_cos": "wentzell",
    "nonlocal_2d_cos": "nonlocal",
}


def square_normal(X) -> np.ndarray:
    """Outward unit normal of the unit square at boundary points ``X``.

    Corners get the normal of the edge that starts there when walking
    counterclockwise from the origin.
    """
    X = np.atleast_2d(X)
    x, y = X[:, 0], X[:, 1]
    tol = 1e-12
    n = np.zeros_like(X)
    bottom = (np.abs(y) < tol) & (x < 1 - tol)
    right = (np.abs(x - 1) < tol) & (y < 1 - tol)
    top = (np.abs(y - 1) < tol) & (x > tol)
    left = (np.abs(x) < tol) & (y > tol)
    n[bottom] = (0.0, -1.0)
    n[right] = (1.0, 0.0)
    n[top] = (0.0, 1.0)
    n[left] = (-1.0, 0.0)
    if not np.all(left | top | right | bottom):
        raise ValueError("points off the unit square boundary")
    return n


def _interval_normal(X) -> np.ndarray:
    x = np.atleast_2d(X)[:, 0]
    return np.where(x < 0.5, -1.0, 1.0)[:, None]


@dataclass(frozen=True)
class ManufacturedCase:
    name: str
    formulation: str
    dim: int
    coeffs: CoefficientSet
    exact_u: Callable
    u_t: Callable
    grad_u: Callable
    lap_u: Callable
    # second tangential derivative of the trace (Laplace-Beltrami on a polygon)
    lap_gamma_u: Optional[Callable] = None
    description: str = ""

    @property
    def kappa(self) -> float:
        return float(self.coeffs.kappa)

    def normal(self, X) -> np.ndarray:
        return _interval_normal(X) if self.dim == 1 else square_normal(X)

    def f(self, X, t):
        return self.u_t(X, t) - self.kappa * self.lap_u(X, t)

    def flux(self, X, t):
        """Normal flux ``kappa * du/dn`` on the boundary."""
        return self.kappa * np.sum(self.normal(X) * self.grad_u(X, t), axis=1)

    def g(self, X, t):
        if self.formulation == "dirichlet_pdae":
            return self.exact_u(X, t)
        c = self.coeffs
        val = self.u_t(X, t) + self.flux(X, t) + float(c.alpha) * self.exact_u(X, t)
        if c.beta:
            val = val - c.beta * self.lap_gamma_u(X, t)
        return val

    def u0(self, X):
        return self.exact_u(X, 0.0)

    def p0(self, X):
        return self.exact_u(X, 0.0)


def _x(X):
    return np.atleast_2d(X)[:, 0]


def _y(X):
    return np.atleast_2d(X)[:, 1]


def make_manufactured_case(preset_id: str) -> ManufacturedCase:
    if preset_id not in PRESETS:
        raise ValueError("unknown preset %r; available: %s" % (preset_id, ", ".join(PRESETS)))
    pi = np.pi
    desc = _DESCRIPTIONS[preset_id]
    form = _FORMULATION[preset_id]
    if preset_id == "dirichlet_1d_poly":
        def u(X, t):
            return np.exp(-t) * (_x(X) ** 2 + 1)

        return ManufacturedCase(
            preset_id, form, 1, CoefficientSet(kappa=1.0, c_kappa=1.0),
            exact_u=u,
            u_t=lambda X, t: -u(X, t),
            grad_u=lambda X, t: (2 * _x(X) * np.exp(-t))[:, None],
            lap_u=lambda X, t: 2 * np.exp(-t) * np.ones_like(_x(X)),
            description=desc,
        )
    if preset_id == "wentzell_1d_trig":
        def u(X, t):
            return np.exp(-t) * np.sin(pi * _x(X) + pi / 4)

        return ManufacturedCase(
            preset_id, form, 1, CoefficientSet(kappa=1.0, c_kappa=1.0, alpha=1.0, beta=0.0),
            exact_u=u,
            u_t=lambda X, t: -u(X, t),
            grad_u=lambda X, t: (pi * np.exp(-t) * np.cos(pi * _x(X) + pi / 4))[:, None],
            lap_u=lambda X, t: -pi**2 * u(X, t),
            description=desc,
        )

    beta = 1.0 if preset_id == "nonlocal_2d_cos" else 0.0

    def u(X, t):
        return np.exp(-t) * np.cos(pi * _x(X)) * np.cos(pi * _y(X))

    def grad(X, t):
        x, y = _x(X), _y(X)
        e = -pi * np.exp(-t)
        return np.column_stack([e * np.sin(pi * x) * np.cos(pi * y), e * np.cos(pi * x) * np.sin(pi * y)])

    return ManufacturedCase(
        preset_id, form, 2, CoefficientSet(kappa=1.0, c_kappa=1.0, alpha=1.0, beta=beta),
        exact_u=u,
        u_t=lambda X, t: -u(X, t),
        grad_u=grad,
        lap_u=lambda X, t: -2 * pi**2 * u(X, t),
        # along every edge the trace is exp(-t) cos(pi s) up to a constant factor
        lap_gamma_u=lambda X, t: -pi**2 * u(X, t),
        description=desc,
    )


def list_presets() -> str:
    lines = ["presets:"]
    for name in PRESETS:
        lines.append("  %-18s %-15s %s" % (name, _FORMULATION[name], _DESCRIPTIONS[name]))
    lines.append("geometries:")
    lines.append("  interval(n)        uniform mesh of [0,1] with n segments")
    lines.append("  square(n)          structured triangulation of [0,1]^2, n cells per side")
    return "\n".join(lines)


# sixth-order central stencils
_D1 = np.array([-1 / 60, 3 / 20, -3 / 4, 0.0, 3 / 4, -3 / 20, 1 / 60])
_D2 = np.array([1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90])
_OFF = np.arange(-3, 4)


def _fd(fun, X, t, direction, order, h):
    """Finite difference of ``fun`` along a spatial ``direction`` (or time when None)."""
    w = _D1 if order == 1 else _D2
    acc = 0.0
    for k, c in zip(_OFF, w):
        if c == 0.0:
            continue
        if direction is None:
            acc = acc + c * fun(X, t + k * h)
        else:
            acc = acc + c * fun(X + k * h * direction, t)
    return acc / h**order


def strong_form_residual(case: ManufacturedCase, n_samples: int = 20, seed: int = 0,
                         h: float = 1e-2) -> dict:
    """Max residual of the bulk and boundary equations at random space-time points.

    Derivatives come from finite differences of ``case.exact_u`` only, so the
    check is independent of the hand-written derivative formulas.
    """
    rng = np.random.default_rng(seed)
    u = case.exact_u
    kappa = case.kappa
    bulk = 0.0
    boundary = 0.0
    for _ in range(n_samples):
        t = float(rng.uniform(0.1, 1.0))
        X = rng.uniform(0.0, 1.0, size=(1, case.dim))
        lap = sum(_fd(u, X, t, np.eye(case.dim)[i], 2, h) for i in range(case.dim))
        r = case.f(X, t) - (_fd(u, X, t, None, 1, h) - kappa * lap)
        bulk = max(bulk, float(np.abs(r).max()))

        if case.dim == 1:
            Xb = np.array([[float(rng.integers(0, 2))]])
        else:
            edge = int(rng.integers(0, 4))
            s = float(rng.uniform(0.0, 1.0))
            Xb = np.array([[(s, 0.0), (1.0, s), (s, 1.0), (0.0, s)][edge]])
        n = case.normal(Xb)[0]
        if case.formulation == "dirichlet_pdae":
            rb = case.g(Xb, t) - u(Xb, t)
        else:
            dn = _fd(u, Xb, t, n, 1, h)
            val = _fd(u, Xb, t, None, 1, h) + kappa * dn + float(case.coeffs.alpha) * u(Xb, t)
            if case.coeffs.beta:
                tangent = np.array([-n[1], n[0]])
                val = val - case.coeffs.beta * _fd(u, Xb, t, tangent, 2, h)
            rb = case.g(Xb, t) - val
        boundary = max(boundary, float(np.abs(rb).max()))
    return {"bulk": bulk, "boundary": boundary}
