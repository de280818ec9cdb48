"""Implicit Euler and 2-stage Radau IIA for the linear index-2 systems of :mod:`dynbc.pdae`.

The constraint is collocated at the step end (implicit Euler) and at both
stage times (Radau IIA), so iterates satisfy it up to the linear solver
tolerance and no drift correction is needed.
"""
from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .pdae import TOL_CONSISTENCY, InitialState, PdaeSystem
from .saddle import SaddleError, SaddleOperator, factorize

__all__ = [
    "RADAU_A",
    "RADAU_B",
    "RADAU_C",
    "StepError",
    "StepperConfig",
    "Trajectory",
    "check_radau_coefficients",
    "step_implicit_euler",
    "step_radau_iia",
    "Stepper",
    "integrate",
]

RADAU_A = np.array([[5 / 12, -1 / 12], [3 / 4, 1 / 4]])
RADAU_B = np.array([3 / 4, 1 / 4])
RADAU_C = np.array([1 / 3, 1.0])
_RADAU_W = np.linalg.inv(RADAU_A)

SCHEMES = ("implicit_euler", "radau_iia_2")


class StepError(RuntimeError):
    def __init__(self, step: int, t: float, cause: Exception):
        super().__init__("step %d (t=%.17g) failed: %s" % (step, t, cause))
        self.step = step
        self.t = t
        self.cause = cause


def check_radau_coefficients(tol: float = 1e-14) -> dict:
    """Order conditions up to 3 and algebraic stability of the Radau IIA tableau."""
    b, c, A = RADAU_B, RADAU_C, RADAU_A
    orders = [float(b.sum()), float(b @ c), float(b @ c**2)]
    expected = [1.0, 0.5, 1 / 3]
    if not np.allclose(orders, expected, rtol=0, atol=tol):
        raise AssertionError("Radau IIA order conditions violated: %r" % orders)
    if not np.allclose(A.sum(axis=1), c, rtol=0, atol=tol):
        raise AssertionError("Radau IIA row sums differ from nodes")
    S = np.diag(b) @ A + A.T @ np.diag(b) - np.outer(b, b)
    eig = np.linalg.eigvalsh(S)
    if eig.min() < -tol:
        raise AssertionError("Radau IIA not algebraically stable: eigenvalues %r" % eig)
    return {"order_conditions": orders, "stability_eigenvalues": eig.tolist()}


check_radau_coefficients()


@dataclass(frozen=True)
class StepperConfig:
    scheme: str = "implicit_euler"
    tau: float = 0.01
    t_end: float = 1.0
    solver_tol: float = 1e-12

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError("unknown scheme %r; choose from %s" % (self.scheme, ", ".join(SCHEMES)))
        if not self.tau > 0:
            raise ValueError("tau must be positive, got %r" % (self.tau,))
        if not self.t_end > 0:
            raise ValueError("t_end must be positive, got %r" % (self.t_end,))
        if self.tau > self.t_end * (1 + 1e-12):
            raise ValueError("tau=%r exceeds t_end=%r" % (self.tau, self.t_end))
        n = self.t_end / self.tau
        if abs(n - round(n)) > 1e-9 * max(n, 1.0):
            raise ValueError("t_end/tau = %r is not an integer; uniform steps only" % n)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.tau))


class Stepper:
    """One-step map for a fixed system, scheme and step size; reuses one factorization."""

    def __init__(self, sys: PdaeSystem, tau: float, scheme: str = "implicit_euler"):
        if scheme not in SCHEMES:
            raise ValueError("unknown scheme %r" % (scheme,))
        self.sys, self.tau, self.scheme = sys, float(tau), scheme
        E, A, B = sys.E, sys.A, sys.B
        if scheme == "implicit_euler":
            self.op = SaddleOperator((E / tau + A).tocsr(), B)
        else:
            V = sp.kron(_RADAU_W, E) / tau + sp.kron(sp.identity(2), A)
            Bs = sp.kron(sp.identity(2), B)
            self.op = SaddleOperator(V.tocsr(), Bs.tocsr())
        self.fact = factorize(self.op)

    def step(self, x, t):
        """Advance ``x`` from ``t`` to ``t + tau``; returns ``(x_next, lam_next)``."""
        sys, tau = self.sys, self.tau
        n, m = sys.n, sys.n_lambda
        Ex = sys.E @ x
        if self.scheme == "implicit_euler":
            t1 = t + tau
            rhs = np.concatenate([Ex / tau + sys.load(t1), sys.constraint_data(t1)])
            z = self.fact.solve(rhs)
            return z[:n], z[n:]
        ts = t + RADAU_C * tau
        wsum = _RADAU_W.sum(axis=1)
        r1 = np.concatenate([wsum[i] * Ex / tau + sys.load(ts[i]) for i in range(2)])
        r2 = np.concatenate([sys.constraint_data(ts[i]) for i in range(2)])
        z = self.fact.solve(np.concatenate([r1, r2]))
        return z[n:2 * n], z[2 * n + m:]


def step_implicit_euler(sys: PdaeSystem, x_n, t_n: float, tau: float):
    """One implicit Euler step with the constraint imposed at ``t_n + tau``."""
    return Stepper(sys, tau, "implicit_euler").step(np.asarray(x_n, dtype=float), t_n)


def step_radau_iia(sys: PdaeSystem, x_n, t_n: float, tau: float):
    """One 2-stage Radau IIA step; the constraint holds at both stage times."""
    return Stepper(sys, tau, "radau_iia_2").step(np.asarray(x_n, dtype=float), t_n)


@dataclass
class Trajectory:
    """Recorded states ``x(t_k)``, multipliers ``lam(t_k)`` for ``k >= 1`` and diagnostics."""

    times: np.ndarray
    states: np.ndarray
    multipliers: np.ndarray
    constraint_residual: np.ndarray
    energy: np.ndarray
    n_u: int
    scheme: str = ""

    @property
    def u(self) -> np.ndarray:
        return self.states[:, : self.n_u]

    @property
    def p(self) -> np.ndarray:
        return self.states[:, self.n_u:]

    def to_csv(self, probes: Optional[Sequence[tuple]] = None) -> str:
        """CSV text with ``t``, probe values, constraint residual and energy.

        ``probes`` is a list of ``(column_name, state_index)``.
        """
        probes = list(probes or [])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [name for name, _ in probes] + ["constraint_residual", "energy"])
        for k, t in enumerate(self.times):
            row = [t] + [self.states[k, i] for _, i in probes]
            row += [self.constraint_residual[k], self.energy[k]]
            w.writerow(["%.17g" % v for v in row])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "scheme": self.scheme,
            "n_u": self.n_u,
            "times": [float(v) for v in self.times],
            "states": self.states.tolist(),
            "multipliers": self.multipliers.tolist(),
            "constraint_residual": self.constraint_residual.tolist(),
            "energy": self.energy.tolist(),
        }
        return json.dumps(doc)


def integrate(sys: PdaeSystem, init: InitialState, cfg: StepperConfig) -> Trajectory:
    """March ``init`` to ``cfg.t_end`` with uniform steps."""
    if init.consistency_residual > TOL_CONSISTENCY:
        warnings.warn(
            "initial data violates the constraint by %.3e; integrating anyway"
            % init.consistency_residual,
            RuntimeWarning,
            stacklevel=2,
        )
    N = cfg.n_steps
    times = cfg.t_end * np.arange(N + 1) / N
    try:
        stepper = Stepper(sys, cfg.tau, cfg.scheme)
    except SaddleError as exc:
        raise StepError(0, 0.0, exc) from exc
    x = init.x0
    states = np.empty((N + 1, sys.n))
    lams = np.empty((N, sys.n_lambda))
    res = np.empty(N + 1)
    energy = np.empty(N + 1)
    states[0] = x
    res[0] = sys.constraint_residual(x, 0.0)
    energy[0] = sys.energy(x)
    for k in range(N):
        try:
            x, lam = stepper.step(x, times[k])
        except Exception as exc:
            raise StepError(k + 1, float(times[k + 1]), exc) from exc
        if not np.all(np.isfinite(x)):
            raise StepError(k + 1, float(times[k + 1]), FloatingPointError("non-finite state"))
        states[k + 1] = x
        lams[k] = lam
        res[k + 1] = sys.constraint_residual(x, times[k + 1])
        energy[k + 1] = sys.energy(x)
    return Trajectory(times, states, lams, res, energy, sys.n_u, cfg.scheme)
