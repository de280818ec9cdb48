"""Convergence studies, multiplier-versus-flux checks and the kernel comparison."""
from __future__ import annotations

import csv
import io
import json
import warnings
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .. import assembly as asm
from ..pdae import InitialState, PdaeError, PdaeSystem
from ..problems import build_case, full_bulk_vector, l2_error_boundary, l2_error_bulk
from ..timestepping import StepperConfig, Trajectory, integrate
from .manufactured import ManufacturedCase

__all__ = [
    "eoc",
    "EocTable",
    "run_convergence_study",
    "run_temporal_study",
    "compare_multiplier_to_flux",
    "run_multiplier_study",
    "kernel_system",
    "compare_with_kernel_formulation",
]


def eoc(errors: Sequence[float], ratios: Optional[Sequence[float]] = None) -> list:
    """``log(e_k / e_{k+1}) / log(ratio_k)``; ratio 2 (halving) by default."""
    e = np.asarray(errors, dtype=float)
    r = np.full(len(e) - 1, 2.0) if ratios is None else np.asarray(ratios, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return (np.log(e[:-1] / e[1:]) / np.log(r)).tolist()


class EocTable:
    """Rows of error data plus EOC columns for selected error keys."""

    def __init__(self, rows: list, error_keys: Sequence[str], meta: Optional[dict] = None):
        self.rows = rows
        self.error_keys = list(error_keys)
        self.meta = dict(meta or {})
        self.non_monotone = []
        for key in self.error_keys:
            errs = [r[key] for r in rows]
            for k, v in enumerate(eoc(errs)):
                rows[k + 1]["eoc_" + key] = v
            if any(b >= a for a, b in zip(errs, errs[1:])):
                self.non_monotone.append(key)
        if self.non_monotone:
            warnings.warn("non-monotone error sequence for %s" % ", ".join(self.non_monotone),
                          RuntimeWarning, stacklevel=2)

    def eocs(self, key: str) -> list:
        return [r["eoc_" + key] for r in self.rows[1:]]

    def columns(self) -> list:
        cols = []
        for r in self.rows:
            for k in r:
                if k not in cols:
                    cols.append(k)
        return cols

    def to_csv(self, eoc_rows_only: bool = False) -> str:
        cols = self.columns()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        rows = self.rows[1:] if eoc_rows_only else self.rows
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in cols])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"meta": self.meta, "rows": self.rows,
                           "non_monotone": self.non_monotone}, indent=2)


def _fmt(v):
    if isinstance(v, float):
        return "%.17g" % v
    return v


def run_convergence_study(case: ManufacturedCase, mesh_levels: Sequence[int], cfg: StepperConfig,
                          multiplier=None) -> EocTable:
    """Errors at ``cfg.t_end`` in L2(Omega) for ``u`` and L2(Gamma) for ``p`` over mesh levels.

    ``mesh_levels`` are cells per side, each twice the previous one.
    """
    if len(mesh_levels) < 3:
        raise ValueError("a convergence study needs at least 3 mesh levels")
    t = cfg.t_end
    rows = []
    for n in mesh_levels:
        sys, init = build_case(case, n, multiplier)
        traj = integrate(sys, init, cfg)
        u, p = sys.split(traj.states[-1])
        row = {"n": int(n), "h": float(sys.mesh.h)}
        row["err_u"] = l2_error_bulk(sys.mesh, full_bulk_vector(sys, u), lambda X: case.exact_u(X, t))
        keys = ["err_u"]
        if sys.n_p:
            row["err_p"] = l2_error_boundary(sys.trace_mesh, p, lambda X: case.exact_u(X, t))
            keys.append("err_p")
        row["max_constraint_residual"] = float(traj.constraint_residual.max())
        rows.append(row)
    meta = {"preset": case.name, "formulation": case.formulation, "study": "space",
            "scheme": cfg.scheme, "tau": cfg.tau, "t_end": cfg.t_end,
            "solver_tol": cfg.solver_tol, "mesh_levels": [int(n) for n in mesh_levels]}
    return EocTable(rows, keys, meta)


def run_temporal_study(case: ManufacturedCase, n: int, scheme: str, taus: Sequence[float],
                       t_end: float = 1.0, reference_tau: Optional[float] = None) -> EocTable:
    """Time-discretization errors on a fixed mesh against a fine-step Radau IIA reference.

    The error is the E-norm distance at ``t_end``, so the spatial error cancels.
    """
    sys, init = build_case(case, n)
    if reference_tau is None:
        reference_tau = min(taus) / 16
    ref = integrate(sys, init, StepperConfig("radau_iia_2", reference_tau, t_end)).states[-1]
    rows = []
    for tau in taus:
        x = integrate(sys, init, StepperConfig(scheme, tau, t_end)).states[-1]
        d = x - ref
        rows.append({"tau": float(tau), "err_E": float(np.sqrt(d @ (sys.E @ d)))})
    ratios = [a / b for a, b in zip(taus, taus[1:])]
    table = EocTable(rows, [], {"preset": case.name, "study": "time", "scheme": scheme,
                                "n": int(n), "t_end": t_end, "reference_tau": reference_tau})
    for k, v in enumerate(eoc([r["err_E"] for r in rows], ratios)):
        rows[k + 1]["eoc_err_E"] = v
    table.error_keys = ["err_E"]
    return table


def compare_multiplier_to_flux(case: ManufacturedCase, sys: PdaeSystem, traj: Trajectory) -> dict:
    """L2(Gamma) distance between ``+-lam_h(t_end)`` and the interpolated normal flux.

    ``lam_h`` is a P1 coefficient vector on the multiplier mesh (the
    constraint rows are already scaled by the boundary mass).
    """
    t = float(traj.times[-1])
    bm = sys.multiplier_mesh
    lam = traj.multipliers[-1]
    flux = case.flux(bm.points(), t)
    M = asm.assemble_mass_boundary(bm)
    out = {}
    for sign, key in ((1.0, "plus"), (-1.0, "minus")):
        d = sign * lam - flux
        out["err_" + key] = float(np.sqrt(d @ (M @ d)))
    out["sign"] = "+" if out["err_plus"] <= out["err_minus"] else "-"
    out["err"] = min(out["err_plus"], out["err_minus"])
    return out


def run_multiplier_study(case: ManufacturedCase, mesh_levels: Sequence[int], cfg: StepperConfig) -> EocTable:
    rows = []
    for n in mesh_levels:
        sys, init = build_case(case, n)
        traj = integrate(sys, init, cfg)
        r = compare_multiplier_to_flux(case, sys, traj)
        rows.append({"n": int(n), "h": float(sys.mesh.h), "sign": r["sign"], "err_lambda": r["err"],
                     "err_plus": r["err_plus"], "err_minus": r["err_minus"]})
    return EocTable(rows, ["err_lambda"], {"preset": case.name, "study": "multiplier",
                                           "scheme": cfg.scheme, "tau": cfg.tau, "t_end": cfg.t_end})


def kernel_system(sys: PdaeSystem) -> tuple[PdaeSystem, sp.csr_matrix]:
    """Reduced ODE on ``ker B = {[u; T u]}`` and the embedding ``P = [I; T]``.

    Only defined for matching trace and multiplier meshes.
    """
    if sys.n_p == 0 or sys.trace_matrix is None:
        raise PdaeError("kernel reduction needs a coupled bulk/boundary system")
    if not asm.CouplingSpec(sys.trace_mesh, sys.multiplier_mesh).matching:
        raise PdaeError("kernel reduction is undefined for non-matching multiplier meshes")
    P = sp.vstack([sp.identity(sys.n_u, format="csr"), sys.trace_matrix], format="csr")
    PT = P.T.tocsr()
    red = PdaeSystem(
        formulation=sys.formulation + "_kernel",
        E=(PT @ sys.E @ P).tocsr(),
        A=(PT @ sys.A @ P).tocsr(),
        B=sp.csr_matrix((0, sys.n_u)),
        load=lambda t: PT @ sys.load(t),
        constraint_data=lambda t: np.zeros(0),
        n_u=sys.n_u,
        n_p=0,
        mesh=sys.mesh,
        coeffs=sys.coeffs,
    )
    return red, P


def compare_with_kernel_formulation(sys: PdaeSystem, init: InitialState, cfg: StepperConfig) -> float:
    """Max over time of the E-norm gap between the PDAE and the reduced-ODE trajectories."""
    red, P = kernel_system(sys)
    traj = integrate(sys, init, cfg)
    red_traj = integrate(red, InitialState(init.u0, None, 0.0), cfg)
    lifted = (P @ red_traj.states.T).T
    d = traj.states - lifted
    gaps = np.sqrt(np.maximum(np.einsum("ki,ki->k", d, (sys.E @ d.T).T), 0.0))
    return float(gaps.max())
