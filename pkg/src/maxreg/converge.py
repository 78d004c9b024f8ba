"""Temporal convergence of nonlinear backward Euler on a manufactured solution.

Model: u_t = u_xx + g(u, u_x) + s(x, t) on [0, 1] with homogeneous Neumann
data, exact solution e^{-t} cos(pi x) and g(u, p) = u p^2.  Errors are taken
against a reference run with step tau_min / 64 on the same grid, which
removes the spatial error from the comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .regularity import NormSpec, lp_lq_norm, w1q_norm
from .spatial import GridFunction, laplacian_1d
from .stepper import NewtonConfig, StepFailure, run_nonlinear_euler

PI = math.pi


def exact(x, t):
    return math.exp(-t) * np.cos(PI * x)


def quadratic_gradient(u, p):
    return u * p**2


def quadratic_gradient_partials(u, p):
    return p**2, 2 * u * p


def manufactured_source(x, t, nonlinear: bool = True):
    """s = u*_t - u*_xx - g(u*, u*_x) for the exact solution above."""
    u = exact(x, t)
    src = (PI**2 - 1) * u
    if nonlinear:
        ux = -PI * math.exp(-t) * np.sin(PI * x)
        src = src - u * ux**2
    return src


@dataclass
class ConvergenceRow:
    tau: float
    n_steps: int
    err_lap: float = math.nan
    err_dot: float = math.nan
    err_w1inf: float = math.nan
    order_lap: float = math.nan
    order_dot: float = math.nan
    order_w1inf: float = math.nan
    failed: str = ""

    HEADER = ("tau", "N", "err_lap_LpLp", "err_dot_LpLp", "err_Linf_W1inf",
              "order_lap", "order_dot", "order_W1inf", "failure")

    def row(self) -> list[str]:
        def f(x):
            return "" if isinstance(x, float) and math.isnan(x) else f"{x:.17g}"

        return [f(self.tau), str(self.n_steps), f(self.err_lap), f(self.err_dot), f(self.err_w1inf),
                f(self.order_lap), f(self.order_dot), f(self.order_w1inf), self.failed]


@dataclass
class ConvergenceReport:
    rows: list[ConvergenceRow]
    p: float
    grid_n: int
    t_final: float
    tau_ref: float
    meta: dict = field(default_factory=dict)

    @property
    def largest_converged_tau(self) -> float:
        ok = [r.tau for r in self.rows if not r.failed]
        return max(ok) if ok else math.nan

    def orders(self) -> np.ndarray:
        """(rows - 1, 3) observed orders between consecutive ladder rows."""
        return np.array([[r.order_lap, r.order_dot, r.order_w1inf] for r in self.rows[1:]])


def convergence_experiment(
    tau_list=(2.0**-5, 2.0**-6, 2.0**-7, 2.0**-8),
    grid_n: int = 32,
    t_final: float = 1.0,
    p: float = 4.0,
    ref_factor: int = 64,
    nonlinear: bool = True,
    newton: NewtonConfig | None = None,
) -> ConvergenceReport:
    """Errors of the tau ladder against a tau_min / ref_factor reference."""
    taus = sorted((float(t) for t in tau_list), reverse=True)
    if not taus:
        raise ValueError("tau ladder is empty")
    op = laplacian_1d(grid_n, "neumann")
    grid = op.grid
    x = grid.axis()
    lap = op.to_sparse()
    g = quadratic_gradient if nonlinear else (lambda u, q: np.zeros_like(u))
    dg = quadratic_gradient_partials if nonlinear else (lambda u, q: (np.zeros_like(u), np.zeros_like(u)))
    newton = newton or NewtonConfig(jacobian="analytic")

    def run(tau):
        n = round(t_final / tau)
        if not math.isclose(n * tau, t_final, rel_tol=1e-12):
            raise ValueError(f"tau = {tau} does not divide T = {t_final}")
        src = lambda t: manufactured_source(x, t, nonlinear)  # noqa: E731
        return run_nonlinear_euler(op, g, src, exact(x, 0.0), tau, n, newton, dg=dg)

    tau_ref = taus[-1] / ref_factor
    ref = run(tau_ref).frames
    spec = NormSpec(p=p, q=p, h=grid.h, dim=1)
    rows = []
    for tau in taus:
        n = round(t_final / tau)
        row = ConvergenceRow(tau, n)
        try:
            frames = run(tau).frames
        except StepFailure as exc:
            row.failed = str(exc)
            rows.append(row)
            continue
        stride = round(tau / tau_ref)
        e = frames - ref[::stride][: n + 1]
        tspec = NormSpec(p=spec.p, q=spec.q, tau=tau, h=spec.h, dim=1)
        row.err_lap = lp_lq_norm(np.stack([lap @ v for v in e[1:]]), tspec)
        row.err_dot = lp_lq_norm(np.diff(e, axis=0) / tau, tspec)
        row.err_w1inf = max(w1q_norm(GridFunction(grid, v), math.inf) for v in e)
        rows.append(row)
    for prev, cur in zip(rows, rows[1:]):
        if prev.failed or cur.failed:
            continue
        ratio = math.log(prev.tau / cur.tau)
        cur.order_lap = math.log(prev.err_lap / cur.err_lap) / ratio
        cur.order_dot = math.log(prev.err_dot / cur.err_dot) / ratio
        cur.order_w1inf = math.log(prev.err_w1inf / cur.err_w1inf) / ratio
    return ConvergenceReport(rows, p, grid_n, t_final, tau_ref, meta={"nonlinear": nonlinear})
