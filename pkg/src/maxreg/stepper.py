"""Time stepping: multistep, one-step, implicit Runge-Kutta and nonlinear backward Euler.

Frames are stored as arrays of shape ``(N + 1, m)`` or, for batched runs,
``(N + 1, m, batch)``.  Index ``n`` of ``frames`` is ``u_n``.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .methods import (
    BdfMethod,
    LinearMultistepMethod,
    RungeKuttaTableau,
    backward_euler,
    crank_nicolson,
)
from .spatial import DiscreteOperator, Grid, GridFunction, SingularShiftError, gradient_matrices


class StepFailure(RuntimeError):
    """Newton did not converge within the iteration budget."""

    def __init__(self, step: int, residual: float, iterations: int):
        super().__init__(
            f"Newton failed at step {step}: residual {residual:.3e} after {iterations} iterations"
        )
        self.step = step
        self.residual = residual
        self.iterations = iterations


@dataclass
class TimeSeries:
    tau: float
    frames: np.ndarray
    start_index: int = 0
    derivatives: np.ndarray | None = None
    stage_frames: np.ndarray | None = None
    stage_derivatives: np.ndarray | None = None
    grid: Grid | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.stage_frames is not None and self.stage_frames.shape[0] != self.frames.shape[0] - 1:
            raise ValueError("stage frames must hold one s-tuple per step")

    @property
    def n_steps(self) -> int:
        return self.frames.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return self.tau * np.arange(self.frames.shape[0])

    def frame(self, n: int) -> GridFunction:
        if self.grid is None:
            raise ValueError("series has no grid attached")
        return GridFunction(self.grid, self.frames[n])


@dataclass
class ForcingSequence:
    """Forcing given as stored values and/or a callable f(t)."""

    values: np.ndarray | None = None
    stage_values: np.ndarray | None = None
    func: Callable[[float], np.ndarray] | None = None

    @classmethod
    def zeros(cls, n_steps: int, m: int, batch: tuple = ()) -> "ForcingSequence":
        return cls(values=np.zeros((n_steps + 1, m, *batch)))

    @classmethod
    def from_callable(cls, func) -> "ForcingSequence":
        return cls(func=func)

    def at(self, n: int, tau: float) -> np.ndarray:
        if self.values is not None:
            if n >= self.values.shape[0]:
                raise ValueError(f"forcing not defined at index {n}")
            return self.values[n]
        if self.func is None:
            raise ValueError("forcing has neither stored values nor a callable")
        return np.asarray(self.func(n * tau))

    def stage(self, n: int, c: np.ndarray, tau: float) -> np.ndarray:
        """Stage forcing F_n = (f(t_n + c_i tau))_i, shape (s, m, ...)."""
        if self.stage_values is not None:
            if n >= self.stage_values.shape[0]:
                raise ValueError(f"stage forcing not defined at step {n}")
            return self.stage_values[n]
        if self.func is None:
            raise ValueError("stage forcing needs stage_values or a callable")
        return np.stack([np.asarray(self.func((n + ci) * tau)) for ci in c])


@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-10
    max_iter: int = 50
    jacobian: str = "finite-difference"
    fd_step: float = 1e-7

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("Newton tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.jacobian not in ("analytic", "finite-difference"):
            raise ValueError("jacobian must be 'analytic' or 'finite-difference'")


def _as_forcing(f, n_steps: int, m: int) -> ForcingSequence:
    if isinstance(f, ForcingSequence):
        return f
    if f is None:
        return ForcingSequence.zeros(n_steps, m)
    if callable(f):
        return ForcingSequence.from_callable(f)
    return ForcingSequence(values=np.asarray(f))


def _norm(x) -> float:
    return float(np.linalg.norm(np.asarray(x).ravel()))


def _coefficients(method) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(method, (BdfMethod, LinearMultistepMethod)):
        return np.asarray(method.alpha, float), np.asarray(method.beta, float)
    raise TypeError(f"not a multistep method: {method!r}")


def run_lmm(
    method,
    op: DiscreteOperator,
    f,
    tau: float,
    n_steps: int,
    starting=None,
    check_residual: bool = True,
) -> TimeSeries:
    """Multistep recursion sum_j alpha_j u_{n-j} = tau sum_j beta_j (A u_{n-j} + f_{n-j}).

    ``starting`` is None (zero start u_0 = ... = u_{k-1} = 0) or an array of
    the k starting frames.  Derivatives are
    ``(1 / (tau sigma(1))) sum_j alpha_j u_{n-j}`` for n >= k.
    """
    alpha, beta = _coefficients(method)
    k = alpha.size - 1
    if beta[0] == 0:
        raise ValueError(f"{method.label} is explicit; only implicit methods are stepped")
    m = op.size
    forcing = _as_forcing(f, n_steps, m)
    sample = np.asarray(forcing.at(k if n_steps >= k else 0, tau))
    extra = sample.shape[1:]
    dtype = np.result_type(sample.dtype, op.data.dtype if op.kind != "diagonal" else op.data.dtype, float)
    frames = np.zeros((n_steps + 1, m, *extra), dtype=dtype)
    if starting is not None:
        start = np.asarray(starting)
        if start.shape[0] != k:
            raise ValueError(f"{method.label} needs {k} starting frames, got {start.shape[0]}")
        frames[:k] = start
    derivs = np.zeros_like(frames)
    gamma = alpha[0] / (tau * beta[0])
    sigma1 = beta.sum()
    worst = 0.0
    f_cache = {}

    def fval(n):
        if n not in f_cache:
            f_cache[n] = np.asarray(forcing.at(n, tau))
        return f_cache[n]

    au_prev = {}

    def au(n):
        if n not in au_prev:
            au_prev[n] = op.apply(frames[n])
        return au_prev[n]

    for n in range(k, n_steps + 1):
        rhs = np.zeros(frames.shape[1:], dtype=dtype)
        for j in range(k + 1):
            if beta[j] != 0:
                rhs = rhs + beta[j] * fval(n - j)
        for j in range(1, k + 1):
            rhs = rhs - (alpha[j] / tau) * frames[n - j]
            if beta[j] != 0:
                rhs = rhs + beta[j] * au(n - j)
        frames[n] = op.shifted_solve(gamma, rhs / beta[0], check=False)
        if check_residual:
            res = alpha[0] / tau * frames[n] - beta[0] * au(n) - rhs
            worst = max(worst, _norm(res) / max(_norm(rhs), 1e-300))
        derivs[n] = sum(alpha[j] * frames[n - j] for j in range(k + 1)) / (tau * sigma1)
        au_prev.pop(n - k - 1, None)
        f_cache.pop(n - k - 1, None)
    return TimeSeries(
        tau=tau,
        frames=frames,
        start_index=k,
        derivatives=derivs,
        grid=op.grid,
        meta={"method": method.label, "max_relative_residual": worst},
    )


def run_one_step(method, op: DiscreteOperator, f, tau: float, n_steps: int, u0=None) -> TimeSeries:
    """Backward Euler or Crank-Nicolson from u_0 (zero by default)."""
    if isinstance(method, str):
        key = method.lower().replace("_", "-")
        if key in ("backward-euler", "euler", "be"):
            method = backward_euler()
        elif key in ("crank-nicolson", "cn"):
            method = crank_nicolson()
        else:
            raise ValueError(f"unknown one-step method {method!r}")
    start = None if u0 is None else np.asarray(u0)[None]
    return run_lmm(method, op, f, tau, n_steps, starting=start)


@dataclass
class _StageSolver:
    """Solves (I - tau A_rk (x) A) U = rhs by diagonalizing the RK matrix."""

    rk: RungeKuttaTableau
    op: DiscreteOperator
    tau: float
    force_dense: bool = False

    def __post_init__(self):
        lam, t = np.linalg.eig(self.rk.a)
        self.path = "diagonalized"
        if self.force_dense or np.linalg.cond(t) > 1e8:
            self.path = "dense-block"
            big = sp.identity(self.rk.s * self.op.size, format="csc") - self.tau * sp.kron(
                sp.csr_matrix(self.rk.a), self.op.to_sparse()
            )
            try:
                self._lu = spla.splu(big.tocsc())
            except RuntimeError as exc:
                raise SingularShiftError(0.0, f"(stage system: {exc})") from exc
            return
        self.lam = lam
        self.t = t
        self.tinv = np.linalg.inv(t)

    def solve(self, u_n: np.ndarray, forcing: np.ndarray) -> np.ndarray:
        """Stage values U (shape (s, m, ...)) from u_n and stage forcing F."""
        s = self.rk.s
        tau = self.tau
        rhs = u_n[None] + tau * np.tensordot(self.rk.a, forcing, axes=(1, 0))
        if self.path == "dense-block":
            flat = rhs.reshape(s * self.op.size, -1)
            if np.iscomplexobj(flat):
                sol = self._lu.solve(np.ascontiguousarray(flat.real)) + 1j * self._lu.solve(
                    np.ascontiguousarray(flat.imag)
                )
            else:
                sol = self._lu.solve(np.ascontiguousarray(flat))
            return sol.reshape(rhs.shape)
        g = np.tensordot(self.tinv, rhs, axes=(1, 0))
        w = np.empty_like(g, dtype=complex)
        for i in range(s):
            lt = self.lam[i] * tau
            # (I - lt A) w = g  <=>  (1/lt - A) w = g / lt
            w[i] = self.op.shifted_solve(1.0 / lt, g[i] / lt, check=False)
        u = np.tensordot(self.t, w, axes=(1, 0))
        if not (np.iscomplexobj(u_n) or np.iscomplexobj(forcing) or self.op.is_complex):
            u = u.real
        return u


def run_rk(
    rk: RungeKuttaTableau,
    op: DiscreteOperator,
    f,
    tau: float,
    n_steps: int,
    u0=None,
    force_dense: bool = False,
) -> TimeSeries:
    """Implicit Runge-Kutta: U_n = 1 u_n + tau A_rk Udot_n, u_{n+1} = u_n + tau b^T Udot_n."""
    m = op.size
    forcing = _as_forcing(f, n_steps, m) if f is not None else None
    if forcing is None:
        forcing = ForcingSequence(stage_values=np.zeros((n_steps, rk.s, m)))
    solver = _StageSolver(rk, op, tau, force_dense)
    first = np.asarray(forcing.stage(0, rk.c, tau)) if n_steps else np.zeros((rk.s, m))
    extra = first.shape[2:]
    u_start = np.zeros((m, *extra)) if u0 is None else np.asarray(u0)
    dtype = np.result_type(first.dtype, u_start.dtype, float)
    if op.is_complex:
        dtype = np.result_type(dtype, complex)
    frames = np.zeros((n_steps + 1, m, *extra), dtype=dtype)
    frames[0] = u_start
    stages = np.zeros((n_steps, rk.s, m, *extra), dtype=dtype)
    stage_dots = np.zeros_like(stages)
    worst = 0.0
    for n in range(n_steps):
        fn = first if n == 0 else np.asarray(forcing.stage(n, rk.c, tau))
        u_stage = solver.solve(frames[n], fn)
        au = np.stack([op.apply(u_stage[i]) for i in range(rk.s)])
        dots = au + fn
        # stage equations U_i - u_n - tau sum_j a_ij Udot_j = 0
        res = u_stage - frames[n][None] - tau * np.tensordot(rk.a, dots, axes=(1, 0))
        scale = max(_norm(frames[n]) + tau * _norm(dots), 1e-300)
        worst = max(worst, _norm(res) / scale)
        stages[n] = u_stage
        stage_dots[n] = dots
        frames[n + 1] = frames[n] + tau * np.tensordot(rk.b, dots, axes=(0, 0))
    return TimeSeries(
        tau=tau,
        frames=frames,
        start_index=0,
        stage_frames=stages,
        stage_derivatives=stage_dots,
        grid=op.grid,
        meta={"method": rk.label, "stage_path": solver.path, "max_relative_residual": worst},
    )


def run_bdf_with_rk_startup(
    bdf: BdfMethod,
    startup_rk: RungeKuttaTableau,
    op: DiscreteOperator,
    f,
    tau: float,
    n_steps: int,
) -> TimeSeries:
    """BDF from u_0 = 0 with u_1..u_{k-1} computed by a Runge-Kutta method."""
    k = bdf.k
    m = op.size
    forcing = _as_forcing(f, n_steps, m)
    if k == 1:
        series = run_lmm(bdf, op, forcing, tau, n_steps)
        series.meta["startup"] = {"u_over_tau": [0.0], "a_u": [0.0]}
        return series
    if n_steps < k - 1:
        raise ValueError(f"need at least {k - 1} steps for the startup phase")
    start = run_rk(startup_rk, op, forcing, tau, k - 1)
    series = run_lmm(bdf, op, forcing, tau, n_steps, starting=start.frames[:k])
    series.meta["startup"] = {
        "method": startup_rk.label,
        "u_over_tau": [_norm(start.frames[i]) / tau for i in range(k)],
        "a_u": [_norm(op.apply(start.frames[i])) for i in range(k)],
        "stage_path": start.meta["stage_path"],
    }
    return series


def run_nonlinear_euler(
    op: DiscreteOperator,
    g: Callable,
    source,
    u0,
    tau: float,
    n_steps: int,
    newton: NewtonConfig | None = None,
    dg: Callable | None = None,
) -> TimeSeries:
    """Backward Euler for u' = Laplacian u + g(u, grad u) + source(t).

    ``g(u, p)`` acts pointwise, with ``p`` the difference-quotient gradient
    (shape ``(size,)`` in 1D, ``(dim, size)`` in 2D).  ``dg(u, p)`` returns
    ``(g_u, g_p)`` when an analytic Jacobian is available.
    """
    newton = newton or NewtonConfig()
    if op.grid is None:
        raise ValueError("the nonlinear scheme needs a grid operator")
    if newton.jacobian == "analytic" and dg is None:
        raise ValueError("analytic Jacobian requested but no derivative callback given")
    grid = op.grid
    dmats = gradient_matrices(grid)
    lap = op.to_sparse()
    weight = math.sqrt(grid.h**grid.dim)
    eye = sp.identity(grid.size, format="csr")
    src = source if callable(source) else (lambda t, s=source: s if s is not None else 0.0)

    def grad(u):
        if grid.dim == 1:
            return dmats[0] @ u
        return np.stack([d @ u for d in dmats])

    def partials(u, p):
        if dg is not None and newton.jacobian == "analytic":
            return dg(u, p)
        base = g(u, p)
        eps_u = newton.fd_step * np.maximum(np.abs(u), 1.0)
        gu = (g(u + eps_u, p) - base) / eps_u
        if grid.dim == 1:
            eps_p = newton.fd_step * np.maximum(np.abs(p), 1.0)
            gp = (g(u, p + eps_p) - base) / eps_p
        else:
            gp = []
            for a in range(grid.dim):
                eps_p = newton.fd_step * np.maximum(np.abs(p[a]), 1.0)
                shifted = p.copy()
                shifted[a] = shifted[a] + eps_p
                gp.append((g(u, shifted) - base) / eps_p)
            gp = np.stack(gp)
        return gu, gp

    frames = np.zeros((n_steps + 1, grid.size))
    frames[0] = np.asarray(u0, dtype=float)
    iterations = []
    largest = 0.0
    for n in range(1, n_steps + 1):
        prev = frames[n - 1]
        s_n = np.broadcast_to(np.asarray(src(n * tau), dtype=float), prev.shape)
        u = prev.copy()

        def residual(v):
            return (v - prev) / tau - lap @ v - g(v, grad(v)) - s_n

        r = residual(u)
        rnorm = np.linalg.norm(r) * weight
        it = 0
        while rnorm > newton.tol:
            if it >= newton.max_iter:
                raise StepFailure(n, rnorm, it)
            p = grad(u)
            gu, gp = partials(u, p)
            jac = eye / tau - lap - sp.diags(gu)
            if grid.dim == 1:
                jac = jac - sp.diags(gp) @ dmats[0]
            else:
                for a in range(grid.dim):
                    jac = jac - sp.diags(gp[a]) @ dmats[a]
            u = u - spla.spsolve(jac.tocsc(), r)
            r = residual(u)
            rnorm = np.linalg.norm(r) * weight
            it += 1
            if not np.isfinite(rnorm):
                raise StepFailure(n, rnorm, it)
        frames[n] = u
        iterations.append(it)
        largest = max(largest, rnorm)
    derivs = np.zeros_like(frames)
    derivs[1:] = np.diff(frames, axis=0) / tau
    return TimeSeries(
        tau=tau,
        frames=frames,
        start_index=1,
        derivatives=derivs,
        grid=grid,
        meta={"newton_iterations": iterations, "max_residual": largest},
    )


# ---- persistence ---------------------------------------------------------


def write_trajectory_csv(series: TimeSeries, path) -> None:
    """Columns: n, t_n, then one column per unknown (real parts, then imaginary if complex)."""
    frames = series.frames.reshape(series.frames.shape[0], -1)
    cplx = np.iscomplexobj(frames)
    m = frames.shape[1]
    header = ["n", "t_n"] + [f"u{i}" for i in range(m)]
    if cplx:
        header += [f"u{i}_imag" for i in range(m)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for n in range(frames.shape[0]):
            row = [str(n), f"{n * series.tau:.17g}"] + [f"{x:.17g}" for x in frames[n].real]
            if cplx:
                row += [f"{x:.17g}" for x in frames[n].imag]
            w.writerow(row)


_HEADER = struct.Struct("<qqqd")


def write_frames_binary(series: TimeSeries, path) -> None:
    """Little-endian layout: int64 dim, int64 n, int64 N, float64 tau, then frames row-major float64."""
    frames = np.asarray(series.frames)
    if np.iscomplexobj(frames):
        raise ValueError("binary dump stores real frames only")
    frames = frames.reshape(frames.shape[0], -1)
    dim = series.grid.dim if series.grid else 1
    n = series.grid.n if series.grid else frames.shape[1]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(dim, n, frames.shape[0] - 1, float(series.tau)))
        fh.write(frames.astype("<f8").tobytes(order="C"))


def read_frames_binary(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        dim, n, big_n, tau = _HEADER.unpack(fh.read(_HEADER.size))
        data = np.frombuffer(fh.read(), dtype="<f8")
    frames = data.reshape(big_n + 1, n**dim)
    return {"dim": dim, "n": n, "N": big_n, "tau": tau}, frames
