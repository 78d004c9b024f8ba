"""Convolution quadrature weights by impulse runs and by contour inversion.

For a multistep method ``tau sum_n e_n(tau A) zeta^n = (delta(zeta)/tau - A)^{-1}``;
for a Runge-Kutta method the s x s block analogue uses Delta(zeta).  Tables
store ``tau e_n(tau A) v`` (or ``tau E_n(tau A) (e_i (x) v)``) per probe.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .methods import BdfMethod, LinearMultistepMethod, RungeKuttaTableau, delta_matrix, delta_at
from .spatial import DiscreteOperator
from .stepper import ForcingSequence, run_lmm, run_rk

EPS = np.finfo(float).eps


@dataclass
class CqWeightTable:
    label: str
    tau: float
    n_steps: int
    probes: np.ndarray
    weights: np.ndarray
    route: str
    stages: int = 1
    meta: dict = field(default_factory=dict)

    @property
    def is_block(self) -> bool:
        return self.weights.ndim == 5

    def times(self) -> np.ndarray:
        """t_{n+1} = (n + 1) tau for each weight index n."""
        return self.tau * (np.arange(self.weights.shape[0]) + 1)


@dataclass(frozen=True)
class ContourConfig:
    """Circle radius rho and number of quadrature nodes L."""

    rho: float
    nodes: int
    note: str = "eps-balanced radius"

    @classmethod
    def default(cls, n_steps: int) -> "ContourConfig":
        nodes = 4 * n_steps
        # balances aliasing rho^L against round-off eps rho^{-N}
        rho = EPS ** (1.0 / (nodes + n_steps))
        return cls(rho=rho, nodes=nodes)

    def validate(self, n_steps: int) -> None:
        if not 0 < self.rho < 1:
            raise ValueError("contour radius must lie in (0, 1)")
        if self.nodes < 2 * n_steps:
            raise ValueError("need at least 2N quadrature nodes")
        if self.rho**n_steps < math.sqrt(EPS) * (1 - 1e-12):
            raise ValueError("rho^N below sqrt(eps): round-off would dominate")


def _probes(op: DiscreteOperator, probes) -> np.ndarray:
    if probes is None:
        return np.eye(op.size)
    p = np.asarray(probes)
    return p[:, None] if p.ndim == 1 else p


def impulse_responses(method, op: DiscreteOperator, tau: float, n_steps: int, probes=None):
    """Responses of the actual stepper to unit impulses.

    Multistep: dict j -> TimeSeries for an impulse ``f_j = probe`` with j from
    the first index that reaches the recursion up to k.  Runge-Kutta: one
    TimeSeries for ``F_0 = e_i (x) probe`` batched over (i, probe).
    """
    v = _probes(op, probes)
    m, n_probe = v.shape
    if isinstance(method, RungeKuttaTableau):
        s = method.s
        stage = np.zeros((n_steps, s, m, s * n_probe), dtype=v.dtype)
        for i in range(s):
            stage[0, i, :, i * n_probe : (i + 1) * n_probe] = v
        return run_rk(method, op, ForcingSequence(stage_values=stage), tau, n_steps)
    k = method.k
    out = {}
    for j in (k,):
        f = np.zeros((n_steps + 1, m, n_probe), dtype=v.dtype)
        if j <= n_steps:
            f[j] = v
        out[j] = run_lmm(method, op, f, tau, n_steps, check_residual=False)
    return out


def cq_weights_impulse(method, op: DiscreteOperator, tau: float, n_steps: int, probes=None) -> CqWeightTable:
    """Weights read off impulse runs: tau e_n v = u_{k+n} for the impulse f_k = v."""
    v = _probes(op, probes)
    if isinstance(method, RungeKuttaTableau):
        series = impulse_responses(method, op, tau, n_steps, v)
        s = method.s
        # stage_frames: (N, s, m, s * P) -> (N, s, m, s, P)
        w = series.stage_frames.reshape(n_steps, s, op.size, s, v.shape[1])
        return CqWeightTable(method.label, tau, n_steps, v, w, "impulse", stages=s)
    k = method.k
    series = impulse_responses(method, op, tau, n_steps + k, v)[k]
    w = series.frames[k : k + n_steps + 1]
    return CqWeightTable(method.label, tau, n_steps, v, w[: n_steps], "impulse")


def _symbol_solves(method, op: DiscreteOperator, tau: float, zetas: np.ndarray, v: np.ndarray):
    """G(zeta) v with G = (delta/tau - A)^{-1} or the block analogue."""
    if isinstance(method, RungeKuttaTableau):
        s = method.s
        out = np.zeros((zetas.size, s, op.size, s, v.shape[1]), dtype=complex)
        for l, z in enumerate(zetas):
            dm = delta_matrix(method, z) / tau
            lam, sv = np.linalg.eig(dm)
            svinv = np.linalg.inv(sv)
            for i in range(s):
                # rhs e_i (x) v in the eigenbasis of Delta
                y = np.stack([op.shifted_solve(lam[j], svinv[j, i] * v) for j in range(s)])
                out[l, :, :, i, :] = np.tensordot(sv, y, axes=(1, 0))
        return out
    out = np.zeros((zetas.size, op.size, v.shape[1]), dtype=complex)
    for l, z in enumerate(zetas):
        out[l] = op.shifted_solve(delta_at(method, z) / tau, v.astype(complex))
    return out


def cq_weights_contour(
    method, op: DiscreteOperator, tau: float, n_steps: int, probes=None, cfg: ContourConfig | None = None
) -> CqWeightTable:
    """Weights as Taylor coefficients recovered by an FFT over a circle of radius rho."""
    cfg = cfg or ContourConfig.default(n_steps)
    cfg.validate(n_steps)
    v = _probes(op, probes)
    omega = np.exp(2j * np.pi * np.arange(cfg.nodes) / cfg.nodes)
    g = _symbol_solves(method, op, tau, cfg.rho * omega, v)
    coeffs = scipy.fft.fft(g, axis=0)[:n_steps] / cfg.nodes
    scale = cfg.rho ** -np.arange(n_steps)
    coeffs = coeffs * scale.reshape((-1,) + (1,) * (coeffs.ndim - 1))
    real_problem = not (op.is_complex or np.iscomplexobj(v))
    w = coeffs.real if real_problem else coeffs
    stages = method.s if isinstance(method, RungeKuttaTableau) else 1
    return CqWeightTable(
        method.label, tau, n_steps, v, w, "contour", stages=stages,
        meta={"rho": cfg.rho, "nodes": cfg.nodes, "max_imag": float(np.abs(coeffs.imag).max())},
    )


def weight_operator_norms(table: CqWeightTable, op: DiscreteOperator, q=2, apply_a: bool = True):
    """||A W_n||_q (or ||W_n||_q) per n, exact on a full probe basis."""
    w = table.weights
    if table.is_block:
        n, s, m, _, p = w.shape
        mats = w
        if apply_a:
            mats = np.stack([[op.apply(w[i, j].reshape(m, -1)) for j in range(s)] for i in range(n)])
            mats = mats.reshape(n, s, m, s, p)
        mats = mats.reshape(n, s * m, s * p)
    else:
        mats = w
        if apply_a:
            mats = np.stack([op.apply(x) for x in w])
    if q == 1:
        return np.abs(mats).sum(axis=1).max(axis=1)
    if q in (math.inf, "inf"):
        return np.abs(mats).sum(axis=2).max(axis=1)
    if q == 2:
        # batched SVD of the probe-basis blocks
        return np.linalg.norm(mats, ord=2, axis=(1, 2))
    raise ValueError(f"q must be 1, 2 or inf, got {q!r}")


@dataclass
class DecayReport:
    n: np.ndarray
    t_next: np.ndarray
    norms: np.ndarray
    products: np.ndarray

    @property
    def sup(self) -> float:
        return float(self.products.max())

    def rows(self):
        for i in range(self.n.size):
            yield int(self.n[i]), float(self.t_next[i]), float(self.norms[i]), float(self.products[i])


def kernel_decay_report(table: CqWeightTable, op: DiscreteOperator, q=2) -> DecayReport:
    """Rows (n, t_{n+1}, ||A e_n(tau A)||, product) with e_n = weight / tau."""
    norms = weight_operator_norms(table, op, q) / table.tau
    t = table.times()
    return DecayReport(np.arange(norms.size), t, norms, t * norms)


def max_relative_deviation(a: CqWeightTable, b: CqWeightTable) -> float:
    """max |a - b| relative to the largest weight entry."""
    scale = max(np.abs(a.weights).max(), np.abs(b.weights).max(), 1e-300)
    return float(np.abs(a.weights - b.weights).max() / scale)


def convolve(table: CqWeightTable, forcing: np.ndarray) -> np.ndarray:
    """u_{k+n} = sum_j (tau e_{n-j}) f_{k+j} with forcing coordinates in the probe basis.

    ``forcing`` holds coefficients c_j (shape (N, P) or (N, s, P) for blocks)
    so that f_j = probes @ c_j.
    """
    w = table.weights
    n = min(w.shape[0], forcing.shape[0])
    if table.is_block:
        out = np.zeros((n,) + w.shape[1:3], dtype=np.result_type(w, forcing))
        for i in range(n):
            for j in range(i + 1):
                out[i] += np.einsum("smtp,tp->sm", w[i - j], forcing[j])
        return out
    out = np.zeros((n, w.shape[1]), dtype=np.result_type(w, forcing))
    for i in range(n):
        for j in range(i + 1):
            out[i] += w[i - j] @ forcing[j]
    return out


def write_weights_csv(table: CqWeightTable, path) -> None:
    """Columns: n, t_n, then one column per (row, probe) weight entry."""
    w = table.weights.reshape(table.weights.shape[0], -1)
    cplx = np.iscomplexobj(w)
    cols = [f"w{i}" for i in range(w.shape[1])]
    if cplx:
        cols += [f"w{i}_imag" for i in range(w.shape[1])]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["n", "t_n"] + cols)
        for n in range(w.shape[0]):
            row = [str(n), f"{n * table.tau:.17g}"] + [f"{x:.17g}" for x in w[n].real]
            if cplx:
                row += [f"{x:.17g}" for x in w[n].imag]
            wr.writerow(row)
