"""Discrete mixed norms and estimates of the maximal regularity constant.

The constant reported for a method, operator, N and tau is

    C = ||f -> (udot_n)|| + ||f -> (A u_n)||

with both component norms taken in the scaled L^p(L^q) norm on input and
output; for Runge-Kutta methods the stage vectors (F_n), (Udot_n), (A U_n)
are measured in the same norm on X^s.  The tau^{1/p} and h^{d/q} weights
appear identically in numerator and denominator and cancel, so the
estimators below work with unweighted sums.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg
from scipy.linalg import eigvalsh_tridiagonal

from .convolution import build_modal_maps
from .cq import impulse_responses
from .methods import RungeKuttaTableau, k_or_s
from .spatial import DiscreteOperator, GridFunction, gradient
from .stepper import TimeSeries

MODES = ("exact-svd", "power-iteration", "boyd-ascent", "linfty-exact")
DENSE_LIMIT = 4000
SCAN_HEADER = ["method", "k_or_s", "p", "q", "N", "tau", "h", "estimate", "mode", "probes", "converged"]


def _parse_exponent(x) -> float:
    if isinstance(x, str):
        key = x.strip().lower()
        if key in ("inf", "infinity", "oo"):
            return math.inf
        if "/" in key:
            num, den = key.split("/")
            return float(num) / float(den)
        return float(key)
    return float(x)


@dataclass(frozen=True)
class NormSpec:
    p: float
    q: float
    tau: float = 1.0
    h: float = 1.0
    dim: int = 1

    def __post_init__(self):
        p = _parse_exponent(self.p)
        q = _parse_exponent(self.q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        if not p >= 1:
            raise ValueError("p must lie in [1, inf]")
        if not q >= 1:
            raise ValueError("q must lie in [1, inf]")
        if not self.tau > 0 or not self.h > 0:
            raise ValueError("tau and h must be positive")

    def space_norm(self, v: np.ndarray) -> np.ndarray:
        """Weighted L^q norm over the trailing axes of v."""
        v = np.abs(np.asarray(v))
        flat = v.reshape(v.shape[0], -1) if v.ndim > 1 else v[None]
        if math.isinf(self.q):
            return flat.max(axis=1)
        w = self.h**self.dim
        big = flat.max(axis=1)
        safe = np.where(big > 0, big, 1.0)
        return big * (w * ((flat / safe[:, None]) ** self.q).sum(axis=1)) ** (1.0 / self.q)


def lp_lq_norm(seq, spec: NormSpec) -> float:
    """(sum_n tau ||v_n||_q^p)^{1/p}; max_n ||v_n||_q for p = inf.

    A TimeSeries contributes its frames u_1..u_N; arrays are used as given,
    one row per time index.
    """
    if isinstance(seq, TimeSeries):
        frames = seq.frames[1:]
    else:
        frames = np.asarray(seq)
    if frames.size == 0 or frames.shape[0] == 0:
        raise ValueError("empty sequence")
    if frames.ndim == 1:
        frames = frames[:, None]
    norms = spec.space_norm(frames)
    if math.isinf(spec.p):
        return float(norms.max())
    big = norms.max()
    if big == 0:
        return 0.0
    # scale out the maximum to avoid overflow for large p
    return float(big * (spec.tau * ((norms / big) ** spec.p).sum()) ** (1.0 / spec.p))


def w1q_norm(v: GridFunction, q) -> float:
    """||v||_q + ||D_h v||_q with the grid's difference quotients."""
    spec = NormSpec(p=1, q=q, h=v.grid.h, dim=v.grid.dim)
    base = float(spec.space_norm(v.values[None])[0])
    g = gradient(v.grid, v.values)
    mag = np.abs(g) if v.grid.dim == 1 else np.sqrt((np.abs(g) ** 2).sum(axis=0))
    return base + float(spec.space_norm(mag[None])[0])


@dataclass
class RegularityEstimate:
    method: str
    k_or_s: int
    N: int
    tau: float
    h: float
    p: float
    q: float
    estimate: float
    mode: str
    probes: int
    converged: bool
    components: tuple[float, float] = (math.nan, math.nan)
    error: str = ""
    meta: dict = field(default_factory=dict)

    def row(self) -> list[str]:
        return [
            self.method,
            str(self.k_or_s),
            _fmt(self.p),
            _fmt(self.q),
            str(self.N),
            _fmt(self.tau),
            _fmt(self.h),
            _fmt(self.estimate),
            self.mode,
            str(self.probes),
            "true" if self.converged else "false",
        ]


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return ""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


# ---- modal representation -------------------------------------------------


@dataclass
class Modal:
    lam: np.ndarray
    v: np.ndarray | None
    vinv: np.ndarray | None
    unitary: bool

    @staticmethod
    def _mul(mat, x):
        # mat acts on axis 1 of x with shape (L, m, b, B)
        shp = x.shape
        out = np.matmul(mat, x.reshape(shp[0], shp[1], -1))
        return out.reshape(shp[0], mat.shape[0], *shp[2:])

    def to_modal(self, x):
        return x if self.v is None else self._mul(self.vinv, x)

    def from_modal(self, y):
        return y if self.v is None else self._mul(self.v, y)

    def to_modal_adjoint(self, y):
        # V^H y
        return y if self.v is None else self._mul(np.conj(self.v).T, y)

    def from_modal_adjoint(self, x):
        # V^{-H} x
        return x if self.v is None else self._mul(np.conj(self.vinv).T, x)


def modal_form(op: DiscreteOperator) -> Modal:
    """Diagonalize A.  Symmetric (and rotated symmetric) operators get an orthonormal basis."""
    if op.kind == "diagonal":
        return Modal(op.data, None, None, True)
    if op.symmetric or op._eig is not None:
        lam, v = op.eigensystem() if op.symmetric else op._eig
        return Modal(np.asarray(lam), v, v.conj().T, True)
    lam, v = np.linalg.eig(op.to_dense())
    vinv = np.linalg.inv(v)
    unitary = bool(np.allclose(v.conj().T @ v, np.eye(v.shape[0]), atol=1e-10))
    return Modal(lam, v, vinv, unitary)


class SolutionMap:
    """The two component maps f -> udot and f -> A u for one (method, A, tau, N)."""

    def __init__(self, method, op: DiscreteOperator, tau: float, n_steps: int, modal: Modal | None = None):
        self.method = method
        self.op = op
        self.tau = tau
        self.n_steps = n_steps
        self.modal = modal or modal_form(op)
        self.maps = build_modal_maps(method, self.modal.lam, tau, n_steps)
        self.block = method.s if isinstance(method, RungeKuttaTableau) else 1

    def input_shape(self, batch: int = 1):
        return (self.maps[0].n_in, self.op.size, self.block, batch)

    def apply(self, which: int, x):
        t = self.maps[which]
        return self.modal.from_modal(t.apply(self.modal.to_modal(x)))

    def adjoint(self, which: int, y):
        t = self.maps[which]
        return self.modal.from_modal_adjoint(t.adjoint(self.modal.to_modal_adjoint(y)))

    @property
    def complex(self) -> bool:
        return bool(np.iscomplexobj(self.modal.lam) or (self.modal.v is not None and np.iscomplexobj(self.modal.v)))


# ---- dense oracle ----------------------------------------------------------


def densify(method, op: DiscreteOperator, tau: float, n_steps: int):
    """Dense matrices of f -> udot and f -> A u assembled from stepper impulse runs.

    Rows are (n, stage, space) for n >= k (multistep) or n < N (Runge-Kutta);
    columns are the forcing entries that reach the recursion.
    """
    m = op.size
    if isinstance(method, RungeKuttaTableau):
        s = method.s
        series = impulse_responses(method, op, tau, n_steps)
        dots = series.stage_derivatives  # (N, s, m, s*m)
        forcing = np.zeros_like(dots)
        forcing[0] = np.eye(s * m).reshape(s, m, s * m)
        a_part = dots - forcing
        size = n_steps * s * m
        mats = []
        for resp in (dots, a_part):
            d = np.zeros((n_steps, s * m, n_steps, s * m), dtype=resp.dtype)
            flat = resp.reshape(n_steps, s * m, s * m)
            for j in range(n_steps):
                d[j:, :, j, :] = flat[: n_steps - j]
            mats.append(d.reshape(size, size))
        return tuple(mats)
    k = method.k
    runs = impulse_responses(method, op, tau, n_steps)
    first = min(runs)
    n_out = n_steps + 1 - k
    n_in = n_steps + 1 - first
    mats = []
    for which in (0, 1):
        d = np.zeros((n_out, m, n_in, m), dtype=np.result_type(*[r.frames for r in runs.values()]))
        for j, series in runs.items():
            resp = series.derivatives if which == 0 else np.stack([op.apply(x) for x in series.frames])
            resp = resp[k:]
            if j < k:
                d[:, :, j - first, :] = resp
            else:
                for jj in range(k, n_steps + 1):
                    d[jj - k :, :, jj - first, :] = resp[: n_out - (jj - k)]
        mats.append(d.reshape(n_out * m, n_in * m))
    return tuple(mats)


# ---- Lanczos on T^H T, one Krylov sequence per mode ---------------------------


def _lanczos_top(matvec, shape, rng, tol=1e-10, max_iter=500, check_every=4, complex_=False):
    """Largest eigenvalue of a positive semidefinite block-diagonal operator, per block.

    ``shape`` is (L, P, b, 1); the blocks are indexed by P and ``matvec(x, idx)``
    acts on the blocks listed in ``idx``.  Plain three-term Lanczos: loss of
    orthogonality creates duplicate Ritz values but does not disturb
    convergence of the largest one.  Blocks leave the batch once their Ritz
    value settles.
    """
    n_modes = shape[1]
    v = rng.standard_normal(shape)
    if complex_:
        v = v + 1j * rng.standard_normal(shape)
    axes = (0, 2, 3)

    def norms(x):
        return np.sqrt((np.abs(x) ** 2).sum(axis=axes))

    def col(x):
        return x[None, :, None, None]

    v = v / col(norms(v))
    v_prev = np.zeros_like(v)
    beta_prev = np.zeros(n_modes)
    alphas = np.zeros((max_iter, n_modes))
    betas = np.zeros((max_iter, n_modes))
    active = np.arange(n_modes)
    last = np.full(n_modes, np.nan)
    top = np.zeros(n_modes)
    it = 0
    for it in range(1, max_iter + 1):
        w = matvec(v, active)
        a = np.real((np.conj(v) * w).sum(axis=axes))
        w = w - col(a) * v - col(beta_prev) * v_prev
        b = norms(w)
        alphas[it - 1, active] = a
        scale = np.maximum(np.abs(alphas[:it, active]).max(axis=0), 1e-300)
        dead = b <= 1e-13 * scale
        b = np.where(dead, 0.0, b)
        betas[it - 1, active] = b
        safe = np.where(dead, 1.0, b)
        v_prev, v = v, np.where(col(dead), 0.0, w / col(safe))
        beta_prev = b
        if it % check_every and it != max_iter and not dead.any():
            continue
        for p in active:
            if it == 1:
                top[p] = alphas[0, p]
            else:
                top[p] = eigvalsh_tridiagonal(
                    alphas[:it, p], betas[: it - 1, p], select="i", select_range=(it - 1, it - 1)
                )[0]
        settled = np.abs(top[active] - last[active]) <= tol * np.maximum(np.abs(top[active]), 1e-300)
        keep = ~(settled | dead)
        last[active] = top[active]
        if not keep.all():
            active = active[keep]
            v, v_prev, beta_prev = v[:, keep], v_prev[:, keep], beta_prev[keep]
        if active.size == 0:
            return top, it, True
    return top, it, False


def _top_singular(d: np.ndarray) -> float:
    if d.size == 0:
        return 0.0
    g = d.conj().T @ d if d.shape[0] >= d.shape[1] else d @ d.conj().T
    n = g.shape[0]
    top = scipy.linalg.eigvalsh(g, subset_by_index=[n - 1, n - 1])[0]
    return math.sqrt(max(float(top), 0.0))


def _l2_top_vector(smap: "SolutionMap", which: int, rng):
    """Top right singular vector of one component map, in physical coordinates.

    The map is block diagonal over modes, so the vector lives in the mode
    with the largest Ritz value; that single mode is small enough to densify.
    """
    t = smap.maps[which]
    shape = (t.n_in, smap.op.size, smap.block, 1)
    tops, _, _ = _lanczos_top(
        lambda x, idx: t.adjoint(t.apply(x, idx), idx), shape, rng, tol=1e-6, complex_=smap.complex
    )
    mode = int(np.argmax(tops))
    n = t.n_in * smap.block
    eye = np.eye(n).reshape(t.n_in, smap.block, n)[:, None]
    dense = t.apply(eye, [mode]).reshape(-1, n)
    gram = dense.conj().T @ dense
    vec = scipy.linalg.eigh(gram, subset_by_index=[n - 1, n - 1])[1][:, 0]
    modal = np.zeros((t.n_in, smap.op.size, smap.block, 1), dtype=vec.dtype)
    modal[:, mode, :, 0] = vec.reshape(t.n_in, smap.block)
    return smap.modal.from_modal(modal)


def _boyd_dual(y, p, q):
    """Norming functional of y for the mixed l^p(l^q) norm (axes: time, rest)."""
    mag = np.abs(y)
    inner = (mag**q).sum(axis=(1, 2)) ** (1.0 / q)  # (L, B)
    total = (inner**p).sum(axis=0) ** (1.0 / p)  # (B,)
    with np.errstate(divide="ignore", invalid="ignore"):
        sgn = np.where(mag > 0, y / np.where(mag > 0, mag, 1.0), 0.0)
        row = np.where(inner > 0, inner ** (p - q), 0.0)
        out = (mag ** (q - 1)) * sgn * row[:, None, None, :] / np.where(total > 0, total ** (p - 1), 1.0)
    return out


def _mixed_norm(x, p, q):
    inner = (np.abs(x) ** q).sum(axis=(1, 2)) ** (1.0 / q)
    return (inner**p).sum(axis=0) ** (1.0 / p)


def _boyd(smap: SolutionMap, which, p, q, seeds, max_iter, rtol, rng, warm=True):
    pd = p / (p - 1)
    qd = q / (q - 1)
    shape = smap.input_shape(seeds)
    x = rng.standard_normal(shape)
    if smap.complex:
        x = x + 1j * rng.standard_normal(shape)
    if warm:
        # one extra probe started from the l^2-extremal vector
        start = _l2_top_vector(smap, which, rng)
        if np.iscomplexobj(start) and not smap.complex:
            start = start.real
        x = x.astype(np.result_type(x, start))
        x = np.concatenate([x, start], axis=3)
    x = x / _mixed_norm(x, p, q)[None, None, None, :]
    y = smap.apply(which, x)
    best = _mixed_norm(y, p, q)
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        z = smap.adjoint(which, _boyd_dual(y, p, q))
        x = _boyd_dual(z, pd, qd)
        x = x / np.maximum(_mixed_norm(x, p, q), 1e-300)[None, None, None, :]
        y = smap.apply(which, x)
        val = _mixed_norm(y, p, q)
        prev = float(best.max())
        best = np.maximum(best, val)
        # relative improvement of the reported maximum
        if float(best.max()) - prev <= rtol * max(prev, 1e-300):
            converged = True
            break
    return float(best.max()), it * x.shape[3], converged


# ---- l^infinity ------------------------------------------------------------


def linfty_row_sums(method, op: DiscreteOperator, tau: float, n_steps: int):
    """Running maxima of the l^inf(l^inf) row sums for both component maps.

    Returns arrays ``c[which][n]``: the exact l^inf -> l^inf norm of the map
    truncated to the first n + 1 output indices.
    """
    out = []
    if isinstance(method, RungeKuttaTableau):
        s, m = method.s, op.size
        series = impulse_responses(method, op, tau, n_steps)
        dots = series.stage_derivatives.reshape(n_steps, s * m, s * m)
        forcing = np.zeros_like(dots)
        forcing[0] = np.eye(s * m)
        for resp in (dots, dots - forcing):
            rows = np.abs(resp).sum(axis=2)  # (N, rows)
            out.append(np.cumsum(rows, axis=0).max(axis=1))
        return out
    k = method.k
    runs = impulse_responses(method, op, tau, n_steps)
    for which in (0, 1):
        total = None
        for j, series in runs.items():
            resp = series.derivatives if which == 0 else np.stack([op.apply(x) for x in series.frames])
            rows = np.abs(resp[k:]).sum(axis=2)  # (n_out, m)
            part = np.cumsum(rows, axis=0) if j == k else rows
            total = part if total is None else total + part
        out.append(np.maximum.accumulate(total.max(axis=1)))
    return out


def linfty_bruteforce(method, op: DiscreteOperator, tau: float, n_steps: int, which: int = 1) -> float:
    """sup over sign patterns of ||T f||_inf; exponential cost, small sizes only."""
    dense = densify(method, op, tau, n_steps)[which]
    cols = dense.shape[1]
    if cols > 16:
        raise ValueError("sign-pattern brute force limited to 16 inputs")
    best = 0.0
    for bits in range(2**cols):
        signs = np.array([1.0 if (bits >> i) & 1 else -1.0 for i in range(cols)])
        best = max(best, float(np.abs(dense @ signs).max()))
    return best


# ---- front door -------------------------------------------------------------


def _grid_h(op: DiscreteOperator) -> float:
    return op.grid.h if op.grid is not None else 1.0


def solution_map_norm(
    method,
    op: DiscreteOperator,
    n_steps: int,
    tau: float,
    p=2,
    q=2,
    mode: str = "power-iteration",
    seed: int = 0,
    tol: float = 1e-9,
    seeds: int = 32,
    max_iter: int | None = None,
    rtol: float = 1e-6,
) -> RegularityEstimate:
    """Estimate C = ||f -> udot|| + ||f -> A u|| for zero starting values."""
    p = _parse_exponent(p)
    q = _parse_exponent(q)
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    if isinstance(method, RungeKuttaTableau):
        pass
    elif getattr(method, "beta", None) is not None and method.beta[0] == 0:
        raise ValueError(f"{method.label} is explicit")
    if n_steps < 1:
        raise ValueError("N must be positive")
    if not isinstance(method, RungeKuttaTableau) and n_steps < method.k:
        raise ValueError(f"need N >= k = {method.k}")
    rng = np.random.default_rng(seed)
    label, ks, h = method.label, k_or_s(method), _grid_h(op)
    base = dict(method=label, k_or_s=ks, N=n_steps, tau=tau, h=h, p=p, q=q, mode=mode)

    if mode == "exact-svd":
        if not (p == 2 and q == 2):
            raise ValueError("exact-svd is only valid for p = q = 2")
        block = method.s if isinstance(method, RungeKuttaTableau) else 1
        if n_steps * op.size * block > DENSE_LIMIT:
            raise ValueError(f"exact-svd needs N*m*blocks <= {DENSE_LIMIT}")
        d1, d2 = densify(method, op, tau, n_steps)
        c = [_top_singular(d) for d in (d1, d2)]
        return RegularityEstimate(**base, estimate=sum(c), probes=d1.shape[1], converged=True, components=tuple(c))

    if mode == "linfty-exact":
        if not (math.isinf(p) and math.isinf(q)):
            raise ValueError("linfty-exact is only valid for p = q = inf")
        sums = linfty_row_sums(method, op, tau, n_steps)
        c = [float(x[-1]) for x in sums]
        return RegularityEstimate(**base, estimate=sum(c), probes=0, converged=True, components=tuple(c))

    smap = SolutionMap(method, op, tau, n_steps)
    if mode == "power-iteration":
        if not (p == 2 and q == 2):
            raise ValueError("power-iteration is only valid for p = q = 2")
        if not (op.complex_symmetric and smap.modal.unitary):
            raise ValueError("power-iteration requires a symmetric operator (time-reversal adjoint)")
        comps, probes, ok = [], 0, True
        for which in (0, 1):
            t = smap.maps[which]
            shape = (t.n_in, op.size, smap.block, 1)
            top, its, conv = _lanczos_top(
                lambda x, idx, t=t: t.adjoint(t.apply(x, idx), idx),
                shape,
                rng,
                tol=tol,
                max_iter=max_iter or 500,
                complex_=smap.complex,
            )
            comps.append(math.sqrt(max(float(np.max(top)), 0.0)))
            probes += its
            ok &= conv
        return RegularityEstimate(**base, estimate=sum(comps), probes=probes, converged=ok, components=tuple(comps))

    # boyd-ascent
    if not (1 < p < math.inf and 1 < q < math.inf):
        raise ValueError("boyd-ascent needs 1 < p, q < inf")
    comps, probes, ok = [], 0, True
    for which in (0, 1):
        val, n_probe, conv = _boyd(smap, which, p, q, seeds, max_iter or 200, rtol, rng)
        comps.append(val)
        probes += n_probe
        ok &= conv
    return RegularityEstimate(**base, estimate=sum(comps), probes=probes, converged=ok, components=tuple(comps))


# ---- scans ------------------------------------------------------------------


@dataclass
class ScanTable:
    rows: list[RegularityEstimate]

    def estimates(self) -> np.ndarray:
        return np.array([r.estimate for r in self.rows if not r.error], dtype=float)

    @property
    def ratio(self) -> float:
        e = self.estimates()
        e = e[np.isfinite(e)]
        if e.size == 0 or e.min() <= 0:
            return math.nan
        return float(e.max() / e.min())

    def column(self, tau: float, h: float) -> list[RegularityEstimate]:
        return sorted((r for r in self.rows if r.tau == tau and r.h == h), key=lambda r: r.N)

    @property
    def monotone_growth(self) -> bool:
        """True if C strictly increases with N in every (tau, h) column with >1 entry."""
        keys = {(r.tau, r.h) for r in self.rows}
        seen = False
        for tau, h in keys:
            col = [r.estimate for r in self.column(tau, h)]
            if len(col) > 1:
                seen = True
                if not all(b > a for a, b in zip(col, col[1:])):
                    return False
        return seen

    def summary_row(self) -> list[str]:
        r0 = self.rows[0] if self.rows else None
        return [
            "SUMMARY",
            "" if r0 is None else str(r0.k_or_s),
            "" if r0 is None else _fmt(r0.p),
            "" if r0 is None else _fmt(r0.q),
            "",
            "",
            "",
            _fmt(self.ratio),
            "max/min",
            str(sum(r.probes for r in self.rows)),
            "monotone_growth=" + ("true" if self.monotone_growth else "false"),
        ]

    def write_csv(self, path_or_handle) -> None:
        own = isinstance(path_or_handle, (str, os.PathLike))
        fh = open(path_or_handle, "w", newline="") if own else path_or_handle
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SCAN_HEADER)
            for r in self.rows:
                w.writerow(r.row())
            w.writerow(self.summary_row())
        finally:
            if own:
                fh.close()

    def to_records(self) -> list[dict]:
        out = []
        for r in self.rows:
            d = asdict(r)
            d["components"] = list(d["components"])
            out.append(d)
        return out


def thread_count() -> int:
    raw = os.environ.get("MAXREG_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def uniformity_scan(
    method,
    operators,
    n_list,
    tau_list,
    p=2,
    q=2,
    mode: str = "power-iteration",
    seed: int = 0,
    threads: int | None = None,
    **kwargs,
) -> ScanTable:
    """solution_map_norm over the grid (h, N, tau); cells fail independently.

    ``operators`` maps h to an operator (dict), or is a single operator.
    """
    if isinstance(operators, DiscreteOperator):
        operators = {_grid_h(operators): operators}
    cells = [(h, n, tau) for h in sorted(operators, reverse=True) for n in n_list for tau in tau_list]
    if not cells:
        raise ValueError("empty scan grid")

    def run(cell):
        h, n, tau = cell
        op = operators[h]
        try:
            est = solution_map_norm(method, op, n, tau, p, q, mode, seed=seed, **kwargs)
            est.h = h
            return est
        except Exception as exc:  # recorded in-row
            return RegularityEstimate(
                method=method.label, k_or_s=k_or_s(method), N=n, tau=tau, h=h,
                p=_parse_exponent(p), q=_parse_exponent(q), estimate=math.nan, mode=mode,
                probes=0, converged=False, error=f"{type(exc).__name__}: {exc}",
            )

    workers = threads or thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, cells))
    else:
        rows = [run(c) for c in cells]
    return ScanTable(rows)


@dataclass
class LogFactorRow:
    N: int
    c_inf: float
    ratio: float


def linfty_log_factor(method, op: DiscreteOperator, n_list, tau: float) -> list[LogFactorRow]:
    """Exact l^inf norm of f -> (A u_n) against log N."""
    n_list = sorted(int(n) for n in n_list)
    if not n_list:
        raise ValueError("empty N list")
    big = n_list[-1]
    sums = linfty_row_sums(method, op, tau, big)[1]
    rows = []
    offset = 0 if isinstance(method, RungeKuttaTableau) else method.k
    for n in n_list:
        idx = n - 1 if isinstance(method, RungeKuttaTableau) else n - offset
        c = float(sums[idx])
        ratio = c / math.log(n) if n > 1 else math.nan
        rows.append(LogFactorRow(n, c, ratio))
    return rows
