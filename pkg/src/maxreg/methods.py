"""Time discretization methods: BDF, general linear multistep, Radau IIA and Gauss.

Multistep coefficients are indexed by lag: ``alpha[j]`` and ``beta[j]``
multiply ``u_{n-j}`` and ``A u_{n-j} + f_{n-j}`` in

    sum_j alpha_j u_{n-j} = tau * sum_j beta_j (A u_{n-j} + f_{n-j}),

so that ``delta(zeta) = sum_j alpha_j zeta^j / sum_j beta_j zeta^j``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

import mpmath
import numpy as np

# guard band around the mandatory zero of delta at 1 (and the CN pole at -1)
SINGULAR_GUARD = 1e-9


class PoleError(ZeroDivisionError):
    """A generating function or stability function was evaluated at a pole."""

    def __init__(self, where, message="evaluation at a pole"):
        super().__init__(f"{message}: {where!r}")
        self.where = where


class NotApplicableError(ValueError):
    """The requested analysis does not apply to the given method."""


@dataclass(frozen=True)
class BdfMethod:
    k: int
    delta_exact: tuple[Fraction, ...]

    @property
    def delta(self) -> np.ndarray:
        return np.array([float(d) for d in self.delta_exact])

    @property
    def alpha(self) -> np.ndarray:
        return self.delta

    @property
    def beta(self) -> np.ndarray:
        b = np.zeros(self.k + 1)
        b[0] = 1.0
        return b

    @property
    def label(self) -> str:
        return f"BDF{self.k}"

    @property
    def flags(self) -> tuple[str, ...]:
        return ()


@dataclass(frozen=True)
class LinearMultistepMethod:
    k: int
    alpha: np.ndarray
    beta: np.ndarray
    label: str
    flags: tuple[str, ...] = ()

    @property
    def regularity_applicable(self) -> bool:
        return not self.flags


@dataclass(frozen=True)
class RungeKuttaTableau:
    s: int
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    label: str
    order: int

    @property
    def stiffly_accurate(self) -> bool:
        return bool(np.allclose(self.a[-1], self.b, rtol=0, atol=1e-14))


@dataclass
class StabilityReport:
    is_a_stable: bool
    alpha_angle: float
    r_infinity: complex | None
    boundary_max_modulus: float
    notes: list[str] = field(default_factory=list)

    @property
    def alpha_degrees(self) -> float:
        return math.degrees(self.alpha_angle)


Multistep = Union[BdfMethod, LinearMultistepMethod]
Method = Union[BdfMethod, LinearMultistepMethod, RungeKuttaTableau]


def bdf_coefficients(k: int) -> BdfMethod:
    """Coefficients of delta(zeta) = sum_{l=1}^k (1 - zeta)^l / l, exactly."""
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= 6:
        raise ValueError(f"BDF step number must be an integer in 1..6, got {k!r}")
    k = int(k)
    coeffs = [Fraction(0)] * (k + 1)
    for ell in range(1, k + 1):
        for j in range(ell + 1):
            coeffs[j] += Fraction(math.comb(ell, j) * (-1) ** j, ell)
    return BdfMethod(k=k, delta_exact=tuple(coeffs))


def _poly_roots(coeffs: np.ndarray) -> np.ndarray:
    # coefficients in ascending powers of zeta
    c = np.trim_zeros(np.asarray(coeffs, dtype=complex), "b")
    if c.size <= 1:
        return np.array([], dtype=complex)
    return np.roots(c[::-1])


def lmm_from_coefficients(alpha, beta, label: str = "LMM") -> LinearMultistepMethod:
    """Build a multistep descriptor and flag poles/extra zeros of delta in |zeta| <= 1.

    A flagged method is still returned; the flags say the maximal regularity
    theory for general A-stable multistep methods does not cover it.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if alpha.ndim != 1 or alpha.shape != beta.shape or alpha.size < 2:
        raise ValueError("alpha and beta must be 1-D arrays of equal length k+1 >= 2")
    if not np.any(beta):
        raise ValueError("the beta (sigma) polynomial is identically zero")
    if not np.any(alpha):
        raise ValueError("the alpha (rho) polynomial is identically zero")

    flags = []
    tol = 1e-8
    zeros = _poly_roots(alpha)
    poles = _poly_roots(beta)
    # common factors cancel in the quotient
    kept_zeros = list(zeros)
    kept_poles = []
    for p in poles:
        match = [i for i, z in enumerate(kept_zeros) if abs(z - p) < tol]
        if match:
            kept_zeros.pop(match[0])
        else:
            kept_poles.append(p)
    one_seen = False
    for z in kept_zeros:
        if abs(z) <= 1 + tol:
            if abs(z - 1) < tol and not one_seen:
                one_seen = True
                continue
            where = "boundary" if abs(abs(z) - 1) <= tol else "interior"
            flags.append(f"zero of delta at zeta={complex(np.round(z, 12))} ({where})")
    if not one_seen:
        flags.append("delta(1) != 0: method is not consistent")
    # explicit methods: sigma has no constant term -> pole at zeta = 0
    for p in kept_poles:
        if abs(p) <= 1 + tol:
            where = "boundary" if abs(abs(p) - 1) <= tol else "interior"
            flags.append(f"pole of delta at zeta={complex(np.round(p, 12))} ({where})")
    if len(beta) > 1 and beta[0] == 0 and not any("zeta=0j" in f for f in flags):
        flags.append("pole of delta at zeta=0j (interior)")
    return LinearMultistepMethod(
        k=alpha.size - 1, alpha=alpha, beta=beta, label=label, flags=tuple(flags)
    )


def crank_nicolson() -> LinearMultistepMethod:
    return lmm_from_coefficients([1.0, -1.0], [0.5, 0.5], label="CN")


def backward_euler() -> BdfMethod:
    return bdf_coefficients(1)


def delta_at(method: Multistep, zeta: complex) -> complex:
    """Evaluate delta(zeta) as a rational function."""
    zeta = complex(zeta)
    if isinstance(method, BdfMethod):
        return complex(np.polyval(method.delta[::-1], zeta))
    num = np.polyval(method.alpha[::-1], zeta)
    den = np.polyval(method.beta[::-1], zeta)
    if den == 0 or abs(den) < 1e-15 * max(1.0, abs(num)):
        raise PoleError(zeta, "delta has a pole")
    return complex(num / den)


def _delta_vec(method: Multistep, zeta: np.ndarray) -> np.ndarray:
    num = np.polyval(method.alpha[::-1], zeta)
    den = np.polyval(method.beta[::-1], zeta)
    return num / den


def _interior_flags(method: Multistep) -> list[str]:
    return [f for f in getattr(method, "flags", ()) if "interior" in f]


def _boundary_angles(method: Multistep, samples: int) -> np.ndarray:
    # theta in (0, pi] suffices: real coefficients give conjugate symmetry
    uniform = np.linspace(0.0, math.pi, samples + 1)[1:]
    excluded = []
    if isinstance(method, LinearMultistepMethod):
        excluded = [p for p in _poly_roots(method.beta) if abs(abs(p) - 1) < 1e-8]
    # the supremum of |arg delta| may be a limit at an excluded point
    clusters = [np.geomspace(SINGULAR_GUARD, uniform[0], 200)]
    for p in excluded:
        t0 = abs(np.angle(p))
        # 1 + zeta loses relative precision below ~1e-6 next to a pole
        offsets = np.geomspace(1e-6, uniform[0], 200)
        clusters.append(np.concatenate([t0 - offsets, t0 + offsets]))
    theta = np.unique(np.concatenate([uniform, *clusters]))
    theta = theta[(theta >= SINGULAR_GUARD) & (theta <= math.pi)]
    z = np.exp(1j * theta)
    keep = np.ones(theta.shape, dtype=bool)
    for p in excluded:
        keep &= np.abs(z - p) >= 1e-6 * (1 - 1e-9)
    return theta[keep]


def _golden_max(f, a: float, b: float, tol: float) -> tuple[float, float]:
    invphi = (math.sqrt(5) - 1) / 2
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = (a + b) / 2
    return x, f(x)


def a_alpha_angle(method: Method, boundary_samples: int = 100_000) -> float:
    """A(alpha) angle in radians.

    For multistep methods ``alpha = pi - sup |arg delta(zeta)|`` over the unit
    circle; arg delta is harmonic in the disk away from zeros of delta, so the
    supremum over the closed disk is attained on the boundary.  For Runge-Kutta
    methods the angle is found by bisection on rays ``|R(z)| <= 1``.
    """
    if boundary_samples < 1000:
        raise ValueError("boundary_samples must be at least 1000")
    if isinstance(method, RungeKuttaTableau):
        return _rk_alpha_angle(method)
    bad = _interior_flags(method)
    if bad:
        raise NotApplicableError(f"{method.label}: " + "; ".join(bad))
    theta = _boundary_angles(method, boundary_samples)
    args = np.abs(np.angle(_delta_vec(method, np.exp(1j * theta))))
    i = int(np.argmax(args))
    best = args[i]
    lo = theta[max(i - 1, 0)]
    hi = theta[min(i + 1, theta.size - 1)]
    if hi > lo:
        step_deg_tol = math.radians(1e-4) / 10

        def g(t):
            return abs(np.angle(_delta_vec(method, np.exp(1j * t))))

        _, refined = _golden_max(g, lo, hi, step_deg_tol)
        best = max(best, refined)
    return math.pi - float(best)


def _rk_alpha_angle(rk: RungeKuttaTableau) -> float:
    radii = np.logspace(-6, 6, 2401)

    def stable_on_ray(phi: float) -> bool:
        z = -radii * np.exp(1j * phi)
        return bool(np.all(np.abs(_stability_vec(rk, z)) <= 1 + 1e-10))

    if stable_on_ray(math.pi / 2) and stable_on_ray(-math.pi / 2):
        return math.pi / 2
    lo, hi = 0.0, math.pi / 2
    if not stable_on_ray(0.0):
        return 0.0
    while hi - lo > 1e-8:
        mid = (lo + hi) / 2
        if stable_on_ray(mid) and stable_on_ray(-mid):
            lo = mid
        else:
            hi = mid
    return lo


def _collocation(nodes: list) -> tuple[np.ndarray, np.ndarray]:
    s = len(nodes)
    vander = mpmath.matrix(s, s)
    for q in range(s):
        for j in range(s):
            vander[q, j] = nodes[j] ** q
    b = mpmath.lu_solve(vander, mpmath.matrix([mpmath.mpf(1) / (q + 1) for q in range(s)]))
    a = mpmath.matrix(s, s)
    for i in range(s):
        rhs = mpmath.matrix([nodes[i] ** (q + 1) / (q + 1) for q in range(s)])
        row = mpmath.lu_solve(vander, rhs)
        for j in range(s):
            a[i, j] = row[j]
    a_np = np.array([[float(a[i, j]) for j in range(s)] for i in range(s)])
    b_np = np.array([float(b[j]) for j in range(s)])
    return a_np, b_np


def _legendre_shifted(s: int) -> list:
    # coefficients (descending) of P_s(2x - 1)
    coeffs = [mpmath.mpf(0)] * (s + 1)
    for k in range(s + 1):
        coeffs[s - k] = (-1) ** (s + k) * mpmath.binomial(s, k) * mpmath.binomial(s + k, k)
    return coeffs


def _real_roots(coeffs: list) -> list:
    roots = mpmath.polyroots(coeffs, maxsteps=200, extraprec=200)
    return sorted(mpmath.re(r) for r in roots)


def radau_iia_tableau(s: int) -> RungeKuttaTableau:
    """Collocation on the right Radau nodes (zeros of P_s - P_{s-1} on [0, 1])."""
    if s not in (1, 2, 3):
        raise ValueError(f"Radau IIA tableaux are provided for s = 1..3, got {s!r}")
    with mpmath.workdps(40):
        if s == 1:
            nodes = [mpmath.mpf(1)]
        else:
            ps = _legendre_shifted(s)
            pm = [mpmath.mpf(0)] + _legendre_shifted(s - 1)
            nodes = _real_roots([x - y for x, y in zip(ps, pm)])
            nodes[-1] = mpmath.mpf(1)
        a, b = _collocation(nodes)
        c = np.array([float(x) for x in nodes])
    return RungeKuttaTableau(s=s, a=a, b=b, c=c, label=f"RadauIIA{s}", order=2 * s - 1)


def gauss_tableau(s: int) -> RungeKuttaTableau:
    """Collocation on the Gauss-Legendre nodes on (0, 1)."""
    if s not in (1, 2, 3):
        raise ValueError(f"Gauss tableaux are provided for s = 1..3, got {s!r}")
    with mpmath.workdps(40):
        nodes = _real_roots(_legendre_shifted(s))
        a, b = _collocation(nodes)
        c = np.array([float(x) for x in nodes])
    return RungeKuttaTableau(s=s, a=a, b=b, c=c, label=f"Gauss{s}", order=2 * s)


def stability_function(rk: RungeKuttaTableau, z: complex) -> complex:
    """R(z) = 1 + z b^T (I - z A)^{-1} 1."""
    m = np.eye(rk.s) - z * rk.a
    if abs(np.linalg.det(m)) < 1e-14 * max(1.0, abs(z)) ** rk.s:
        raise PoleError(z, "I - zA is singular")
    return complex(1 + z * rk.b @ np.linalg.solve(m, np.ones(rk.s)))


def _stability_vec(rk: RungeKuttaTableau, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    m = np.eye(rk.s)[None] - z[:, None, None] * rk.a[None]
    x = np.linalg.solve(m, np.ones((z.size, rk.s, 1)))[..., 0]
    return 1 + z * (x @ rk.b)


def r_infinity(rk: RungeKuttaTableau) -> complex:
    """R(infinity) = 1 - b^T A^{-1} 1."""
    if abs(np.linalg.det(rk.a)) < 1e-14:
        raise ValueError(f"{rk.label}: coefficient matrix is singular")
    return complex(1 - rk.b @ np.linalg.solve(rk.a, np.ones(rk.s)))


def check_a_stability(method: Method, samples: int = 20_001) -> StabilityReport:
    """Sampling-based A-stability check (certified up to grid resolution)."""
    notes: list[str] = []
    if isinstance(method, RungeKuttaTableau):
        poles = 1 / np.linalg.eigvals(method.a)
        for p in poles:
            if p.real <= 0:
                notes.append(f"pole of R at z={complex(np.round(p, 12))} in Re z <= 0")
        y = np.logspace(-6, 6, samples)
        z = 1j * np.concatenate([-y[::-1], [0.0], y])
        modulus = float(np.max(np.abs(_stability_vec(method, z))))
        if modulus > 1 + 1e-10:
            notes.append(f"max |R(iy)| = {modulus:.12g} > 1")
        ok = not notes
        angle = math.pi / 2 if ok else _rk_alpha_angle(method)
        return StabilityReport(ok, angle, r_infinity(method), modulus, notes)

    notes.extend(getattr(method, "flags", ()))
    interior = _interior_flags(method)
    theta = _boundary_angles(method, samples)
    d = _delta_vec(method, np.exp(1j * theta))
    # relative slack: delta is large next to a boundary pole
    min_re = float(np.min(d.real / np.maximum(1.0, np.abs(d))))
    if min_re < -1e-10:
        notes.append(f"min Re delta on |zeta|=1 is {min_re:.6g} < 0")
    modulus = float(np.max(np.abs(d)))
    if interior:
        return StabilityReport(False, float("nan"), None, modulus, notes)
    ok = min_re >= -1e-10
    # an A-stable method has angle 90 degrees by definition
    angle = math.pi / 2 if ok else a_alpha_angle(method, max(samples, 1000))
    return StabilityReport(ok, angle, None, modulus, notes)


def delta_matrix(rk: RungeKuttaTableau, zeta: complex) -> np.ndarray:
    """Delta(zeta) = (A + zeta/(1 - zeta) 1 b^T)^{-1}."""
    zeta = complex(zeta)
    if abs(1 - zeta) < SINGULAR_GUARD:
        raise PoleError(zeta, "Delta(zeta) is singular at zeta = 1")
    m = rk.a + zeta / (1 - zeta) * np.outer(np.ones(rk.s), rk.b)
    if np.linalg.cond(m) > 1e14:
        raise PoleError(zeta, "A + zeta/(1-zeta) 1 b^T is singular")
    return np.linalg.inv(m)


def multiplier(method: Multistep, zeta: complex, a: np.ndarray, tau: float) -> np.ndarray:
    """M(zeta) = (delta/tau) (delta/tau - A)^{-1} for a multistep method."""
    lam = delta_at(method, zeta) / tau
    a = np.atleast_2d(a)
    return lam * np.linalg.inv(lam * np.eye(a.shape[0]) - a)


def _dec(x: float) -> str:
    return f"{float(x):.16e}"


def to_json_dict(method: Method) -> dict:
    """Serializable coefficient record with 17 significant digits."""
    if isinstance(method, RungeKuttaTableau):
        return {
            "label": method.label,
            "kind": "rk",
            "s": method.s,
            "order": method.order,
            "coefficients": {
                "a": [[_dec(x) for x in row] for row in method.a],
                "b": [_dec(x) for x in method.b],
                "c": [_dec(x) for x in method.c],
            },
        }
    record = {
        "label": method.label,
        "kind": "lmm",
        "k": method.k,
        "coefficients": {
            "alpha": [_dec(x) for x in method.alpha],
            "beta": [_dec(x) for x in method.beta],
        },
    }
    if isinstance(method, BdfMethod):
        record["coefficients"]["delta_exact"] = [str(d) for d in method.delta_exact]
    return record


def to_json(method: Method) -> str:
    return json.dumps(to_json_dict(method), indent=2)


def from_json_dict(record: dict) -> Method:
    coeffs = record["coefficients"]
    if record["kind"] == "rk":
        a = np.array([[float(x) for x in row] for row in coeffs["a"]])
        b = np.array([float(x) for x in coeffs["b"]])
        c = np.array([float(x) for x in coeffs["c"]])
        return RungeKuttaTableau(
            s=int(record["s"]), a=a, b=b, c=c, label=record["label"], order=int(record.get("order", 0))
        )
    if record["kind"] == "lmm":
        alpha = [float(x) for x in coeffs["alpha"]]
        beta = [float(x) for x in coeffs["beta"]]
        return lmm_from_coefficients(alpha, beta, label=record["label"])
    raise ValueError(f"unknown method kind {record['kind']!r}")


def parse_method(name: str, k: int | None = None, stages: int | None = None) -> Method:
    """Resolve a method selector such as ``bdf2``, ``radau-iia`` or ``cn``."""
    key = name.strip().lower().replace("_", "-")
    if key in ("be", "backward-euler", "implicit-euler", "euler"):
        return backward_euler()
    if key in ("cn", "crank-nicolson"):
        return crank_nicolson()
    if key.startswith("bdf"):
        tail = key[3:].lstrip("-")
        return bdf_coefficients(int(tail) if tail else int(k or 2))
    if key.startswith("radau"):
        tail = key.split("iia")[-1].lstrip("-") if "iia" in key else ""
        return radau_iia_tableau(int(tail) if tail else int(stages or 2))
    if key.startswith("gauss"):
        tail = key[5:].lstrip("-")
        return gauss_tableau(int(tail) if tail else int(stages or 2))
    raise ValueError(f"unknown method {name!r}")


def k_or_s(method: Method) -> int:
    return method.s if isinstance(method, RungeKuttaTableau) else method.k
