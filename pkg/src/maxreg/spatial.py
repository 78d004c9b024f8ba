"""Spatial operators standing in for A: finite-difference Laplacians and matrices.

Every operator supports ``apply`` and shifted solves ``(gamma I - A) x = b``
with factorizations cached per shift.  Batched right-hand sides of shape
``(m, batch)`` are accepted throughout.
"""

from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

Bc = Literal["dirichlet", "neumann"]


class SingularShiftError(ArithmeticError):
    """The shift lies (numerically) in the spectrum of the operator."""

    def __init__(self, gamma, detail=""):
        super().__init__(f"singular shift gamma={complex(gamma)!r} {detail}".strip())
        self.gamma = gamma


@dataclass(frozen=True)
class Grid:
    dim: int
    n: int
    length: float = 1.0
    bc: str = "dirichlet"

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim!r}")
        if not isinstance(self.n, (int, np.integer)) or self.n < 2:
            raise ValueError(f"need at least 2 interior points per axis, got {self.n!r}")
        if self.bc not in ("dirichlet", "neumann"):
            raise ValueError(f"bc must be 'dirichlet' or 'neumann', got {self.bc!r}")
        if not self.length > 0:
            raise ValueError("length must be positive")

    @property
    def h(self) -> float:
        if self.bc == "dirichlet":
            return self.length / (self.n + 1)
        return self.length / self.n

    @property
    def size(self) -> int:
        return self.n**self.dim

    def axis(self) -> np.ndarray:
        """Coordinates of the unknowns along one axis."""
        h = self.h
        if self.bc == "dirichlet":
            return h * np.arange(1, self.n + 1)
        return h * (np.arange(self.n) + 0.5)

    def span(self) -> float:
        """Reconstruct the domain length from h and the boundary offsets."""
        offsets = 1 if self.bc == "dirichlet" else 0
        return self.h * (self.n + offsets)


@dataclass
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != (self.grid.size,):
            raise ValueError(
                f"grid function of size {self.values.size} does not match grid size {self.grid.size}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function has non-finite entries")


def _lru_get(cache: OrderedDict, lock: threading.Lock, key, build, limit=64):
    with lock:
        if key in cache:
            cache.move_to_end(key)
            return cache[key]
    value = build()
    with lock:
        cache[key] = value
        while len(cache) > limit:
            cache.popitem(last=False)
    return value


@dataclass(eq=False)
class DiscreteOperator:
    """A linear operator on a grid space (or on C^m for dense/diagonal kinds)."""

    kind: str
    data: object
    symmetric: bool
    grid: Grid | None = None
    _cache: OrderedDict = field(default_factory=OrderedDict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    _eig: tuple | None = field(default=None, repr=False)

    # ---- construction -------------------------------------------------
    @classmethod
    def dense(cls, matrix, symmetric: bool | None = None) -> "DiscreteOperator":
        m = np.atleast_2d(np.asarray(matrix))
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("dense operator needs a square matrix")
        if symmetric is None:
            symmetric = bool(np.isrealobj(m) and np.allclose(m, m.T, rtol=0, atol=1e-14))
        return cls("dense", m, symmetric)

    @classmethod
    def diagonal(cls, values, grid: Grid | None = None) -> "DiscreteOperator":
        d = np.asarray(values).ravel()
        return cls("diagonal", d, bool(np.isrealobj(d)), grid)

    @property
    def size(self) -> int:
        if self.kind == "diagonal":
            return self.data.size
        return self.data.shape[0]

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.data.data if sp.issparse(self.data) else self.data)

    @property
    def complex_symmetric(self) -> bool:
        """A equals its plain transpose (true for symmetric and rotated symmetric ops)."""
        if self.kind == "diagonal":
            return True
        if self.symmetric:
            return True
        m = self.data
        if sp.issparse(m):
            return abs(m - m.T).max() <= 1e-14 * max(abs(m).max(), 1.0)
        return bool(np.allclose(m, m.T, rtol=0, atol=1e-14 * max(np.abs(m).max(), 1.0)))

    # ---- action -------------------------------------------------------
    def apply(self, x) -> np.ndarray:
        x = np.asarray(x)
        if self.kind == "diagonal":
            return self.data.reshape((-1,) + (1,) * (x.ndim - 1)) * x
        return self.data @ x

    def to_dense(self) -> np.ndarray:
        if self.kind == "diagonal":
            return np.diag(self.data)
        if sp.issparse(self.data):
            return self.data.toarray()
        return np.array(self.data)

    def to_sparse(self) -> sp.csr_matrix:
        if self.kind == "diagonal":
            return sp.diags(self.data).tocsr()
        if sp.issparse(self.data):
            return self.data.tocsr()
        return sp.csr_matrix(self.data)

    def scaled(self, factor: complex) -> "DiscreteOperator":
        """factor * A (for example a rotation e^{i phi} A)."""
        real = np.isreal(factor) and not self.is_complex
        sym = self.symmetric and bool(real)
        factor = float(np.real(factor)) if real else complex(factor)
        data = self.data * factor
        out = DiscreteOperator(self.kind, data, sym, self.grid)
        if self._eig is not None:
            w, v = self._eig
            out._eig = (w * factor, v)
        return out

    def rotated(self, phi: float) -> "DiscreteOperator":
        return self.scaled(np.exp(1j * phi))

    def shifted(self, shift: complex) -> "DiscreteOperator":
        """A + shift * I."""
        if self.kind == "diagonal":
            return DiscreteOperator.diagonal(self.data + shift, self.grid)
        if sp.issparse(self.data):
            data = (self.data + shift * sp.identity(self.size, format="csr")).tocsr()
        else:
            data = self.data + shift * np.eye(self.size)
        sym = self.symmetric and bool(np.isreal(shift))
        return DiscreteOperator(self.kind, data, sym, self.grid)

    # ---- spectra ------------------------------------------------------
    def eigensystem(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues and orthonormal eigenvectors of a symmetric operator (cached)."""
        if self._eig is not None:
            return self._eig
        if not self.symmetric:
            raise ValueError("eigensystem is only provided for symmetric operators")
        if self.kind == "diagonal":
            eig = (self.data.copy(), np.eye(self.size))
        elif self.kind == "laplacian_1d":
            diag = self.data.diagonal()
            off = self.data.diagonal(1)
            eig = scipy.linalg.eigh_tridiagonal(diag, off)
        elif self.kind == "laplacian_2d":
            w1, v1 = laplacian_1d(self.grid.n, self.grid.bc, self.grid.length).eigensystem()
            w = (w1[:, None] + w1[None, :]).ravel()
            v = np.kron(v1, v1)
            order = np.argsort(w)
            eig = (w[order], v[:, order])
        else:
            eig = scipy.linalg.eigh(self.to_dense())
        self._eig = eig
        return eig

    def eigenvalues(self) -> np.ndarray:
        if self.symmetric:
            return self.eigensystem()[0]
        return np.linalg.eigvals(self.to_dense())

    def spectral_extent(self) -> tuple[float, float]:
        """Smallest nonzero and largest eigenvalue magnitudes."""
        mags = np.abs(self.eigenvalues())
        nz = mags[mags > 1e-12 * max(mags.max(), 1.0)]
        if nz.size == 0:
            return 1.0, 1.0
        return float(nz.min()), float(nz.max())

    # ---- shifted solves -----------------------------------------------
    def _factor(self, gamma: complex):
        if self.kind == "diagonal":
            d = gamma - self.data
            if np.any(np.abs(d) <= 1e-14 * max(np.abs(self.data).max(), abs(gamma), 1.0)):
                raise SingularShiftError(gamma)
            return ("diag", d)
        if self.kind == "laplacian_1d" and self.size > 2:
            dtype = np.result_type(self.data.dtype, type(gamma))
            dl = -self.data.diagonal(-1).astype(dtype)
            d = gamma - self.data.diagonal().astype(dtype)
            du = -self.data.diagonal(1).astype(dtype)
            (gttrf,) = scipy.linalg.get_lapack_funcs(("gttrf",), dtype=dtype)
            dl_, d_, du_, du2, ipiv, info = gttrf(dl, d, du)
            if info != 0:
                raise SingularShiftError(gamma, "(pivot breakdown)")
            return ("gt", (dl_, d_, du_, du2, ipiv, dtype))
        if sp.issparse(self.data):
            m = (gamma * sp.identity(self.size, format="csc") - self.data).tocsc()
            try:
                return ("splu", spla.splu(m))
            except RuntimeError as exc:
                raise SingularShiftError(gamma, f"({exc})") from exc
        m = gamma * np.eye(self.size) - self.data
        lu, piv = scipy.linalg.lu_factor(m, check_finite=False)
        if np.any(np.abs(np.diag(lu)) <= 1e-14 * max(np.abs(m).max(), 1.0)):
            raise SingularShiftError(gamma, "(zero pivot)")
        return ("lu", (lu, piv))

    def factor(self, gamma: complex):
        gamma = complex(gamma)
        if gamma.imag == 0 and not self.is_complex:
            gamma = gamma.real
        return gamma, _lru_get(self._cache, self._lock, gamma, lambda: self._factor(gamma))

    def shifted_solve(self, gamma: complex, b, check: bool = True) -> np.ndarray:
        """Solve (gamma I - A) x = b for vector or (m, batch) right-hand sides."""
        b = np.asarray(b)
        if b.shape[0] != self.size:
            raise ValueError(f"right-hand side has {b.shape[0]} rows, operator has {self.size}")
        gamma, (tag, f) = self.factor(gamma)
        if tag == "diag":
            x = b / f.reshape((-1,) + (1,) * (b.ndim - 1))
        elif tag == "gt":
            dl_, d_, du_, du2, ipiv, dtype = f
            rhs_dtype = np.result_type(dtype, b.dtype)
            if rhs_dtype != dtype:
                # real factorization, complex data: solve both parts
                xr = self.shifted_solve(gamma, b.real, check=False)
                xi = self.shifted_solve(gamma, b.imag, check=False)
                x = xr + 1j * xi
            else:
                (gttrs,) = scipy.linalg.get_lapack_funcs(("gttrs",), dtype=dtype)
                x, info = gttrs(dl_, d_, du_, du2, ipiv, b.astype(dtype, copy=False))
                if info != 0:
                    raise SingularShiftError(gamma, "(solve failed)")
        elif tag == "splu":
            if np.iscomplexobj(b) and f.L.dtype.kind != "c":
                x = f.solve(np.ascontiguousarray(b.real)) + 1j * f.solve(np.ascontiguousarray(b.imag))
            else:
                x = f.solve(b.astype(np.result_type(f.L.dtype, b.dtype)))
        else:
            x = scipy.linalg.lu_solve(f, b, check_finite=False)
        if check:
            r = gamma * x - self.apply(x) - b
            nb = np.linalg.norm(b)
            if not np.all(np.isfinite(x)) or np.linalg.norm(r) > 1e-10 * max(nb, 1e-300):
                raise SingularShiftError(gamma, "(residual contract violated)")
        return x

    def export_matrix_market(self, path, comment: str = "") -> None:
        scipy.io.mmwrite(str(path), self.to_sparse().tocoo(), comment=comment)


def _check_bc(bc: str) -> str:
    key = bc.lower()
    if key not in ("dirichlet", "neumann"):
        raise ValueError(f"bc must be 'dirichlet' or 'neumann', got {bc!r}")
    return key


def _lap1d_matrix(n: int, bc: str, h: float) -> sp.csr_matrix:
    main = np.full(n, -2.0)
    if bc == "neumann":
        # reflected ghost value equals the first/last unknown
        main[0] = main[-1] = -1.0
    off = np.ones(n - 1)
    return (sp.diags([off, main, off], [-1, 0, 1], format="csr") / h**2).tocsr()


def laplacian_1d(n: int, bc: str = "dirichlet", length: float = 1.0) -> DiscreteOperator:
    """Second-order (1, -2, 1)/h^2 Laplacian; Neumann is cell-centered."""
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise ValueError(f"need n >= 2, got {n!r}")
    grid = Grid(1, int(n), float(length), _check_bc(bc))
    return DiscreteOperator("laplacian_1d", _lap1d_matrix(grid.n, grid.bc, grid.h), True, grid)


def laplacian_2d(n: int, bc: str = "dirichlet", length: float = 1.0) -> DiscreteOperator:
    """Kronecker sum of two 1D Laplacians on the square."""
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise ValueError(f"need n >= 2, got {n!r}")
    grid = Grid(2, int(n), float(length), _check_bc(bc))
    a1 = _lap1d_matrix(grid.n, grid.bc, grid.h)
    eye = sp.identity(grid.n, format="csr")
    a2 = (sp.kron(a1, eye) + sp.kron(eye, a1)).tocsr()
    return DiscreteOperator("laplacian_2d", a2, True, grid)


def laplacian(dim: int, n: int, bc: str = "dirichlet", length: float = 1.0) -> DiscreteOperator:
    if dim == 1:
        return laplacian_1d(n, bc, length)
    if dim == 2:
        return laplacian_2d(n, bc, length)
    raise ValueError(f"dim must be 1 or 2, got {dim!r}")


def _grad1d_matrix(n: int, bc: str, h: float) -> sp.csr_matrix:
    rows = sp.lil_matrix((n, n))
    for i in range(1, n - 1):
        rows[i, i - 1] = -0.5
        rows[i, i + 1] = 0.5
    if bc == "neumann":
        # ghost u_{-1} = u_0, u_n = u_{n-1}
        rows[0, 0], rows[0, 1] = -0.5, 0.5
        rows[n - 1, n - 2], rows[n - 1, n - 1] = -0.5, 0.5
    elif n >= 3:
        # second-order one-sided differences at the edges
        rows[0, 0], rows[0, 1], rows[0, 2] = -1.5, 2.0, -0.5
        rows[n - 1, n - 3], rows[n - 1, n - 2], rows[n - 1, n - 1] = 0.5, -2.0, 1.5
    else:
        rows[0, 0], rows[0, 1] = -1.0, 1.0
        rows[1, 0], rows[1, 1] = -1.0, 1.0
    return (rows.tocsr() / h).tocsr()


def gradient_matrices(grid: Grid) -> list[sp.csr_matrix]:
    """One sparse difference matrix per axis (x first, then y)."""
    d1 = _grad1d_matrix(grid.n, grid.bc, grid.h)
    if grid.dim == 1:
        return [d1]
    eye = sp.identity(grid.n, format="csr")
    # values are stored with x as the slow index
    return [sp.kron(d1, eye).tocsr(), sp.kron(eye, d1).tocsr()]


def gradient(grid: Grid, values) -> np.ndarray:
    """Difference-quotient gradient, shape (dim, size) (or (size,) for d=1)."""
    mats = gradient_matrices(grid)
    if grid.dim == 1:
        return mats[0] @ np.asarray(values)
    return np.stack([m @ np.asarray(values) for m in mats])


# ---- sector probing ------------------------------------------------------


@dataclass
class SectorSampleSpec:
    radii: int = 41
    lower: float = 1e-6
    upper: float = 1e6
    fractions: tuple[float, ...] = (0.0, 0.5, 1.0)


@dataclass
class SectorProbeResult:
    theta: float
    q: object
    samples: list[tuple[complex, float]]
    sup_norm: float


def matrix_norm(m: np.ndarray, q, tol: float = 1e-8, max_iter: int = 5000, seed: int = 0) -> float:
    """Induced q-norm: column sums (q=1), row sums (q=inf), power iteration (q=2)."""
    m = np.asarray(m)
    if q == 1:
        return float(np.abs(m).sum(axis=0).max())
    if q in (math.inf, "inf"):
        return float(np.abs(m).sum(axis=1).max())
    if q != 2:
        raise ValueError(f"q must be 1, 2 or inf, got {q!r}")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(m.shape[1]) + 0j
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(max_iter):
        y = m.conj().T @ (m @ x)
        ny = np.linalg.norm(y)
        if ny == 0:
            return 0.0
        new = math.sqrt(ny)
        x = y / ny
        if abs(new - est) <= tol * new:
            est = new
            break
        est = new
    return float(est)


def sector_bound(
    op: DiscreteOperator, theta: float, q=2, spec: SectorSampleSpec | None = None, seed: int = 0
) -> SectorProbeResult:
    """Sample sup ||lambda (lambda - A)^{-1}||_q over a sector |arg lambda| <= theta."""
    spec = spec or SectorSampleSpec()
    if not 0 <= theta < math.pi:
        raise ValueError("theta must lie in [0, pi)")
    ev = op.eigenvalues()
    mags = np.abs(ev)
    scale = max(mags.max(), 1.0)
    nz = ev[mags > 1e-12 * scale]
    if nz.size and np.any(np.abs(np.angle(nz)) <= theta + 1e-12):
        raise ValueError("the closed sector meets the spectrum of the operator")
    lo, hi = op.spectral_extent()
    radii = np.geomspace(spec.lower * lo, spec.upper * hi, spec.radii)
    angles = sorted({s * f * theta for f in spec.fractions for s in (1, -1)})
    eye = np.eye(op.size)
    samples = []
    for phi in angles:
        for r in radii:
            lam = r * np.exp(1j * phi)
            res = op.shifted_solve(lam, eye.astype(complex))
            samples.append((complex(lam), matrix_norm(lam * res, q, seed=seed)))
    sup = max(v for _, v in samples)
    return SectorProbeResult(theta=theta, q=q, samples=samples, sup_norm=sup)
