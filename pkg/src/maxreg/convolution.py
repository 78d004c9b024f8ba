"""Causal block convolutions and per-mode kernels of the discrete solution maps.

Sequences are arrays of shape ``(L, P, b, batch)``: time, mode (or spatial
index), block component (1 for multistep, s for Runge-Kutta), batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .methods import BdfMethod, LinearMultistepMethod, RungeKuttaTableau


class BlockToeplitz:
    """Lower-triangular block Toeplitz map y_n = sum_{j<=n} K_{n-j} x_j with n < L."""

    def __init__(self, kernel: np.ndarray):
        kernel = np.asarray(kernel)
        if kernel.ndim != 4:
            raise ValueError("kernel must have shape (L, P, b_out, b_in)")
        self.kernel = kernel
        self.length = kernel.shape[0]
        self.real = not np.iscomplexobj(kernel)
        self.nfft = scipy.fft.next_fast_len(2 * self.length - 1, real=self.real)
        self._scalar = kernel.shape[2] == 1 and kernel.shape[3] == 1
        self._hats = {}

    def _hat(self, adjoint: bool, real: bool):
        key = (adjoint, real)
        if key not in self._hats:
            k = self.kernel
            if adjoint:
                k = np.conj(np.swapaxes(k, 2, 3))
            if self._scalar:
                k = k[:, :, 0, 0][:, :, None, None]
            fwd = scipy.fft.rfft if real else scipy.fft.fft
            self._hats[key] = fwd(k, n=self.nfft, axis=0)
        return self._hats[key]

    def _conv(self, x, adjoint: bool, idx=None):
        real = self.real and not np.iscomplexobj(x)
        khat = self._hat(adjoint, real)
        if idx is not None:
            khat = khat[:, idx]
        if real:
            xhat = scipy.fft.rfft(x, n=self.nfft, axis=0)
        else:
            xhat = scipy.fft.fft(x, n=self.nfft, axis=0)
        if self._scalar:
            yhat = khat * xhat
        else:
            yhat = np.einsum("fpij,fpjb->fpib", khat, xhat)
        if real:
            return scipy.fft.irfft(yhat, n=self.nfft, axis=0)[: self.length]
        return scipy.fft.ifft(yhat, n=self.nfft, axis=0)[: self.length]

    def apply(self, x: np.ndarray, idx=None) -> np.ndarray:
        """``idx`` selects a subset of modes; x then carries only those."""
        return self._conv(x, adjoint=False, idx=idx)

    def adjoint(self, y: np.ndarray, idx=None) -> np.ndarray:
        """Time reversal with conjugate-transposed blocks."""
        return self._conv(y[::-1], adjoint=True, idx=idx)[::-1]

    def restrict(self, mode: int) -> "BlockToeplitz":
        """The same convolution acting on a single mode."""
        return BlockToeplitz(self.kernel[:, mode : mode + 1])

    def dense(self) -> np.ndarray:
        """Dense matrix for a single mode layout (only for small sizes); shape (L*P*bo, L*P*bi)."""
        length, p, bo, bi = self.kernel.shape
        out = np.zeros((length, p, bo, length, p, bi), dtype=self.kernel.dtype)
        for n in range(length):
            for j in range(n + 1):
                for q in range(p):
                    out[n, q, :, j, q, :] = self.kernel[n - j, q]
        return out.reshape(length * p * bo, length * p * bi)


def _block_mul(mat, x):
    """out[n, p, i, b] = sum_j mat[p, i, j] x[n, p, j, b] for tiny blocks."""
    out = mat[None, :, :, 0, None] * x[:, :, None, 0, :]
    for j in range(1, mat.shape[2]):
        out = out + mat[None, :, :, j, None] * x[:, :, None, j, :]
    return out


def _row_mul(row, x):
    """out[n, p, 0, b] = sum_j row[p, j] x[n, p, j, b]."""
    out = row[None, :, 0, None] * x[:, :, 0, :]
    for j in range(1, row.shape[1]):
        out = out + row[None, :, j, None] * x[:, :, j, :]
    return out[:, :, None, :]


class RankOneTail:
    """Block Toeplitz map whose kernel is K_0 at lag 0 and left g_n right^T at lag n >= 1.

    Only the scalar sequence g goes through an FFT, so the cost is that of a
    single-component convolution whatever the block size.
    """

    def __init__(self, head: np.ndarray, left: np.ndarray, right: np.ndarray, g: np.ndarray):
        self.head, self.left, self.right = head, left, right
        self.scalar = BlockToeplitz(g[:, :, None, None])
        self.length = g.shape[0]

    @staticmethod
    def _sel(a, idx):
        return a if idx is None else a[idx]

    def apply(self, x, idx=None):
        head, left, right = (self._sel(a, idx) for a in (self.head, self.left, self.right))
        y = _block_mul(head, x)
        c = _row_mul(right, x)
        return y + left[None, :, :, None] * self.scalar.apply(c, idx)

    def adjoint(self, y, idx=None):
        head, left, right = (self._sel(a, idx) for a in (self.head, self.left, self.right))
        x = _block_mul(np.conj(np.swapaxes(head, 1, 2)), y)
        c = _row_mul(left.conj(), y)
        return x + right.conj()[None, :, :, None] * self.scalar.adjoint(c, idx)

    def restrict(self, mode: int) -> "RankOneTail":
        sl = slice(mode, mode + 1)
        return RankOneTail(self.head[sl], self.left[sl], self.right[sl], self.scalar.kernel[:, sl, 0, 0])

    @property
    def kernel(self) -> np.ndarray:
        g = self.scalar.kernel[:, :, 0, 0]
        kern = g[:, :, None, None] * (self.left[:, :, None] * self.right[:, None, :])[None]
        kern[0] = self.head
        return kern


def lmm_modal_kernels(method, lam: np.ndarray, tau: float, length: int):
    """Per-mode kernels of the multistep map after the sigma prefilter.

    Returns ``(state, derivative, a_state)`` of shape (length, P): the
    impulse response of (rho/tau - sigma lam)^{-1}, its backward difference
    and lam times it.
    """
    alpha = np.asarray(method.alpha, float)
    beta = np.asarray(method.beta, float)
    k = alpha.size - 1
    lam = np.asarray(lam)
    c = alpha[:, None] / tau - beta[:, None] * lam[None, :]
    dtype = np.result_type(lam.dtype, float)
    state = np.zeros((length, lam.size), dtype=dtype)
    inv0 = 1.0 / c[0]
    for n in range(length):
        acc = np.zeros(lam.size, dtype=dtype) if n else np.ones(lam.size, dtype=dtype)
        for j in range(1, min(n, k) + 1):
            acc = acc - c[j] * state[n - j]
        state[n] = acc * inv0
    deriv = np.zeros_like(state)
    for j in range(k + 1):
        deriv[j:] += alpha[j] * state[: length - j]
    deriv /= tau * beta.sum()
    return state, deriv, lam[None, :] * state


def rk_modal_kernels(rk: RungeKuttaTableau, lam: np.ndarray, tau: float, length: int):
    """Per-mode s x s kernels: stage values, stage derivatives, A times stage values.

    With z = tau lam the stage response to F_0 = e_i is
    K_0 = tau (I - zA)^{-1} A and K_n = (I - zA)^{-1} 1 R(z)^{n-1} r^T for n >= 1,
    where r^T = tau b^T (lam K_0 + I) is the row giving u_1.
    """
    lam = np.asarray(lam)
    s = rk.s
    z = tau * lam
    eye = np.eye(s)
    m = eye[None] - z[:, None, None] * rk.a[None]
    minv = np.linalg.inv(m)
    k0 = tau * minv @ rk.a[None]
    w = minv @ np.ones(s)  # (P, s)
    r = 1 + z * (w @ rk.b)
    row = tau * np.einsum("j,pji->pi", rk.b, lam[:, None, None] * k0 + eye[None])
    dtype = np.result_type(lam.dtype, float)
    kern = np.zeros((length, lam.size, s, s), dtype=dtype)
    kern[0] = k0
    if length > 1:
        powers = r[None, :] ** np.arange(length - 1)[:, None]  # (L-1, P)
        kern[1:] = powers[:, :, None, None] * (w[:, :, None] * row[:, None, :])[None]
    kdot = lam[None, :, None, None] * kern
    kdot[0] += eye
    return kern, kdot, lam[None, :, None, None] * kern


@dataclass
class LmmMap:
    """f -> output for a multistep method in modal coordinates.

    Input indices run over ``first..N`` and outputs over ``k..N``.  The
    sigma prefilter g_n = sum_j beta_j f_{n-j} is applied and g_n for n < k
    is discarded (zero starting values).
    """

    beta: np.ndarray
    k: int
    first: int
    n_steps: int
    conv: BlockToeplitz

    @property
    def n_in(self) -> int:
        return self.n_steps + 1 - self.first

    @property
    def n_out(self) -> int:
        return self.n_steps + 1 - self.k

    def _prefilter(self, x):
        g = np.zeros_like(x)
        for j, b in enumerate(self.beta):
            if b != 0:
                g[j:] += b * x[: x.shape[0] - j]
        return g[self.k - self.first :]

    def _prefilter_adjoint(self, g):
        full = np.zeros((self.n_in,) + g.shape[1:], dtype=g.dtype)
        full[self.k - self.first :] = g
        out = np.zeros_like(full)
        for j, b in enumerate(self.beta):
            if b != 0:
                out[: self.n_in - j] += b * full[j:]
        return out

    def restrict(self, mode: int) -> "LmmMap":
        return LmmMap(self.beta, self.k, self.first, self.n_steps, self.conv.restrict(mode))

    def apply(self, x, idx=None):
        return self.conv.apply(self._prefilter(x), idx)

    def adjoint(self, y, idx=None):
        return self._prefilter_adjoint(self.conv.adjoint(y, idx))


@dataclass
class ConvMap:
    """Plain block convolution (Runge-Kutta stage maps)."""

    conv: BlockToeplitz

    @property
    def n_in(self) -> int:
        return self.conv.length

    @property
    def n_out(self) -> int:
        return self.conv.length

    def restrict(self, mode: int) -> "ConvMap":
        return ConvMap(self.conv.restrict(mode))

    def apply(self, x, idx=None):
        return self.conv.apply(x, idx)

    def adjoint(self, y, idx=None):
        return self.conv.adjoint(y, idx)


def rk_rank_one_maps(rk: RungeKuttaTableau, lam: np.ndarray, tau: float, length: int):
    """Derivative and A-part stage maps in the factored form of ``rk_modal_kernels``."""
    lam = np.asarray(lam)
    s = rk.s
    z = tau * lam
    eye = np.eye(s)
    minv = np.linalg.inv(eye[None] - z[:, None, None] * rk.a[None])
    k0 = tau * minv @ rk.a[None]
    w = minv @ np.ones(s)
    r = 1 + z * (w @ rk.b)
    row = tau * np.einsum("j,pji->pi", rk.b, lam[:, None, None] * k0 + eye[None])
    g = np.zeros((length, lam.size), dtype=np.result_type(lam.dtype, float))
    if length > 1:
        g[1:] = r[None, :] ** np.arange(length - 1)[:, None]
    lk0 = lam[:, None, None] * k0
    lw = lam[:, None] * w
    return RankOneTail(lk0 + eye[None], lw, row, g), RankOneTail(lk0, lw, row, g)


def build_modal_maps(method, lam: np.ndarray, tau: float, n_steps: int):
    """The two component maps (derivative, A-part) of the solution operator in modal form."""
    if isinstance(method, RungeKuttaTableau):
        return tuple(ConvMap(t) for t in rk_rank_one_maps(method, lam, tau, n_steps))
    if not isinstance(method, (BdfMethod, LinearMultistepMethod)):
        raise TypeError(f"unsupported method {method!r}")
    beta = np.asarray(method.beta, float)
    if beta[0] == 0:
        raise ValueError(f"{method.label} is explicit")
    k = method.k
    # data before index k is zero along with the starting values
    first = k
    length = n_steps + 1 - k
    if length < 1:
        raise ValueError(f"need N >= k = {k}")
    _, d, a = lmm_modal_kernels(method, lam, tau, length)
    maps = []
    for ker in (d, a):
        maps.append(LmmMap(beta, k, first, n_steps, BlockToeplitz(ker[:, :, None, None])))
    return tuple(maps)
