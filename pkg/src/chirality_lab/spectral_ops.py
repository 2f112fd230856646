"""FFT calculus on the torus.

All operators act on plain (n, n, ...) value tables; the first two axes are
the grid.  Real input gives real output for the real-coefficient operators.
Band-limitedness is the caller's contract: operators are exact on resolved
trigonometric polynomials and silently alias otherwise.
``spectral_tail_fraction`` reports how badly that contract is violated.

Conventions, fixed once:
    d_z    = (d/dx1 - i d/dx2) / 2      plane-wave symbol (i k1 + k2) / 2
    d_zbar = (d/dx1 + i d/dx2) / 2      plane-wave symbol (i k1 - k2) / 2
    grad_perp f = (-d2 f, d1 f)
Odd symbols (single derivatives and the inverse of d_zbar) zero the Nyquist
row/column so real fields stay real through round trips.
"""

import numpy as np

from chirality_lab.field_core import Grid2, left_i, right_i

__all__ = [
    "SpectralPlan",
    "random_band_limited",
    "random_band_limited_complex",
]


def _fft(f):
    return np.fft.fft2(f, axes=(0, 1))


def _ifft(F):
    return np.fft.ifft2(F, axes=(0, 1))


class SpectralPlan:
    """Wavenumber tables and Fourier-multiplier machinery for one grid.

    Immutable after construction; safe to share.  Wavenumbers follow
    k = 2 pi * integer / L.
    """

    def __init__(self, grid: Grid2):
        self.grid = grid
        n = grid.n
        k = 2.0 * np.pi * np.fft.fftfreq(n, d=grid.spacing)
        self.k1 = k[:, None] * np.ones((1, n))
        self.k2 = np.ones((n, 1)) * k[None, :]
        self.kc = self.k1 + 1j * self.k2
        self.k2abs = self.k1**2 + self.k2**2

        nyq = n // 2
        odd_mask1 = np.ones((n, n))
        odd_mask1[nyq, :] = 0.0
        odd_mask2 = np.ones((n, n))
        odd_mask2[:, nyq] = 0.0
        self._sym_d1 = 1j * self.k1 * odd_mask1
        self._sym_d2 = 1j * self.k2 * odd_mask2
        self._sym_dz = 0.5 * (self._sym_d1 - 1j * self._sym_d2)
        self._sym_dzbar = 0.5 * (self._sym_d1 + 1j * self._sym_d2)

        nonzero = self.k2abs > 0.0
        self._inv_lap = np.zeros((n, n))
        self._inv_lap[nonzero] = -1.0 / self.k2abs[nonzero]

        ok = (np.abs(self._sym_dzbar) > 0.0) & (odd_mask1 > 0) & (odd_mask2 > 0)
        self._inv_dzbar = np.zeros((n, n), dtype=complex)
        self._inv_dzbar[ok] = 1.0 / self._sym_dzbar[ok]
        self._inv_dzbar_sq = self._inv_dzbar**2

    # -- multiplier application ------------------------------------------

    def _apply(self, sym, f):
        f = np.asarray(f)
        if f.ndim > 2:
            sym = sym.reshape(sym.shape + (1,) * (f.ndim - 2))
        return _ifft(sym * _fft(f))

    def _apply_real_op(self, sym, f):
        out = self._apply(sym, f)
        return out.real if np.isrealobj(f) else out

    # -- derivatives ------------------------------------------------------

    def dx(self, f):
        return self._apply_real_op(self._sym_d1, f)

    def dy(self, f):
        return self._apply_real_op(self._sym_d2, f)

    def grad(self, f):
        return self.dx(f), self.dy(f)

    def grad_perp(self, f):
        return -self.dy(f), self.dx(f)

    def div(self, a1, a2):
        return self.dx(a1) + self.dy(a2)

    def curl(self, a1, a2):
        return self.dx(a2) - self.dy(a1)

    def laplacian(self, f):
        return self._apply_real_op(-self.k2abs, f)

    def d_z(self, f):
        """(d1 - i d2)/2 on complex tables."""
        return self._apply(self._sym_dz, np.asarray(f, dtype=complex))

    def d_zbar(self, f):
        return self._apply(self._sym_dzbar, np.asarray(f, dtype=complex))

    # quaternion Cauchy-Riemann-Fueter operators; i acts by component shuffle
    def d_left(self, q):
        return 0.5 * (self.dx(q) - left_i(self.dy(q)))

    def d_right(self, q):
        return 0.5 * (self.dx(q) - right_i(self.dy(q)))

    def d_left_bar(self, q):
        return 0.5 * (self.dx(q) + left_i(self.dy(q)))

    def d_right_bar(self, q):
        return 0.5 * (self.dx(q) + right_i(self.dy(q)))

    # -- inverses ---------------------------------------------------------

    def inv_laplacian(self, f):
        """Mean-zero g with Lap g = f - mean(f)."""
        return self._apply_real_op(self._inv_lap, f)

    def cauchy_solve(self, g):
        """Mean-zero h with d_zbar h = g - mean(g).

        Torus analogue of convolving with the plane Cauchy kernel normalized
        so that d_zbar of it is a delta; realized by symbol division.
        """
        return self._apply(self._inv_dzbar, np.asarray(g, dtype=complex))

    def inv_dzbar_sq(self, g):
        """Second antiderivative under d_zbar (zero mode and Nyquist dropped).

        The output T satisfies d_zbar(d_zbar T) = g - mean, so for
        d_zbar h = g one has d_zbar T = h - mean(h).
        """
        return self._apply(self._inv_dzbar_sq, np.asarray(g, dtype=complex))

    # -- decompositions and helpers ---------------------------------------

    def hodge_decompose(self, a1, a2):
        """Split a = grad(alpha) + grad_perp(beta) + constant mean vector."""
        alpha = self.inv_laplacian(self.div(a1, a2))
        beta = self.inv_laplacian(self.curl(a1, a2))
        mean = np.array([np.mean(a1), np.mean(a2)])
        return alpha, beta, mean

    def spectral_tail_fraction(self, f, fraction=2.0 / 3.0):
        """Energy fraction carried by modes with max|k_i| above the cutoff."""
        F = _fft(np.asarray(f))
        kmax = np.pi * self.grid.n / self.grid.length
        tail = (np.abs(self.k1) >= fraction * kmax) | (np.abs(self.k2) >= fraction * kmax)
        if F.ndim > 2:
            tail = tail.reshape(tail.shape + (1,) * (F.ndim - 2))
            tail = np.broadcast_to(tail, F.shape)
        total = np.sum(np.abs(F) ** 2)
        if total == 0.0:
            return 0.0
        return float(np.sum(np.abs(F[tail]) ** 2) / total)

    def fourier_coefficients(self, f):
        """Coefficients c_k with f = sum c_k exp(i k.x)."""
        return _fft(np.asarray(f)) / self.grid.n**2

    def dealias(self, f):
        """Zero all modes above two thirds of the Nyquist wavenumber.

        Standard product-dealiasing rule; iterative solvers apply it to
        their increments so pointwise products do not compound tails.
        """
        f = np.asarray(f)
        kmax = np.pi * self.grid.n / self.grid.length
        keep = (np.abs(self.k1) < 2.0 / 3.0 * kmax) & (
            np.abs(self.k2) < 2.0 / 3.0 * kmax
        )
        if f.ndim > 2:
            keep = keep.reshape(keep.shape + (1,) * (f.ndim - 2))
        out = _ifft(keep * _fft(f))
        return out.real if np.isrealobj(f) else out


def random_band_limited(plan, rng, kmax=None, rms=1.0, mean_zero=True):
    """Real random field with modes confined to max|k index| <= kmax."""
    n = plan.grid.n
    if kmax is None:
        kmax = n // 6
    idx = np.fft.fftfreq(n, d=1.0 / n)
    keep = (np.abs(idx[:, None]) <= kmax) & (np.abs(idx[None, :]) <= kmax)
    F = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    F *= keep
    f = _ifft(F).real
    if mean_zero:
        f -= f.mean()
    scale = np.sqrt(np.mean(f**2))
    if scale > 0:
        f *= rms / scale
    return f


def random_band_limited_complex(plan, rng, kmax=None, rms=1.0, mean_zero=True):
    re = random_band_limited(plan, rng, kmax, rms, mean_zero)
    im = random_band_limited(plan, rng, kmax, rms, mean_zero)
    return (re + 1j * im) / np.sqrt(2.0)
