"""Uniform rectangular grids and the stencils used everywhere else.

Fields live on an (nx, ny) grid as numpy arrays whose first two axes are the
grid axes; everything downstream broadcasts over trailing axes.  Derivatives
default to 2nd-order centered differences (periodic wrap when the axis is
flagged periodic, one-sided 2nd-order stencils at open ends).  A spectral
backend is available for periodic axes; it falls back to the centered stencil
on open axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FD2 = "fd2"
SPECTRAL = "spectral"


@dataclass(frozen=True)
class GridSpec:
    """Sampling of a coordinate rectangle [0, lx) x [0, ly)."""

    nx: int
    ny: int
    lx: float
    ly: float
    periodic_x: bool = True
    periodic_y: bool = True

    @property
    def hx(self) -> float:
        return self.lx / self.nx if self.periodic_x else self.lx / (self.nx - 1)

    @property
    def hy(self) -> float:
        return self.ly / self.ny if self.periodic_y else self.ly / (self.ny - 1)

    @property
    def h(self) -> float:
        return max(self.hx, self.hy)

    def axes(self):
        x = np.arange(self.nx) * self.hx
        y = np.arange(self.ny) * self.hy
        return x, y

    def meshgrid(self):
        x, y = self.axes()
        return np.meshgrid(x, y, indexing="ij")

    def interior(self, margin: int = 2) -> np.ndarray:
        """Boolean mask of points where centered stencils are trustworthy."""
        mask = np.ones((self.nx, self.ny), dtype=bool)
        if margin > 0:                 # a -0 slice bound would mask everything
            if not self.periodic_x:
                mask[:margin, :] = False
                mask[-margin:, :] = False
            if not self.periodic_y:
                mask[:, :margin] = False
                mask[:, -margin:] = False
        return mask

    def cut_open(self) -> "GridSpec":
        """Same sample points, periodic identifications dropped.

        The chart lengths shrink so hx, hy are unchanged."""
        lx = self.lx * (self.nx - 1) / self.nx if self.periodic_x else self.lx
        ly = self.ly * (self.ny - 1) / self.ny if self.periodic_y else self.ly
        return GridSpec(self.nx, self.ny, lx, ly, False, False)


def _diff_centered(f: np.ndarray, axis: int, h: float, periodic: bool) -> np.ndarray:
    if periodic:
        return (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2.0 * h)
    out = np.empty_like(f)
    mid = (np.take(f, range(2, f.shape[axis]), axis=axis)
           - np.take(f, range(0, f.shape[axis] - 2), axis=axis)) / (2.0 * h)
    idx = [slice(None)] * f.ndim
    idx[axis] = slice(1, -1)
    out[tuple(idx)] = mid
    first = (-3.0 * np.take(f, 0, axis=axis) + 4.0 * np.take(f, 1, axis=axis)
             - np.take(f, 2, axis=axis)) / (2.0 * h)
    last = (3.0 * np.take(f, -1, axis=axis) - 4.0 * np.take(f, -2, axis=axis)
            + np.take(f, -3, axis=axis)) / (2.0 * h)
    idx[axis] = 0
    out[tuple(idx)] = first
    idx[axis] = -1
    out[tuple(idx)] = last
    return out


def _diff2_centered(f: np.ndarray, axis: int, h: float, periodic: bool) -> np.ndarray:
    if periodic:
        return (np.roll(f, -1, axis=axis) - 2.0 * f + np.roll(f, 1, axis=axis)) / (h * h)
    out = np.empty_like(f)
    mid = (np.take(f, range(2, f.shape[axis]), axis=axis)
           - 2.0 * np.take(f, range(1, f.shape[axis] - 1), axis=axis)
           + np.take(f, range(0, f.shape[axis] - 2), axis=axis)) / (h * h)
    idx = [slice(None)] * f.ndim
    idx[axis] = slice(1, -1)
    out[tuple(idx)] = mid
    first = (2.0 * np.take(f, 0, axis=axis) - 5.0 * np.take(f, 1, axis=axis)
             + 4.0 * np.take(f, 2, axis=axis) - np.take(f, 3, axis=axis)) / (h * h)
    last = (2.0 * np.take(f, -1, axis=axis) - 5.0 * np.take(f, -2, axis=axis)
            + 4.0 * np.take(f, -3, axis=axis) - np.take(f, -4, axis=axis)) / (h * h)
    idx[axis] = 0
    out[tuple(idx)] = first
    idx[axis] = -1
    out[tuple(idx)] = last
    return out


def _wavenumbers(n: int, length: float) -> np.ndarray:
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=length / n)
    if n % 2 == 0:
        k[n // 2] = 0.0  # drop the unpaired Nyquist mode in odd derivatives
    return k


def _diff_spectral(f: np.ndarray, axis: int, length: float, order: int = 1) -> np.ndarray:
    n = f.shape[axis]
    k = _wavenumbers(n, length)
    shape = [1] * f.ndim
    shape[axis] = n
    mult = (1j * k.reshape(shape)) ** order
    if order == 2:
        k2 = 2.0 * np.pi * np.fft.fftfreq(n, d=length / n)
        mult = -(k2.reshape(shape) ** 2)
    return np.fft.ifft(np.fft.fft(f, axis=axis), axis=axis) if order == 0 else \
        np.fft.ifft(mult * np.fft.fft(f, axis=axis), axis=axis)


def diff(f: np.ndarray, spec: GridSpec, axis: int, backend: str = FD2,
         order: int = 1) -> np.ndarray:
    """d^order f / d(axis)^order on the grid."""
    periodic = spec.periodic_x if axis == 0 else spec.periodic_y
    h = spec.hx if axis == 0 else spec.hy
    length = spec.lx if axis == 0 else spec.ly
    if backend == SPECTRAL and periodic:
        out = _diff_spectral(f, axis, length, order)
        if not np.iscomplexobj(f):
            out = out.real
        return out
    if order == 1:
        return _diff_centered(f, axis, h, periodic)
    if order == 2:
        return _diff2_centered(f, axis, h, periodic)
    raise ValueError("order must be 1 or 2")


def dz(f: np.ndarray, spec: GridSpec, backend: str = FD2) -> np.ndarray:
    """(d/dx - i d/dy)/2 for z = x + i y."""
    fx = diff(f, spec, 0, backend)
    fy = diff(f, spec, 1, backend)
    return 0.5 * (fx - 1j * fy)


def dzbar(f: np.ndarray, spec: GridSpec, backend: str = FD2) -> np.ndarray:
    fx = diff(f, spec, 0, backend)
    fy = diff(f, spec, 1, backend)
    return 0.5 * (fx + 1j * fy)


def laplace_coordinate(f: np.ndarray, spec: GridSpec, backend: str = FD2) -> np.ndarray:
    """f_xx + f_yy, the flat coordinate Laplacian (d^2/dz dzbar up to factor 4)."""
    return diff(f, spec, 0, backend, order=2) + diff(f, spec, 1, backend, order=2)


def two_form(px: np.ndarray, py: np.ndarray, spec: GridSpec,
             backend: str = FD2) -> np.ndarray:
    """dx,dy -> coefficient of d(theta) on dx^dy for theta = px dx + py dy."""
    return diff(py, spec, 0, backend) - diff(px, spec, 1, backend)


def integrate(f: np.ndarray, spec: GridSpec) -> float:
    """Trapezoid quadrature of a scalar field over the chart."""
    wx = np.ones(spec.nx)
    wy = np.ones(spec.ny)
    if not spec.periodic_x:
        wx[0] = wx[-1] = 0.5
    if not spec.periodic_y:
        wy[0] = wy[-1] = 0.5
    w = np.outer(wx, wy)
    return float(np.sum(np.real(f) * w) * spec.hx * spec.hy)


def max_norm(field: np.ndarray, spec: GridSpec | None = None,
             mask: np.ndarray | None = None, margin: int = 2) -> float:
    """Max Frobenius norm over interior, unmasked grid points."""
    mags = np.sqrt(np.sum(np.abs(field.reshape(field.shape[0], field.shape[1], -1)) ** 2,
                          axis=-1))
    keep = np.ones(mags.shape, dtype=bool)
    if spec is not None:
        keep &= spec.interior(margin)
    if mask is not None:
        keep &= mask
    if not np.any(keep):
        return float("nan")
    return float(np.max(mags[keep]))


# ---------------------------------------------------------------------------
# sampling along grid lines (for one-step integrators)

def _lagrange_weights(t: float) -> np.ndarray:
    # nodes at -1, 0, 1, 2; evaluation at t in [0, 1]
    return np.array([
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ])


def line_samples(f: np.ndarray, spec: GridSpec, axis: int, frac: float,
                 backend: str = FD2) -> np.ndarray:
    """Values of f at (index + frac) along `axis`, for every segment start index.

    Returns an array of the same shape as f; entry i is the sampled value on
    the segment [i, i+1].  For periodic axes the last segment wraps.  frac=0
    returns f itself.
    """
    if frac == 0.0:
        return f
    periodic = spec.periodic_x if axis == 0 else spec.periodic_y
    n = f.shape[axis]
    if frac == 1.0:
        return np.roll(f, -1, axis=axis) if periodic else \
            np.concatenate([np.take(f, range(1, n), axis=axis),
                            np.take(f, [n - 1], axis=axis)], axis=axis)
    if backend == SPECTRAL and periodic:
        length = spec.lx if axis == 0 else spec.ly
        k = 2.0 * np.pi * np.fft.fftfreq(n, d=length / n)
        h = length / n
        shape = [1] * f.ndim
        shape[axis] = n
        phase = np.exp(1j * k * frac * h).reshape(shape)
        out = np.fft.ifft(phase * np.fft.fft(f, axis=axis), axis=axis)
        return out
    w = _lagrange_weights(frac)
    idx = np.arange(n)
    if periodic:
        stencil = [(idx - 1) % n, idx, (idx + 1) % n, (idx + 2) % n]
        return sum(w[j] * np.take(f, stencil[j], axis=axis) for j in range(4))
    # shift the 4-point stencil inward near the ends, recompute weights there
    base = np.clip(idx - 1, 0, n - 4)
    t = (idx + frac) - base  # position relative to stencil start, in [0, 3]
    out = None
    for j in range(4):
        lj = np.ones_like(t)
        for mnode in range(4):
            if mnode == j:
                continue
            lj = lj * (t - mnode) / (j - mnode)
        shape = [1] * f.ndim
        shape[axis] = n
        term = lj.reshape(shape) * np.take(f, base + j, axis=axis)
        out = term if out is None else out + term
    return out
