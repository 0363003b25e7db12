"""Uniform periodic grids, spectral calculus and interpolation.

Every function, form component and matrix entry in the package is a
:class:`GridField`: complex samples on a uniform grid over a box in R^d.
Complex coordinates on C^n use the real axis order (x1, y1, x2, y2, ...).
"""
from __future__ import annotations

import functools
import itertools
import math
import os
from dataclasses import dataclass

import finufft
import numpy as np
from scipy import ndimage

NUFFT_EPS = 1e-14


def is_power_of_two(n: int) -> bool:
    return isinstance(n, (int, np.integer)) and n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True, eq=False)
class GridField:
    """Complex samples of a function on a uniform grid.

    Parameters
    ----------
    values : array_like
        Samples, one array axis per spatial axis.  Copied and frozen.
    box_length : sequence of float
        Side lengths of the box.
    origin : sequence of float, optional
        Coordinate of the sample with index zero.  Defaults to zeros.
    """

    values: np.ndarray
    box_length: tuple
    origin: tuple = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=complex)
        box = tuple(float(b) for b in np.atleast_1d(self.box_length))
        if vals.ndim != len(box):
            raise ValueError(f"values have {vals.ndim} axes but box has {len(box)}")
        for n in vals.shape:
            if not is_power_of_two(n):
                raise ValueError(f"shape {vals.shape} has a non power-of-two axis {n}")
        if any(b <= 0 for b in box):
            raise ValueError(f"box lengths must be positive, got {box}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        origin = (0.0,) * len(box) if self.origin is None else tuple(float(o) for o in self.origin)
        if len(origin) != len(box):
            raise ValueError("origin and box_length differ in length")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "box_length", box)
        object.__setattr__(self, "origin", origin)

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def spacing(self) -> tuple:
        return tuple(b / n for b, n in zip(self.box_length, self.shape))

    @property
    def nyquist(self) -> float:
        """Smallest per-axis Nyquist frequency pi*N/L."""
        return min(np.pi * n / b for n, b in zip(self.shape, self.box_length))

    def coords(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing[axis] * np.arange(self.shape[axis])

    def mesh(self) -> list:
        """Sparse broadcastable coordinate arrays."""
        return np.meshgrid(*[self.coords(k) for k in range(self.dim)], indexing="ij", sparse=True)

    def points(self) -> np.ndarray:
        """All sample positions as an (M, d) array in row-major order."""
        return np.stack([np.broadcast_to(c, self.shape).ravel() for c in self.mesh()], axis=1)

    def like(self, values) -> "GridField":
        return GridField(values, self.box_length, self.origin)

    def compatible(self, other: "GridField") -> bool:
        return self.shape == other.shape and np.allclose(self.box_length, other.box_length, rtol=1e-14, atol=0)

    def check_compatible(self, other: "GridField"):
        if not self.compatible(other):
            raise ValueError(f"incompatible grids: {self.shape}/{self.box_length} vs "
                             f"{other.shape}/{other.box_length}")

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    def sup(self, mask=None) -> float:
        v = np.abs(self.values)
        if mask is not None:
            v = v[np.asarray(mask, dtype=bool)]
        return float(v.max()) if v.size else 0.0

    def _other(self, other):
        if isinstance(other, GridField):
            self.check_compatible(other)
            return other.values
        return other

    def __add__(self, other):
        return self.like(self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.like(self.values - self._other(other))

    def __rsub__(self, other):
        return self.like(self._other(other) - self.values)

    def __mul__(self, other):
        return self.like(self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return self.like(-self.values)


def box_field(func, shape, box_length, origin=None) -> GridField:
    """Sample ``func(*coords)`` on a grid; coords are sparse broadcast arrays."""
    empty = GridField(np.zeros(shape), box_length, origin)
    return empty.like(np.broadcast_to(func(*empty.mesh()), empty.shape))


def wavenumbers(shape, box_length, zero_nyquist=False) -> list:
    """Angular frequencies 2*pi*k/L per axis as sparse broadcastable arrays."""
    ks = []
    for n, b in zip(shape, box_length):
        k = 2 * np.pi * np.fft.fftfreq(n, d=b / n)
        if zero_nyquist and n % 2 == 0:
            k[n // 2] = 0.0
        ks.append(k)
    return np.meshgrid(*ks, indexing="ij", sparse=True)


def frequency_norm(shape, box_length) -> np.ndarray:
    ks = wavenumbers(shape, box_length)
    return np.sqrt(sum(k ** 2 for k in ks))


def apply_multiplier(values: np.ndarray, symbol, axes=None) -> np.ndarray:
    """Apply a Fourier multiplier over the trailing grid axes."""
    if axes is None:
        axes = tuple(range(values.ndim))
    return np.fft.ifftn(np.fft.fftn(values, axes=axes) * symbol, axes=axes)


def spectral_diff(values: np.ndarray, box_length, axis: int, order: int = 1) -> np.ndarray:
    """Real partial derivative along one axis.

    Odd derivatives drop the Nyquist mode so real data stays real.
    """
    d = len(box_length)
    lead = values.ndim - d
    shape = values.shape[lead:]
    n = shape[axis]
    k = 2 * np.pi * np.fft.fftfreq(n, d=box_length[axis] / n)
    if order % 2 == 1 and n % 2 == 0:
        k[n // 2] = 0.0
    sym = (1j * k) ** order
    bshape = [1] * values.ndim
    bshape[lead + axis] = n
    ax = lead + axis
    return np.fft.ifft(np.fft.fft(values, axis=ax) * sym.reshape(bshape), axis=ax)


def complex_symbols(shape, box_length):
    """Fourier symbols of d/dz_j and d/dzbar_j on C^n, n = len(shape)//2.

    The raw lattice (Nyquist kept) is used so every nonzero mode has a
    nonzero dbar symbol; this keeps the torus homotopy identity exact.
    """
    ks = wavenumbers(shape, box_length)
    n = len(shape) // 2
    dz = [0.5j * (ks[2 * j] - 1j * ks[2 * j + 1]) for j in range(n)]
    dzb = [0.5j * (ks[2 * j] + 1j * ks[2 * j + 1]) for j in range(n)]
    return dz, dzb


def dz(values: np.ndarray, box_length, j: int) -> np.ndarray:
    """Spectral d/dz_j = (d/dx_j - i d/dy_j)/2 over the trailing grid axes."""
    d = len(box_length)
    sym = complex_symbols(values.shape[values.ndim - d:], box_length)[0][j]
    return apply_multiplier(values, sym, axes=tuple(range(values.ndim - d, values.ndim)))


def dzbar(values: np.ndarray, box_length, j: int) -> np.ndarray:
    """Spectral d/dzbar_j = (d/dx_j + i d/dy_j)/2 over the trailing grid axes."""
    d = len(box_length)
    sym = complex_symbols(values.shape[values.ndim - d:], box_length)[1][j]
    return apply_multiplier(values, sym, axes=tuple(range(values.ndim - d, values.ndim)))


def _padded_coefficients(values: np.ndarray, d: int) -> np.ndarray:
    """Centered Fourier coefficients padded to N+2 modes per axis.

    The Nyquist coefficient is split evenly between +N/2 and -N/2 so the
    trigonometric interpolant is real for real data and exact on the grid.
    """
    lead = values.ndim - d
    axes = tuple(range(lead, values.ndim))
    size = np.prod(values.shape[lead:])
    c = np.fft.fftshift(np.fft.fftn(values, axes=axes), axes=axes) / size
    for ax in axes:
        n = c.shape[ax]
        pad = [(0, 0)] * c.ndim
        pad[ax] = (1, 1)
        c = np.pad(c, pad)
        lo = [slice(None)] * c.ndim
        hi = [slice(None)] * c.ndim
        lo[ax] = 1
        hi[ax] = n + 1
        half = 0.5 * c[tuple(lo)]
        c[tuple(lo)] = half
        c[tuple(hi)] = half
    return c


def trig_eval(values: np.ndarray, box_length, origin, points: np.ndarray) -> np.ndarray:
    """Evaluate the trigonometric interpolant of periodic samples.

    Parameters
    ----------
    values : ndarray
        Shape ``batch + grid``; the last ``len(box_length)`` axes are the grid.
    box_length, origin : sequence of float
    points : ndarray, shape (M, d)

    Returns
    -------
    ndarray, shape ``batch + (M,)``
    """
    d = len(box_length)
    values = np.asarray(values, dtype=complex)
    batch = values.shape[: values.ndim - d]
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != d:
        raise ValueError(f"points have {points.shape[1]} coordinates, grid has {d}")
    theta = [np.mod(2 * np.pi * (points[:, k] - origin[k]) / box_length[k] + np.pi, 2 * np.pi) - np.pi
             for k in range(d)]
    c = _padded_coefficients(values, d).reshape((-1,) + tuple(n + 2 for n in values.shape[len(batch):]))
    nb = c.shape[0]
    opts = dict(isign=1, eps=NUFFT_EPS, modeord=0)
    if d == 1:
        out = finufft.nufft1d2(theta[0], _batch(c), **opts)
    elif d == 2:
        out = finufft.nufft2d2(theta[0], theta[1], _batch(c), **opts)
    elif d == 3:
        out = finufft.nufft3d2(theta[0], theta[1], theta[2], _batch(c), **opts)
    elif d == 4:
        n4 = c.shape[-1]
        k4 = np.arange(n4) - n4 // 2
        sub = np.moveaxis(c, -1, 1).reshape((nb * n4,) + c.shape[1:4])
        part = finufft.nufft3d2(theta[0], theta[1], theta[2], _batch(sub), **opts)
        part = part.reshape(nb, n4, -1)
        phase = np.exp(1j * np.outer(k4, theta[3]))
        out = np.einsum("bkm,km->bm", part, phase)
    else:
        raise ValueError(f"trigonometric interpolation supports d <= 4, got {d}")
    return np.asarray(out).reshape(batch + (points.shape[0],))


def _taylor_order(coef: np.ndarray, ks, delta: np.ndarray, tol: float, max_order: int):
    """Smallest order whose Taylor tail bound is below ``tol``, or None."""
    d = len(ks)
    shape = coef.shape[coef.ndim - d:]
    reach = sum(np.abs(k).reshape([-1 if a == j else 1 for a in range(d)]) * np.abs(delta[j]).max()
                for j, k in enumerate(ks))
    weight = np.abs(coef).reshape((-1,) + shape).max(axis=0) / np.prod(shape)
    full = np.exp(reach)
    partial = np.zeros(shape)
    term = np.ones(shape)
    for p in range(max_order + 1):
        partial = partial + term
        term = term * reach / (p + 1)
        if float(np.sum(weight * (full - partial))) < tol:
            return p
    return None


def _taylor_sum(coef: np.ndarray, ks, delta: np.ndarray, order: int) -> np.ndarray:
    """``sum_(|alpha| <= order) d^alpha u delta^alpha / alpha!`` from Fourier data."""
    d = len(ks)
    shape = coef.shape[coef.ndim - d:]
    axes = tuple(range(coef.ndim - d, coef.ndim))
    out = np.fft.ifftn(coef, axes=axes)
    for p in range(1, order + 1):
        for combo in itertools.combinations_with_replacement(range(d), p):
            alpha = np.bincount(combo, minlength=d)
            sym = 1.0
            factor = 1.0
            for j in range(d):
                if alpha[j] == 0:
                    continue
                kj = ks[j].copy()
                if alpha[j] % 2 == 1 and shape[j] % 2 == 0:
                    kj[shape[j] // 2] = 0.0
                sym = sym * ((1j * kj) ** alpha[j]).reshape([-1 if a == j else 1 for a in range(d)])
                factor = factor * delta[j] ** alpha[j] / math.factorial(alpha[j])
            out += np.fft.ifftn(coef * sym, axes=axes) * factor
    return out


def shift_eval(values: np.ndarray, box_length, displacement: np.ndarray, tol: float = 1e-14,
               max_order: int = 24):
    """Trigonometric interpolant at ``x + displacement(x)`` for grid points ``x``.

    Sums ``d^alpha u(x) delta^alpha / alpha!`` with spectral derivatives.  The
    tail after order p is bounded by ``sum_k |c_k| R_p(sum_j |k_j| |delta_j|)``
    with ``R_p`` the exponential remainder; terms are added until that bound
    drops below ``tol``.  Returns None when ``max_order`` is not enough.

    Parameters
    ----------
    values : ndarray, shape ``batch + grid``
    displacement : ndarray, shape ``(d,) + grid``, real
    """
    d = len(box_length)
    values = np.asarray(values, dtype=complex)
    shape = values.shape[values.ndim - d:]
    delta = np.asarray(displacement, dtype=float)
    coef = np.fft.fftn(values, axes=tuple(range(values.ndim - d, values.ndim)))
    ks = [2 * np.pi * np.fft.fftfreq(n, d=b / n) for n, b in zip(shape, box_length)]
    order = _taylor_order(coef, ks, delta, tol, max_order)
    if order is None:
        return None
    return _taylor_sum(coef, ks, delta, order)


def _cube_eval(coef: np.ndarray, box_length, origin, points: np.ndarray, K: int) -> np.ndarray:
    """Exact sum over the modes ``|k_j| <= K`` by separable contractions.

    ``coef`` is unnormalised FFT data with shape ``batch + grid``.
    """
    d = len(box_length)
    lead = coef.ndim - d
    shape = coef.shape[lead:]
    idx = [np.r_[0:K + 1, n - K:n] for n in shape]
    kval = np.r_[0:K + 1, -K:0]
    cube = coef[(Ellipsis,) + np.ix_(*idx)] / np.prod(shape)
    flat = cube.reshape((-1,) + cube.shape[lead:])
    E = [np.exp(1j * np.outer(2 * np.pi * (points[:, j] - origin[j]) / box_length[j], kval))
         for j in range(d)]
    m = kval.size
    chunk = max(256, (1 << 22) // m ** (d - 1))
    out = np.empty((flat.shape[0], points.shape[0]), complex)
    for b in range(flat.shape[0]):
        mat = flat[b].reshape(-1, m)
        for lo in range(0, points.shape[0], chunk):
            sl = slice(lo, lo + chunk)
            T = E[-1][sl] @ mat.T
            for j in range(d - 2, -1, -1):
                T = T.reshape(T.shape[0], -1, m)
                T = np.einsum("xam,xm->xa", T, E[j][sl])
            out[b, sl] = T[:, 0] if T.ndim == 2 else T
    return out.reshape(coef.shape[:lead] + (points.shape[0],))


def displaced_eval(values: np.ndarray, box_length, origin, displacement: np.ndarray,
                   rel_tol: float = 1e-15) -> np.ndarray:
    """Periodic interpolant at grid points moved by ``displacement``.

    In 4-D, where the type-2 NUFFT is slow at full precision, the spectrum is
    split into a dense low cube ``|k_j| <= K`` summed exactly and a remainder
    summed by the spectral Taylor series; ``K`` is the smallest cube whose
    remainder meets the tail bound at low order.  Lower dimensions, and 4-D
    fields that defeat the split, use the NUFFT.  Result has shape
    ``batch + grid``.
    """
    d = len(box_length)
    values = np.asarray(values, dtype=complex)
    lead = values.ndim - d
    shape = values.shape[lead:]
    delta = np.asarray(displacement, dtype=float)
    grid = GridField(np.zeros(shape), box_length, origin)
    if d == 4:
        tol = rel_tol * 10 * (float(np.abs(values).max()) or 1.0)
        axes = tuple(range(lead, values.ndim))
        coef = np.fft.fftn(values, axes=axes)
        ks = [2 * np.pi * np.fft.fftfreq(n, d=b / n) for n, b in zip(shape, box_length)]
        order = _taylor_order(coef, ks, delta, tol, 5)
        if order is not None:
            return _taylor_sum(coef, ks, delta, order)
        kint = np.meshgrid(*[np.abs(np.fft.fftfreq(n) * n) for n in shape], indexing="ij", sparse=True)
        kmax = functools.reduce(np.maximum, kint)
        pts = grid.points() + delta.reshape(d, -1).T
        # past K = 4 the dense cube costs more than the NUFFT
        for K in range(1, min(min(shape) // 2, 5)):
            rem = np.where(kmax > K, coef, 0)
            order = _taylor_order(rem, ks, delta, tol, 6)
            if order is not None:
                low = _cube_eval(coef, box_length, origin, pts, K).reshape(values.shape)
                return low + _taylor_sum(rem, ks, delta, order)
    pts = grid.points() + delta.reshape(d, -1).T
    return trig_eval(values, box_length, origin, pts).reshape(values.shape)


def _batch(c):
    c = np.ascontiguousarray(c)
    return c[0] if c.shape[0] == 1 else c


def cubic_eval(values: np.ndarray, box_length, origin, points: np.ndarray) -> np.ndarray:
    """Cubic spline interpolation on a bounded box; points must lie inside."""
    d = len(box_length)
    values = np.asarray(values, dtype=complex)
    batch = values.shape[: values.ndim - d]
    shape = values.shape[len(batch):]
    points = np.atleast_2d(np.asarray(points, dtype=float))
    idx = np.stack([(points[:, k] - origin[k]) * shape[k] / box_length[k] for k in range(d)])
    upper = np.array(shape, dtype=float)[:, None] - 1
    if np.any(idx < -1e-9) or np.any(idx > upper + 1e-9):
        bad = int(np.argmax(np.any((idx < -1e-9) | (idx > upper + 1e-9), axis=0)))
        raise ValueError(f"interpolation point {points[bad]} lies outside the box")
    flat = values.reshape((-1,) + shape)
    real_input = not np.any(flat.imag)
    # the edge-clamped spline does not reproduce affine data, so the least
    # squares affine part (decoupled on a tensor grid) is removed first and
    # added back exactly
    axes = [np.arange(m) - (m - 1) / 2 for m in shape]
    out = np.empty((flat.shape[0], points.shape[0]), dtype=complex)
    for b in range(flat.shape[0]):
        fb = flat[b]
        mean = fb.mean()
        slopes = []
        for k, c in enumerate(axes):
            bshape = [1] * d
            bshape[k] = -1
            slopes.append(np.sum(fb * c.reshape(bshape)) / (np.sum(c ** 2) * fb.size / shape[k]))
        trend = mean + sum(sl * c.reshape([-1 if j == k else 1 for j in range(d)])
                           for k, (sl, c) in enumerate(zip(slopes, axes)))
        resid = fb - trend
        parts = (resid.real,) if real_input else (resid.real, resid.imag)
        res = [ndimage.map_coordinates(ndimage.spline_filter(p, order=3, mode="nearest"), idx,
                                       order=3, mode="nearest", prefilter=False) for p in parts]
        val = res[0] if real_input else res[0] + 1j * res[1]
        out[b] = val + mean + sum(sl * (idx[k] - (shape[k] - 1) / 2) for k, sl in enumerate(slopes))
    return out.reshape(batch + (points.shape[0],))


def write_field(path, field: GridField, manifest: dict | None = None):
    """Write the flat binary format plus a ``key=value`` manifest.

    Header: dim, shape and box_length as little-endian 64-bit values.
    Payload: interleaved real/imaginary float64 samples in row-major order.
    """
    header = np.concatenate([np.array([field.dim], "<i8").view("<u1"),
                             np.array(field.shape, "<i8").view("<u1"),
                             np.array(field.box_length, "<f8").view("<u1")])
    payload = np.ascontiguousarray(field.values).view("<f8").astype("<f8")
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(payload.tobytes())
    meta = {"origin": ",".join(repr(o) for o in field.origin)}
    meta.update(manifest or {})
    with open(os.fspath(path) + ".manifest", "w") as fh:
        for key in sorted(meta):
            fh.write(f"{key}={meta[key]}\n")


def read_field(path) -> tuple:
    """Inverse of :func:`write_field`; returns ``(field, manifest)``."""
    raw = open(path, "rb").read()
    dim = int(np.frombuffer(raw[:8], "<i8")[0])
    shape = tuple(int(n) for n in np.frombuffer(raw[8:8 + 8 * dim], "<i8"))
    box = tuple(np.frombuffer(raw[8 + 8 * dim:8 + 16 * dim], "<f8"))
    data = np.frombuffer(raw[8 + 16 * dim:], "<f8").view(complex).reshape(shape)
    manifest = {}
    mpath = os.fspath(path) + ".manifest"
    if os.path.exists(mpath):
        for line in open(mpath):
            if "=" in line:
                key, val = line.rstrip("\n").split("=", 1)
                manifest[key] = val
    origin = tuple(float(o) for o in manifest.get("origin", "").split(",") if o) or None
    return GridField(data, box, origin), manifest
