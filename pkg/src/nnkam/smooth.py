"""Smoothing operators S_t and the universal extension on graph domains.

Three backends share one interface:

* ``multiplier`` -- ``lam_0(2^-N xi)`` on the torus,
* ``cone`` -- the partial sum ``sum_(k<=N) psi_k * phi_k`` of a cone pair,
  optionally seen through a linear chart ``x -> M x`` (symbol
  ``G(2^-N M^T xi)``),
* ``glued`` -- ``S0(chi_0 u) + sum_nu chi_nu S^nu(chi_nu u)`` over a chart
  atlas of a graph domain.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .domain import DomainChart
from .errors import ResolutionExhausted
from .grid import GridField, apply_multiplier, frequency_norm, spectral_diff, wavenumbers
from .lp_core import ConePair, LPFamily, cone_kernel_samples, default_family


@dataclass(frozen=True)
class SmoothingLevel:
    """``t = 2^-N``."""

    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 0:
            raise ValueError(f"smoothing level must be a non-negative integer, got {self.N}")

    @property
    def t(self) -> float:
        return 2.0 ** -self.N

    @classmethod
    def from_t(cls, t: float) -> "SmoothingLevel":
        """Quantise to the nearest dyadic ``t' <= t``."""
        if not 0 < t <= 1:
            raise ValueError(f"t must lie in (0, 1], got {t}")
        return cls(int(np.ceil(-np.log2(t) - 1e-12)))


@dataclass(eq=False)
class SmoothingOperator:
    backend: str
    family: LPFamily | None = None
    pair: ConePair | None = None
    chart: DomainChart | None = None
    cone_matrix: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.backend not in ("multiplier", "cone", "glued"):
            raise ValueError(f"unknown smoothing backend {self.backend!r}")
        if self.backend in ("multiplier", "glued") and self.family is None:
            self.family = default_family()
        if self.backend in ("cone", "glued") and self.pair is None:
            raise ValueError(f"{self.backend} backend needs a cone pair")
        if self.backend == "glued":
            if self.chart is None:
                raise ValueError("glued backend needs a domain chart")
            defect = self.chart.partition_defect()
            if defect > 1e-10:
                raise ValueError(f"chart partition defect {defect:.3g} exceeds 1e-10")

    def symbol(self, level: SmoothingLevel, shape, box_length, matrix=None) -> np.ndarray:
        """Fourier symbol of a convolution backend on a grid."""
        key = (self.backend, level.N, tuple(shape), tuple(box_length),
               None if matrix is None else np.asarray(matrix).tobytes())
        if key not in self._cache:
            if self.backend == "multiplier" or (self.backend == "glued" and matrix is None):
                sym = self.family.low_pass(level.N, frequency_norm(shape, box_length))
            else:
                ks = wavenumbers(shape, box_length)
                M = np.eye(len(shape)) if matrix is None else np.asarray(matrix, dtype=float)
                rotated = [sum(M[i, a] * ks[i] for i in range(len(shape))) for a in range(len(shape))]
                sym = self.pair.partial_sum_hat(level.N, rotated)
            self._cache[key] = sym
        return self._cache[key]


def _check(op: SmoothingOperator, level: SmoothingLevel):
    if op.family is not None and level.N + 1 > op.family.max_level:
        raise ResolutionExhausted(f"smoothing level {level.N}", op.family.max_level - 1)
    if op.pair is not None and level.N > op.pair.level_count:
        raise ResolutionExhausted(f"smoothing level {level.N}", op.pair.level_count)


def _level(level) -> SmoothingLevel:
    return level if isinstance(level, SmoothingLevel) else SmoothingLevel(int(level))


def smooth_apply(op: SmoothingOperator, level, u: GridField) -> GridField:
    level = _level(level)
    _check(op, level)
    if op.backend == "multiplier":
        return u.like(apply_multiplier(u.values, op.symbol(level, u.shape, u.box_length)))
    if op.backend == "cone":
        sym = op.symbol(level, u.shape, u.box_length, op.cone_matrix)
        return u.like(apply_multiplier(u.values, sym))
    chi0 = op.chart.interior_cutoff.values
    out = apply_multiplier(chi0 * u.values, op.symbol(level, u.shape, u.box_length))
    for ch in op.chart.charts:
        chi = ch.cutoff.values
        sym = op.symbol(level, u.shape, u.box_length, ch.matrix)
        out = out + chi * apply_multiplier(chi * u.values, sym)
    return u.like(out)


def smooth_remainder(op: SmoothingOperator, level, u: GridField) -> GridField:
    """``(I - S_t) u``."""
    return u - smooth_apply(op, level, u)


def commutator_d_smooth(op: SmoothingOperator, level, u: GridField, axis: int,
                        regularity: float | None = None) -> GridField:
    """``d_axis S_t u - S_t d_axis u`` with spectral derivatives."""
    if regularity is not None and regularity <= 1:
        warnings.warn(f"commutator estimate needs regularity above 1, got {regularity}")
    du = u.like(spectral_diff(u.values, u.box_length, axis))
    su = smooth_apply(op, level, u)
    return su.like(spectral_diff(su.values, u.box_length, axis)) - smooth_apply(op, level, du)


def glued_commutator_terms(op: SmoothingOperator, level, u: GridField, axis: int) -> GridField:
    """Cutoff expression for the glued commutator.

    ``(S0 - I)((d chi_0) u) + sum (d chi_nu)(S^nu - I)(chi_nu u)
    + sum chi_nu (S^nu - I)((d chi_nu) u)``; equal to the commutator on the
    closed domain, where the cutoffs form a partition.
    """
    level = _level(level)
    if op.backend != "glued":
        raise ValueError("cutoff expression applies to the glued backend only")
    box = u.box_length

    def remainder(sym, g):
        return apply_multiplier(g, sym) - g

    d = lambda v: spectral_diff(v, box, axis)
    chi0 = op.chart.interior_cutoff.values
    out = remainder(op.symbol(level, u.shape, box), d(chi0) * u.values)
    for ch in op.chart.charts:
        chi = ch.cutoff.values
        sym = op.symbol(level, u.shape, box, ch.matrix)
        out = out + d(chi) * remainder(sym, chi * u.values) + chi * remainder(sym, d(chi) * u.values)
    return u.like(out)


def _centred_grid(f: GridField) -> GridField:
    return GridField(np.zeros(f.shape), f.box_length, tuple(-b / 2 for b in f.box_length))


def rychkov_extend(f: GridField, pair: ConePair, omega_mask, cone_axis: int | None = None,
                   levels: int | None = None) -> GridField:
    """Truncated universal extension ``sum_(j<=J) psi_j * (1_omega (phi_j * f))``.

    ``omega_mask`` marks a graph domain ``{x_d > graph(x')}`` above the
    graph in the ``cone_axis`` direction.  Kernels are sampled in space, so
    their supports lie exactly in the cone and only values on omega are read.
    Convolutions are periodic, so the box must exceed twice the level-0
    kernel reach beyond the support of ``f`` to avoid reading wrapped values.
    """
    cone_axis = f.dim - 1 if cone_axis is None else cone_axis
    if cone_axis != pair.cone_axis or f.dim != pair.dim:
        raise ValueError(f"cone axis mismatch: domain axis {cone_axis}, pair axis {pair.cone_axis}")
    omega = np.asarray(omega_mask, dtype=bool)
    if not _is_upper_graph(omega, cone_axis):
        raise ValueError("omega is not a graph domain above the cone axis")
    J = pair.level_count if levels is None else levels
    kgrid = _centred_grid(f)
    vol = float(np.prod(f.spacing))
    data = np.where(omega, f.values, 0.0)
    fdata = np.fft.fftn(data)
    out = np.zeros(f.shape, dtype=complex)
    for j in range(J + 1):
        phi = np.fft.fftn(np.fft.ifftshift(cone_kernel_samples(pair, "phi", j, kgrid))) * vol
        psi = np.fft.fftn(np.fft.ifftshift(cone_kernel_samples(pair, "psi", j, kgrid))) * vol
        piece = np.where(omega, np.fft.ifftn(fdata * phi), 0.0)
        out += np.fft.ifftn(np.fft.fftn(piece) * psi)
    return f.like(out)


def extension_budget(f: GridField, pair: ConePair, levels: int) -> float:
    """Bound on ``sup |sum_(j<=J) psi_j * phi_j * f - f|`` from the sampled kernels."""
    kgrid = _centred_grid(f)
    vol = float(np.prod(f.spacing))
    a = np.fft.fftn(np.fft.ifftshift(pair.dilate_phi0(levels, kgrid.points()).reshape(f.shape))) * vol
    defect = np.abs(1 - (3 * a ** 2 - 2 * a ** 3))
    return float(np.sum(np.abs(np.fft.fftn(f.values)) / f.values.size * defect))


def _is_upper_graph(omega: np.ndarray, axis: int) -> bool:
    """Each line along ``axis`` meets omega in one upward-closed run."""
    col = np.moveaxis(omega, axis, -1).reshape(-1, omega.shape[axis])
    for line in col:
        if not line.any():
            continue
        first = int(np.argmax(line))
        if not line[first:].all():
            return False
    return True


def fitted_slope(levels, values) -> float:
    """Least-squares slope of ``log2 values`` against ``levels``."""
    return float(np.polyfit(np.asarray(levels, float), np.log2(np.asarray(values, float)), 1)[0])
