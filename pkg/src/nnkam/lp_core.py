"""Littlewood-Paley families and cone-supported kernel pairs.

Classical families are radial Fourier multipliers
``lam_j(xi) = lam_0(2^-j xi) - lam_0(2^-(j-1) xi)`` applied with the FFT.
Cone pairs ``(phi_j, psi_j)`` have spatial kernels supported in the
downward cone ``{x_d < -|x'|}`` so that convolution at a point only reads
values above it; their symbols are evaluated by separable quadrature.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InfeasibleMomentSystem, ResolutionExhausted
from .grid import GridField, apply_multiplier, frequency_norm, write_field


def transition(t):
    """C-infinity step: 1 for t <= 0, 0 for t >= 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1 - t, 1.0)), 0.0)
        b = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class SpectralProfile:
    """Radial profile ``lam_0(|xi|)``.

    Parameters
    ----------
    symbol : callable
        Maps an array of radii to profile values.
    plateau_radius, support_radius : float
        The profile is 1 inside the plateau and 0 beyond the support radius.
    """

    symbol: Callable
    plateau_radius: float = 1.0
    support_radius: float = 2.0

    def __call__(self, r):
        return np.asarray(self.symbol(np.asarray(r, dtype=float)), dtype=float)

    @classmethod
    def smooth_bump(cls) -> "SpectralProfile":
        return cls(lambda r: transition(r - 1.0), 1.0, 2.0)

    @classmethod
    def from_table(cls, radii, values, support_radius=2.0) -> "SpectralProfile":
        """Piecewise-linear profile through tabulated ``(radius, value)`` pairs."""
        radii = np.asarray(radii, dtype=float)
        values = np.asarray(values, dtype=float)
        order = np.argsort(radii)
        radii, values = radii[order], values[order]
        return cls(lambda r: np.interp(r, radii, values, right=values[-1]), 1.0, support_radius)


def validate_profile(profile: SpectralProfile, radii=None, tol: float = 1e-14):
    """Check plateau, support, range and monotonicity on a radial lattice.

    Raises
    ------
    ValueError
        Naming the first frequency radius where a condition fails.
    """
    if radii is None:
        radii = np.linspace(0.0, 2.0 * profile.support_radius, 4097)
    radii = np.unique(np.abs(np.asarray(radii, dtype=float).ravel()))
    vals = profile(radii)
    checks = [
        ((radii <= profile.plateau_radius) & (np.abs(vals - 1) > tol), "plateau value 1 fails"),
        ((radii >= profile.support_radius) & (np.abs(vals) > tol), "support condition fails"),
        ((vals < -tol) | (vals > 1 + tol), "value outside [0, 1]"),
    ]
    for bad, what in checks:
        if np.any(bad):
            r = radii[np.argmax(bad)]
            raise ValueError(f"profile rejected: {what} at |xi| = {r:.6g} (value {profile(r):.6g})")
    rising = np.diff(vals) > tol
    if np.any(rising):
        r = radii[1:][np.argmax(rising)]
        raise ValueError(f"profile rejected: not radially non-increasing at |xi| = {r:.6g}")


@dataclass(frozen=True)
class LPFamily:
    """Dyadic family of radial multipliers built from one profile."""

    kind: str
    profile: SpectralProfile
    max_level: int

    def symbol(self, level: int, radius) -> np.ndarray:
        radius = np.asarray(radius, dtype=float)
        if level == 0:
            return self.profile(radius)
        return self.profile(2.0 ** -level * radius) - self.profile(2.0 ** -(level - 1) * radius)

    def low_pass(self, level: int, radius) -> np.ndarray:
        """Partial sum of the first ``level + 1`` symbols, ``lam_0(2^-level xi)``."""
        return self.profile(2.0 ** -level * np.asarray(radius, dtype=float))

    def spatial_kernel(self, level: int, shape, box_length) -> GridField:
        """Discrete kernel whose circular convolution realises the multiplier.

        Centred: the sample at the middle index sits at x = 0.
        """
        sym = self.symbol(level, frequency_norm(shape, box_length))
        kern = np.fft.fftshift(np.fft.ifftn(sym))
        origin = tuple(-b / 2 for b in box_length)
        return GridField(kern, box_length, origin)


def build_classical_family(profile: SpectralProfile, max_level: int, lattice=None) -> LPFamily:
    """Validate ``profile`` and wrap it as a classical family.

    ``lattice`` is an optional array of frequency radii (for instance the
    norms of a grid's wavenumbers) on which the profile is checked.
    """
    if max_level < 0:
        raise ValueError("max_level must be non-negative")
    validate_profile(profile, lattice)
    return LPFamily("classical", profile, int(max_level))


def default_family(max_level: int = 40) -> LPFamily:
    return build_classical_family(SpectralProfile.smooth_bump(), max_level)


def max_resolved_level(field: GridField) -> int:
    """Largest level with 2^(level+1) strictly below the grid Nyquist frequency."""
    nyq = field.nyquist
    level = -1
    while 2.0 ** (level + 2) < nyq:
        level += 1
    return level


def check_level(family_max: int, level: int, field: GridField):
    limit = min(family_max, max_resolved_level(field))
    if level < 0 or level > limit:
        raise ResolutionExhausted(f"level {level} on grid {field.shape} / box {field.box_length}", limit)


def dyadic_convolve(family: LPFamily, level: int, u: GridField) -> GridField:
    """Return ``lam_level * u`` as a Fourier multiplier."""
    check_level(family.max_level, level, u)
    sym = family.symbol(level, frequency_norm(u.shape, u.box_length))
    return u.like(apply_multiplier(u.values, sym))


def direct_circular_convolution(kernel: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Brute-force circular convolution ``sum_m k[i - m] u[m]``.

    ``kernel`` is indexed with zero offset at index 0 (not centred).
    """
    out = np.zeros(u.shape, dtype=complex)
    for m in itertools.product(*[range(n) for n in u.shape]):
        out += u[m] * np.roll(kernel, m, axis=tuple(range(u.ndim)))
    return out


# ----------------------------------------------------------------------------
# cone-supported pairs


def _bump(y):
    y = np.asarray(y, dtype=float)
    inside = np.abs(y) < 1
    out = np.zeros_like(y)
    out[inside] = np.exp(-1.0 / (1.0 - y[inside] ** 2))
    return out


def _quadrature(n: int = 4001):
    """Trapezoid nodes on (-1, 1); spectrally accurate for the flat bump."""
    y = np.linspace(-1.0, 1.0, n)
    w = np.full(n, y[1] - y[0])
    w[[0, -1]] *= 0.5
    return y, w


def _orthonormal_basis(order: int, nodes, weights):
    """Coefficients (in Legendre form) of polynomials orthonormal for the bump."""
    vander = np.polynomial.legendre.legvander(nodes, order)
    sw = np.sqrt(weights * _bump(nodes))
    q, r = np.linalg.qr(sw[:, None] * vander)
    # columns of vander @ inv(r) are orthonormal
    return np.linalg.inv(r)


@dataclass(frozen=True, eq=False)
class ConePair:
    """Kernel pair with supports in ``-K = {x_d < -|x'|}``.

    ``phi_0 = p(y) prod_i bump(y_i)`` with ``y = (x - center) / half_width``
    and ``p`` chosen so that ``int q phi_0 = q(0)`` for every polynomial of
    total degree at most ``moment_order``.  Then ``phi0_hat = 1 + O(xi^(M+1))``.
    With ``a_j = phi0_hat(2^-j xi)``:

    * ``phi_j = a_j - a_(j-1)`` (``phi_0 = a_0``),
    * ``psi_j = 3(a_j + a_(j-1)) - 2(a_j^2 + a_j a_(j-1) + a_(j-1)^2)``
      (``psi_0 = 3a_0 - 2a_0^2``),

    so that ``sum_(j<=J) psi_j phi_j = 3a_J^2 - 2a_J^3``.  Every ``psi_j`` is a
    polynomial in cone-supported dilates of ``phi_0``, hence cone-supported.
    """

    dim: int
    moment_order: int
    level_count: int
    cone_axis: int
    center: np.ndarray
    half_width: np.ndarray
    indices: tuple
    coefficients: np.ndarray
    basis: np.ndarray
    moment_residual: float
    truncation: dict = field(default_factory=dict)

    # -- spatial side -------------------------------------------------------
    def phi0(self, points) -> np.ndarray:
        """Evaluate ``phi_0`` at points of shape (M, d)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        y = (pts - self.center) / self.half_width
        leg = [np.polynomial.legendre.legvander(y[:, i], self.moment_order) @ self.basis
               for i in range(self.dim)]
        poly = np.zeros(len(pts))
        for c, alpha in zip(self.coefficients, self.indices):
            term = np.full(len(pts), c)
            for i, a in enumerate(alpha):
                term = term * leg[i][:, a]
            poly += term
        env = np.prod(_bump(y), axis=1)
        return poly * env / np.prod(self.half_width)

    def dilate_phi0(self, level: int, points) -> np.ndarray:
        """``2^(level d) phi_0(2^level x)``."""
        s = 2.0 ** level
        return s ** self.dim * self.phi0(s * np.atleast_2d(points))

    def phi_samples(self, level: int, points) -> np.ndarray:
        if level == 0:
            return self.dilate_phi0(0, points)
        return self.dilate_phi0(level, points) - self.dilate_phi0(level - 1, points)

    def support_bound(self, level: int) -> float:
        """All kernels of this level vanish where ``x_d >= -bound``."""
        return 2.0 ** -level * float(self.center[-1] * -1 - self.half_width[-1])

    # -- Fourier side -------------------------------------------------------
    def phi0_hat(self, xi_axes) -> np.ndarray:
        """Symbol of ``phi_0`` on broadcastable per-axis frequency arrays."""
        nodes, weights = _quadrature(self._quad_size(xi_axes))
        wb = weights * _bump(nodes)
        leg = np.polynomial.legendre.legvander(nodes, self.moment_order) @ self.basis
        factors = []
        for i, xi in enumerate(xi_axes):
            xi = np.asarray(xi, dtype=float)
            uniq, inv = np.unique(xi.ravel(), return_inverse=True)
            phase = np.exp(-1j * np.outer(uniq * self.half_width[i], nodes))
            table = (phase * wb) @ leg * np.exp(-1j * uniq * self.center[i])[:, None]
            factors.append((table, inv.reshape(xi.shape)))
        out = 0.0
        for c, alpha in zip(self.coefficients, self.indices):
            term = c
            for (table, inv), a in zip(factors, alpha):
                term = term * table[:, a][inv]
            out = out + term
        return np.asarray(out)

    def _quad_size(self, xi_axes) -> int:
        top = max(float(np.max(np.abs(x))) * float(np.max(self.half_width)) for x in xi_axes)
        return int(max(801, 2 * (int(6 * top / np.pi) // 2) + 1))

    def dilated_hat(self, level: int, xi_axes):
        s = 2.0 ** -level
        return self.phi0_hat([s * np.asarray(x) for x in xi_axes])

    def phi_hat(self, level: int, xi_axes) -> np.ndarray:
        if level == 0:
            return self.dilated_hat(0, xi_axes)
        return self.dilated_hat(level, xi_axes) - self.dilated_hat(level - 1, xi_axes)

    def psi_hat(self, level: int, xi_axes) -> np.ndarray:
        a = self.dilated_hat(level, xi_axes)
        if level == 0:
            return 3 * a - 2 * a ** 2
        b = self.dilated_hat(level - 1, xi_axes)
        return 3 * (a + b) - 2 * (a * a + a * b + b * b)

    def partial_sum_hat(self, level: int, xi_axes) -> np.ndarray:
        """Symbol of ``sum_(j<=level) psi_j * phi_j``."""
        a = self.dilated_hat(level, xi_axes)
        return 3 * a ** 2 - 2 * a ** 3

    def reproduction_error(self, level: int, band: float) -> float:
        """Sup of ``|1 - partial sum symbol|`` over ``|xi| <= band`` (sampled)."""
        r = np.linspace(0, band, 257)
        worst = 0.0
        for direction in np.eye(self.dim).tolist() + [list(-np.eye(self.dim)[-1])]:
            axes = [r * c for c in direction]
            worst = max(worst, float(np.max(np.abs(1 - self.partial_sum_hat(level, axes)))))
        return worst


def build_cone_pair(dim: int, moment_order: int = 8, level_count: int = 12,
                    moment_tol: float = 1e-8) -> ConePair:
    """Construct a cone-supported pair with vanishing moments up to ``moment_order``.

    In one dimension the cone is the half line ``x < 0``.
    """
    if dim < 1:
        raise ValueError("dim must be at least 1")
    if moment_order < 0 or moment_order > 12:
        raise InfeasibleMomentSystem(f"moment order {moment_order} outside [0, 12]", min(max(moment_order, 0), 12))
    # a long support [-7, -1.05] keeps the extrapolation point y(0) close to
    # the bump, which limits the size of the moment-fitting coefficients
    center = np.zeros(dim)
    center[-1] = -4.025
    half_width = np.full(dim, 0.95 / np.sqrt(max(dim - 1, 1)))
    half_width[-1] = 2.975
    nodes, weights = _quadrature()
    basis = _orthonormal_basis(moment_order, nodes, weights)
    indices = tuple(a for a in itertools.product(range(moment_order + 1), repeat=dim)
                    if sum(a) <= moment_order)
    # with an orthonormal product basis the moment system is diagonal:
    # int P_beta phi_0 = P_beta(y0) fixes each coefficient directly
    y0 = -center / half_width
    at_y0 = [np.polynomial.legendre.legvander(np.array([y0[i]]), moment_order)[0] @ basis
             for i in range(dim)]
    coefficients = np.array([np.prod([at_y0[i][a] for i, a in enumerate(alpha)]) for alpha in indices])
    pair = ConePair(dim, moment_order, level_count, dim - 1, center, half_width,
                    indices, coefficients, basis, 0.0)
    residual, achieved = _moment_residual(pair)
    if residual > moment_tol:
        raise InfeasibleMomentSystem(
            f"moment residual {residual:.3g} exceeds {moment_tol:.1e}", achieved)
    object.__setattr__(pair, "moment_residual", residual)
    # the deviation of phi0_hat from 1 near the origin and the overshoot of
    # the symbols at finite frequency are recorded, not thresholded
    radius = np.linspace(0.0, 60.0, 6001)
    axial = [np.zeros_like(radius)] * (dim - 1) + [radius]
    a = pair.phi0_hat(axial)
    object.__setattr__(pair, "truncation", {
        "phi0_hat_deviation_at_0.05": float(abs(1 - a[5])),
        "max_abs_phi0_hat": float(np.max(np.abs(a))),
        "max_abs_partial_sum_hat": float(np.max(np.abs(3 * a ** 2 - 2 * a ** 3))),
    })
    return pair


def _moment_residual(pair: ConePair, samples: int = 4001):
    """Check ``int y^beta phi_0 = y(0)^beta`` for every monomial by quadrature.

    The residual is normalised by ``int |y^beta phi_0|``, the rounding
    scale of the quadrature sum.  Returns the worst residual and the largest
    order through which every moment passes.
    """
    nodes, weights = _quadrature(samples)
    leg = np.polynomial.legendre.legvander(nodes, pair.moment_order) @ pair.basis
    wb = weights * _bump(nodes)
    y0 = -pair.center / pair.half_width
    # per-axis factor tables int y^b P_a bump and int |y^b P_a| bump
    powers = nodes[:, None] ** np.arange(pair.moment_order + 1)
    signed = (wb[:, None] * powers).T @ leg
    # the L1 scale only needs a coarse tensor grid
    coarse, cw = _quadrature(201 if pair.dim > 1 else samples)
    cleg = np.polynomial.legendre.legvander(coarse, pair.moment_order) @ pair.basis
    abs_phi = np.abs(_sampled_phi(pair, cleg)) * _tensor_weights(cw * _bump(coarse), pair.dim)
    worst, failed = 0.0, []
    for beta in pair.indices:
        total = 0.0
        for c, alpha in zip(pair.coefficients, pair.indices):
            total += c * np.prod([signed[beta[i], alpha[i]] for i in range(pair.dim)])
        scale = np.sum(abs_phi * _monomial(coarse, beta, pair.dim))
        target = np.prod(y0 ** np.array(beta))
        err = abs(total - target) / max(scale, 1e-300)
        if err > 1e-8:
            failed.append(sum(beta))
        worst = max(worst, err)
    achieved = min(failed) - 1 if failed else pair.moment_order
    return worst, achieved


def _tensor_weights(wb, dim):
    out = wb
    for _ in range(dim - 1):
        out = np.multiply.outer(out, wb)
    return out


def _monomial(nodes, beta, dim):
    out = np.abs(nodes) ** beta[0]
    for i in range(1, dim):
        out = np.multiply.outer(out, np.abs(nodes) ** beta[i])
    return out


def _sampled_phi(pair, leg):
    """Polynomial part of ``phi_0`` on the tensor quadrature grid (bump in weights)."""
    out = 0.0
    for c, alpha in zip(pair.coefficients, pair.indices):
        term = leg[:, alpha[0]]
        for i in range(1, pair.dim):
            term = np.multiply.outer(term, leg[:, alpha[i]])
        out = out + c * term
    return out


def cone_kernel_samples(pair: ConePair, which: str, level: int, field: GridField) -> np.ndarray:
    """Spatial samples of ``phi_level`` or ``psi_level`` on a centred grid.

    ``psi`` is assembled from discrete spatial convolutions of sampled
    dilates of ``phi_0``; this route shares no code with the symbol route.
    """
    pts = field.points()
    vol = float(np.prod(field.spacing))

    def dil(j):
        return pair.dilate_phi0(j, pts).reshape(field.shape)

    if which == "phi":
        return pair.phi_samples(level, pts).reshape(field.shape)
    if which != "psi":
        raise ValueError(f"unknown kernel {which!r}")

    def conv(p, q):
        shift = [n // 2 for n in field.shape]
        pq = np.fft.ifftn(np.fft.fftn(np.fft.ifftshift(p)) * np.fft.fftn(np.fft.ifftshift(q))).real
        return np.roll(pq, shift, axis=tuple(range(field.dim))) * vol

    a = dil(level)
    if level == 0:
        return 3 * a - 2 * conv(a, a)
    b = dil(level - 1)
    return 3 * (a + b) - 2 * (conv(a, a) + conv(a, b) + conv(b, b))


# ----------------------------------------------------------------------------
# cross-scale decay


def _dilate_centered(values: np.ndarray, level: int) -> np.ndarray:
    """``2^(level d) v(2^level x)`` on a centred grid by exact index striding."""
    d = values.ndim
    out = values
    for ax in range(d):
        n = values.shape[ax]
        i = np.arange(n)
        src = n // 2 + (2 ** level) * (i - n // 2)
        ok = (src >= 0) & (src < n)
        taken = np.take(out, np.clip(src, 0, n - 1), axis=ax)
        shape = [1] * d
        shape[ax] = n
        out = np.where(ok.reshape(shape), taken, 0.0)
    return out * 2.0 ** (level * d)


def measure_cross_decay(eta: GridField, theta: GridField, j: int, k: int, N: float) -> float:
    """Return ``int |eta_j * theta_k| (1 + 2^max(j,k) |x|)^N dx`` by quadrature.

    ``eta`` and ``theta`` hold level-0 generators on the same centred grid
    (x = 0 at the middle index); dilations use exact index striding.
    """
    eta.check_compatible(theta)
    if j < 0 or k < 0:
        raise ValueError("levels must be non-negative")
    a = _dilate_centered(eta.values, j)
    b = _dilate_centered(theta.values, k)
    vol = float(np.prod(eta.spacing))
    axes = tuple(range(eta.dim))
    conv = np.fft.fftshift(np.fft.ifftn(np.fft.fftn(np.fft.ifftshift(a)) * np.fft.fftn(np.fft.ifftshift(b)))) * vol
    coords = [(np.arange(n) - n // 2) * h for n, h in zip(eta.shape, eta.spacing)]
    grids = np.meshgrid(*coords, indexing="ij", sparse=True)
    radius = np.sqrt(sum(g ** 2 for g in grids))
    weight = (1 + 2.0 ** max(j, k) * radius) ** N
    return float(np.sum(np.abs(conv) * weight) * vol) if axes else 0.0


def decay_rate(values) -> float:
    """Least-squares slope of log2 of a positive sequence against its index."""
    v = np.log2(np.asarray(values, dtype=float))
    return float(np.polyfit(np.arange(len(v)), v, 1)[0])


# ----------------------------------------------------------------------------
# serialisation


def save_family_kernel(path, family: LPFamily, level: int, shape, box_length):
    kern = family.spatial_kernel(level, shape, box_length)
    write_field(path, kern, {"kind": family.kind, "level": level, "levels": family.max_level})


def save_pair_kernel(path, pair: ConePair, which: str, level: int, shape, box_length):
    origin = tuple(-b / 2 for b in box_length)
    empty = GridField(np.zeros(shape), box_length, origin)
    kern = empty.like(cone_kernel_samples(pair, which, level, empty))
    write_field(path, kern, {"kind": f"cone_{which}", "level": level, "levels": pair.level_count,
                             "moment_order": pair.moment_order, "cone_axis": pair.cone_axis})
