"""(0,1)- and (0,2)-forms on C^n, the dbar operator, and homotopy operators.

Coordinates are ``x = (x_1, y_1, ..., x_n, y_n)`` with ``z_j = x_j + i y_j``.
Two backends provide ``P`` on (0,1)-forms and ``Q`` on (0,2)-forms with
``a = dbar P a + Q dbar a``:

* ``spectral`` on the torus, for mean-zero data,
* ``bm_kernel`` on a ball in C^2: real-space quadrature of the
  Bochner-Martinelli kernel ``K_b = conj(z_b) / (pi^2 |x|^4)`` applied to a
  compactly supported extension of the data.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .domain import DefiningFunction
from .grid import GridField, complex_symbols, frequency_norm
from .lp_core import transition


@dataclass(frozen=True)
class Form01:
    """``a = sum_b a_b dzbar_b``."""

    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("a (0,1)-form needs n >= 1 components")
        for c in comps[1:]:
            comps[0].check_compatible(c)
        if comps[0].dim != 2 * len(comps):
            raise ValueError(f"{len(comps)} components need a {2 * len(comps)}-D grid, got {comps[0].dim}-D")
        object.__setattr__(self, "components", comps)

    @property
    def n(self) -> int:
        return len(self.components)

    @property
    def grid(self) -> GridField:
        return self.components[0]

    def array(self) -> np.ndarray:
        return np.stack([c.values for c in self.components])

    @classmethod
    def from_array(cls, grid: GridField, values) -> "Form01":
        return cls(tuple(grid.like(v) for v in values))

    def __sub__(self, other: "Form01") -> "Form01":
        return Form01(tuple(a - b for a, b in zip(self.components, other.components)))

    def __add__(self, other: "Form01") -> "Form01":
        return Form01(tuple(a + b for a, b in zip(self.components, other.components)))

    def sup(self, mask=None) -> float:
        return max(c.sup(mask) for c in self.components)


@dataclass(frozen=True)
class Form02:
    """``w = sum_(b<c) w_bc dzbar_b ^ dzbar_c``; only ``b < c`` is stored."""

    components: dict
    n: int
    grid: GridField | None = None

    def __post_init__(self):
        keys = set(itertools.combinations(range(self.n), 2))
        if set(self.components) != keys:
            raise ValueError(f"(0,2)-form needs exactly the keys {sorted(keys)}")

    def get(self, b: int, c: int):
        """Coefficient ``w_bc`` with antisymmetry; ``None`` on the diagonal."""
        if b == c:
            return None
        if b < c:
            return self.components[(b, c)]
        return -self.components[(c, b)]

    def sup(self, mask=None) -> float:
        return max((c.sup(mask) for c in self.components.values()), default=0.0)


def _symbols(grid: GridField):
    return complex_symbols(grid.shape, grid.box_length)


def dbar_scalar(u: GridField) -> Form01:
    """``dbar u = sum_b (d u / d zbar_b) dzbar_b``."""
    n = u.dim // 2
    if u.dim != 2 * n or n < 1:
        raise ValueError("dbar needs an even-dimensional grid")
    _, dzb = _symbols(u)
    fu = np.fft.fftn(u.values)
    return Form01(tuple(u.like(np.fft.ifftn(dzb[b] * fu)) for b in range(n)))


def dbar_apply(a: Form01) -> Form02:
    """``(dbar a)_bc = d_bbar a_c - d_cbar a_b`` with spectral derivatives."""
    g = a.grid
    _, dzb = _symbols(g)
    fa = [np.fft.fftn(c.values) for c in a.components]
    comps = {(b, c): g.like(np.fft.ifftn(dzb[b] * fa[c] - dzb[c] * fa[b]))
             for b, c in itertools.combinations(range(a.n), 2)}
    return Form02(comps, a.n, g)


def dbar_apply_fd(a: Form01, order: int = 4) -> Form02:
    """Centred finite-difference dbar (periodic), an independent oracle."""
    g = a.grid
    coeff = {2: ([1], [0.5]), 4: ([1, 2], [2 / 3, -1 / 12])}[order]

    def diff(v, axis):
        h = g.spacing[axis]
        out = np.zeros_like(v)
        for m, w in zip(*coeff):
            out = out + w * (np.roll(v, -m, axis) - np.roll(v, m, axis))
        return out / h

    def dzb(v, b):
        return 0.5 * (diff(v, 2 * b) + 1j * diff(v, 2 * b + 1))

    vals = [c.values for c in a.components]
    comps = {(b, c): g.like(dzb(vals[c], b) - dzb(vals[b], c))
             for b, c in itertools.combinations(range(a.n), 2)}
    return Form02(comps, a.n, g)


# ----------------------------------------------------------------------------
# homotopy operators


@dataclass(frozen=True)
class BallExtension:
    """Radial reflection extension from the ball ``|x| <= radius``.

    Outside the ball, ``E a(x) = chi(|x|) sum_j c_j a(x r_j / |x|)`` with
    ``r_j = radius - lam_j (|x| - radius)``; the weights match the first
    ``terms`` radial derivatives across the sphere and ``chi`` falls from 1
    at the sphere to 0 at ``outer``.  The sampler is only evaluated inside
    the closed ball.
    """

    radius: float = 1.0
    outer: float = 1.4
    terms: int = 4

    def __post_init__(self):
        if not 0 < self.radius < self.outer:
            raise ValueError("need 0 < radius < outer")
        if (self.outer - self.radius) * max(self.lam) >= self.radius:
            raise ValueError("reflection leaves the ball; shrink outer")

    @property
    def lam(self) -> np.ndarray:
        return 1.0 / np.arange(1, self.terms + 1)

    @property
    def weights(self) -> np.ndarray:
        V = np.vander(-self.lam, self.terms, increasing=True).T
        return np.linalg.solve(V, np.ones(self.terms))

    def cutoff(self, r) -> np.ndarray:
        return transition((r - self.radius) / (self.outer - self.radius))

    def __call__(self, sampler, points: np.ndarray) -> np.ndarray:
        """Extended values ``(M, n)`` at ``points`` ``(M, 2n)``."""
        r = np.linalg.norm(points, axis=1)
        inside = r <= self.radius
        shell = (~inside) & (r < self.outer)
        probe = sampler(points[:1])
        out = np.zeros((len(points),) + np.shape(probe)[1:], dtype=complex)
        if inside.any():
            out[inside] = sampler(points[inside])
        if shell.any():
            p, rs = points[shell], r[shell]
            acc = 0.0
            for c, lam in zip(self.weights, self.lam):
                rj = self.radius - lam * (rs - self.radius)
                acc = acc + c * np.asarray(sampler(p * (rj / rs)[:, None]))
            chi = self.cutoff(rs)
            out[shell] = acc * chi.reshape((-1,) + (1,) * (np.ndim(acc) - 1))
        return out


def _cell_integral() -> float:
    """``int_([-1/2,1/2]^4) |u|^-2 du`` by splitting the cube into face pyramids."""
    nodes, w = np.polynomial.legendre.leggauss(48)
    v, w = nodes / 2, w / 2
    V = np.meshgrid(v, v, v, indexing="ij", sparse=True)
    W = w[:, None, None] * w[None, :, None] * w[None, None, :]
    return float(2 * np.sum(W / (0.25 + V[0] ** 2 + V[1] ** 2 + V[2] ** 2)))


CELL_INTEGRAL = _cell_integral()


@dataclass(frozen=True)
class BMKernel:
    """Bochner-Martinelli kernel in C^2 with a smooth far cutoff.

    The cutoff is a product of per-coordinate steps, equal to 1 where every
    ``|y_i| <= inner`` and 0 where some ``|y_i| >= outer``.
    """

    inner: float
    outer: float

    def __post_init__(self):
        if not 0 < self.inner < self.outer:
            raise ValueError("need 0 < inner < outer")

    def cutoff(self, coords):
        out = 1.0
        for y in coords:
            out = out * transition((np.abs(y) - self.inner) / (self.outer - self.inner))
        return out

    def symbols(self, grid: GridField) -> list:
        """DFT of the sampled kernel plus the singular-cell correction.

        Away from the origin the kernel is sampled (midpoint rule).  On the
        cell containing the singularity the kernel times the linear Taylor
        term of the data integrates exactly to
        ``-(I_c h^2 / (2 pi^2)) d u_b / d z_b``.
        """
        if grid.dim != 4:
            raise ValueError("the kernel backend is implemented for C^2 only")
        h = grid.spacing
        if max(h) - min(h) > 1e-12 * max(h):
            raise ValueError("kernel quadrature needs an isotropic grid")
        h = h[0]
        if 2 * self.outer > min(grid.box_length):
            raise ValueError("kernel support does not fit in the periodic box")
        axes = [np.fft.fftfreq(n, 1.0 / n) * h for n in grid.shape]
        y = np.meshgrid(*axes, indexing="ij", sparse=True)
        r2 = y[0] ** 2 + y[1] ** 2 + y[2] ** 2 + y[3] ** 2
        r2[(0,) * 4] = 1.0
        scale = self.cutoff(y) / (np.pi ** 2 * r2 ** 2) * h ** 4
        scale[(0,) * 4] = 0.0
        dz, _ = _symbols(grid)
        corr = -CELL_INTEGRAL * h ** 2 / (2 * np.pi ** 2)
        out = []
        for b in range(2):
            k = np.fft.fftn((y[2 * b] - 1j * y[2 * b + 1]) * scale)
            out.append(k + corr * dz[b])
        return out


@dataclass(eq=False)
class HomotopyOperator:
    """Homotopy pair ``(P, Q)`` with ``a = dbar P a + Q dbar a``.

    ``spectral``: Fourier solution on mean-zero torus data.
    ``bm_kernel``: kernel quadrature on a ball, with an extension handle.
    """

    backend: str
    domain: DefiningFunction | None = None
    extension: BallExtension | None = None
    kernel: BMKernel | None = None
    gain: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.backend == "spectral":
            if self.domain is not None and not self.domain.periodic:
                raise ValueError("spectral backend runs on the torus only")
        elif self.backend == "bm_kernel":
            if self.domain is None or self.domain.periodic:
                raise ValueError("kernel backend needs a bounded (non-periodic) domain")
            if self.extension is None:
                raise ValueError("kernel backend needs an extension handle")
            if self.kernel is None:
                self.kernel = _default_kernel(self.domain.rho, self.extension)
        else:
            raise ValueError(f"unknown homotopy backend {self.backend!r}")

    def kernel_symbols(self, grid: GridField) -> list:
        key = (grid.shape, grid.box_length)
        if key not in self._cache:
            if self.backend == "spectral":
                dz, dzb = _symbols(grid)
                lap = sum(a * b for a, b in zip(dz, dzb))
                lap = np.where(lap == 0, 1.0, lap)
                ks = [np.where(frequency_norm(grid.shape, grid.box_length) == 0, 0.0, d / lap) for d in dz]
            else:
                ks = self.kernel.symbols(grid)
            self._cache.clear()
            self._cache[key] = ks
        return self._cache[key]

    def P(self, a: Form01) -> GridField:
        """``P a = sum_b K_b * a_b``."""
        ks = self.kernel_symbols(a.grid)
        acc = 0.0
        for k, c in zip(ks, a.components):
            acc = acc + k * np.fft.fftn(c.values)
        return a.grid.like(np.fft.ifftn(acc))

    def Q(self, w: Form02) -> Form01:
        """``(Q w)_c = sum_b K_b * w_bc``."""
        g = next(iter(w.components.values()), w.grid)
        if g is None:
            raise ValueError("an empty (0,2)-form needs its grid")
        if not w.components:
            return Form01(tuple(g.like(np.zeros(g.shape, complex)) for _ in range(w.n)))
        ks = self.kernel_symbols(g)
        fw = {key: np.fft.fftn(v.values) for key, v in w.components.items()}
        out = []
        for c in range(w.n):
            acc = 0.0
            for b in range(w.n):
                if b == c:
                    continue
                coef = fw[(b, c)] if b < c else -fw[(c, b)]
                acc = acc + ks[b] * coef
            out.append(g.like(np.fft.ifftn(acc)))
        return Form01(tuple(out))


def _default_kernel(rho: GridField, ext: BallExtension) -> BMKernel:
    """Largest cutoff that keeps the far truncation away from the ball."""
    inner = ext.radius + ext.outer
    outer = min(rho.box_length) / 2
    if outer <= inner:
        raise ValueError(f"box {min(rho.box_length):.3g} too small for kernel inner radius {inner:.3g}")
    return BMKernel(inner, outer)


def homotopy_residual(H: HomotopyOperator, a: Form01, Pa: GridField | None = None) -> Form01:
    """``a - dbar P a - Q dbar a``."""
    Pa = H.P(a) if Pa is None else Pa
    return a - dbar_scalar(Pa) - H.Q(dbar_apply(a))


def component_means(a: Form01) -> np.ndarray:
    return np.array([c.values.mean() for c in a.components])


def homotopy_solve(H: HomotopyOperator, a: Form01, mean_tol: float = 1e-10):
    """Return ``(P a, report)`` for the spectral backend.

    Raises on data with a harmonic (constant) part; strip it first.
    """
    if H.backend != "spectral":
        raise ValueError("homotopy_solve is the torus path; use homotopy_bm on a ball")
    means = component_means(a)
    scale = max(a.sup(), 1.0)
    if np.abs(means).max() > mean_tol * scale:
        raise ValueError(f"form has nonzero mean {np.abs(means).max():.3e}; remove the harmonic part first")
    Pa = H.P(a)
    res = homotopy_residual(H, a, Pa)
    return Pa, {"residual": res.sup(), "mean": float(np.abs(means).max())}


def homotopy_bm(H: HomotopyOperator, sampler, shell_spacings: float = 3.0):
    """Kernel homotopy on the ball: ``P a = BM * (E a)``.

    ``sampler(points)`` returns the form coefficients ``(M, 2)`` at points
    of the closed ball.  The identity residual is measured on the interior
    shell ``{rho < -shell_spacings * h}``.  Returns ``(P a, report)``.
    """
    if H.backend != "bm_kernel":
        raise ValueError("homotopy_bm needs the kernel backend")
    grid = H.domain.rho
    ext, ker = H.extension, H.kernel
    h = grid.spacing[0]
    shell = grid.real < -shell_spacings * h
    reach = float(np.sqrt(np.max(np.sum(grid.points()[shell.ravel()] ** 2, axis=1)))) if shell.any() else 0.0
    if ker.inner < reach + ext.outer or ker.outer + reach + ext.outer > min(grid.box_length):
        raise ValueError(f"extension truncation budget exceeded: kernel inner radius {ker.inner:.3g} "
                         f"must exceed {reach + ext.outer:.3g} and the box must hold the kernel reach")
    if not shell.any():
        raise ValueError("interior shell is empty at this resolution")
    vals = ext(sampler, grid.points())
    a = Form01(tuple(grid.like(vals[:, b].reshape(grid.shape)) for b in range(vals.shape[1])))
    ks = H.kernel_symbols(grid)
    fa = [np.fft.fftn(c.values) for c in a.components]
    Pa = grid.like(np.fft.ifftn(ks[0] * fa[0] + ks[1] * fa[1]))
    del fa
    res = homotopy_residual(H, a, Pa)
    report = {"residual": res.sup(shell), "spacing": h, "shell_points": int(shell.sum()),
              "extension_sup": a.sup()}
    return Pa, report


def measure_gain(u: GridField, v: GridField, family=None, mask=None) -> float:
    """Fitted gain exponent of ``u -> v`` from dyadic level profiles.

    Returns minus the slope of ``log2(|lam_j * v| / |lam_j * u|)`` in j.
    """
    from .lp_core import default_family, max_resolved_level

    family = family or default_family()
    top = min(max_resolved_level(u), family.max_level)
    radius = frequency_norm(u.shape, u.box_length)
    fu, fv = np.fft.fftn(u.values), np.fft.fftn(v.values)
    levels, ratios = [], []
    for j in range(1, top + 1):
        sym = family.symbol(j, radius)
        pu = np.abs(np.fft.ifftn(fu * sym))
        pv = np.abs(np.fft.ifftn(fv * sym))
        if mask is not None:
            pu, pv = pu[mask], pv[mask]
        if pu.max() > 1e-13 and pv.max() > 1e-300:
            levels.append(j)
            ratios.append(pv.max() / pu.max())
    if len(levels) < 2:
        return float("nan")
    return float(-np.polyfit(levels, np.log2(ratios), 1)[0])
