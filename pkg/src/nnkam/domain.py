"""Model domains through defining functions.

A domain is ``{rho < 0}`` for a real grid function ``rho``.  This module
computes Levi forms on boundary samples, carries the affine charts and
cutoffs used to glue cone smoothing on graph domains, and monitors the C^2
drift of the chain of domains produced by the iteration.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import ndimage

from .errors import BudgetViolation
from .grid import GridField, box_field, cubic_eval, spectral_diff, trig_eval
from .lp_core import transition


class DefiningFunction:
    """Real defining function on an ambient box.

    Parameters
    ----------
    rho : GridField
        Real samples; the domain is where ``rho < 0``.
    periodic : bool
        Spectral derivatives and trigonometric interpolation when True,
        second-order differences and cubic interpolation otherwise.
    ambient_mask : array_like of bool, optional
        The neighbourhood U of the closed domain; defaults to the whole box.
    """

    def __init__(self, rho: GridField, periodic: bool = True, ambient_mask=None):
        if np.abs(rho.values.imag).max() > 1e-12 * max(1.0, np.abs(rho.values.real).max()):
            raise ValueError("defining function must be real")
        self.rho = rho.like(rho.values.real)
        self.periodic = periodic
        self.ambient_mask = None if ambient_mask is None else np.asarray(ambient_mask, dtype=bool)

    @property
    def dim(self) -> int:
        return self.rho.dim

    def _diff(self, values, axis):
        if self.periodic:
            return spectral_diff(values, self.rho.box_length, axis).real
        return np.gradient(values.real, self.rho.spacing[axis], axis=axis, edge_order=2)

    @cached_property
    def gradient(self) -> list:
        return [self._diff(self.rho.values, k) for k in range(self.dim)]

    @cached_property
    def hessian(self) -> np.ndarray:
        d = self.dim
        out = np.empty((d, d) + self.rho.shape)
        for i in range(d):
            for j in range(i, d):
                out[i, j] = out[j, i] = self._diff(self.gradient[i], j)
        return out

    def interpolate(self, values, points) -> np.ndarray:
        if self.periodic:
            return trig_eval(values, self.rho.box_length, self.rho.origin, points).real
        return cubic_eval(values, self.rho.box_length, self.rho.origin, points).real

    @property
    def interior(self) -> np.ndarray:
        return self.rho.values.real < 0


def c2_distance(a: DefiningFunction, b: DefiningFunction, mask=None) -> float:
    """``max_{|alpha| <= 2} sup |d^alpha (a - b)|`` over the mask."""
    diffs = [a.rho.values.real - b.rho.values.real]
    diffs += [ga - gb for ga, gb in zip(a.gradient, b.gradient)]
    d = a.dim
    diffs += [a.hessian[i, j] - b.hessian[i, j] for i in range(d) for j in range(i, d)]
    m = None if mask is None else np.asarray(mask, dtype=bool)
    return float(max(np.abs(x if m is None else x[m]).max() for x in diffs))


def boundary_samples(rho: DefiningFunction, newton_steps: int = 2) -> np.ndarray:
    """Points on ``{rho = 0}`` from sign-change grid edges plus Newton projection."""
    vals = rho.rho.values.real
    pts = []
    base = np.stack(np.meshgrid(*[rho.rho.coords(k) for k in range(rho.dim)], indexing="ij"), axis=-1)
    for ax in range(rho.dim):
        nxt = np.roll(vals, -1, axis=ax)
        change = np.sign(vals) * np.sign(nxt) < 0
        if not rho.periodic:
            edge = [slice(None)] * rho.dim
            edge[ax] = -1
            change[tuple(edge)] = False
        idx = np.nonzero(change)
        v0, v1 = vals[idx], nxt[idx]
        frac = v0 / (v0 - v1)
        p = base[idx].copy()
        p[:, ax] += frac * rho.rho.spacing[ax]
        pts.append(p)
    pts = np.concatenate(pts) if pts else np.zeros((0, rho.dim))
    if len(pts) == 0:
        return pts
    fields = np.stack([vals] + rho.gradient)
    for _ in range(newton_steps):
        ev = rho.interpolate(fields, pts)
        g2 = np.sum(ev[1:] ** 2, axis=0)
        bad = g2 < 1e-24
        if np.any(bad):
            raise ValueError(f"degenerate gradient at boundary sample {pts[np.argmax(bad)]}")
        pts = pts - (ev[0] / g2)[:, None] * ev[1:].T
    return pts


def complex_hessian_at(rho: DefiningFunction, points) -> tuple:
    """Complex gradient ``d rho / d z_j`` and Hessian ``d^2 rho / dz_j dzbar_k``."""
    d = rho.dim
    if d % 2:
        raise ValueError(f"ambient dimension {d} is odd; no complex structure")
    n = d // 2
    grads = rho.interpolate(np.stack(rho.gradient), points)
    hidx = [(i, j) for i in range(d) for j in range(i, d)]
    hvals = rho.interpolate(np.stack([rho.hessian[i, j] for i, j in hidx]), points)
    hess = np.empty((d, d, len(points)))
    for (i, j), v in zip(hidx, hvals):
        hess[i, j] = hess[j, i] = v
    dz = np.stack([0.5 * (grads[2 * j] - 1j * grads[2 * j + 1]) for j in range(n)], axis=-1)
    H = np.empty((len(points), n, n), dtype=complex)
    for j in range(n):
        for k in range(n):
            xj, yj, xk, yk = 2 * j, 2 * j + 1, 2 * k, 2 * k + 1
            H[:, j, k] = 0.25 * (hess[xj, xk] + hess[yj, yk] + 1j * (hess[xj, yk] - hess[yj, xk]))
    return dz, H, np.sqrt(np.sum(grads ** 2, axis=0))


def levi_eigenvalues(rho: DefiningFunction, points) -> np.ndarray:
    """Smallest eigenvalue of the Levi form on ``T^{1,0}`` at each point."""
    dz, H, gnorm = complex_hessian_at(rho, points)
    bad = gnorm < 1e-10
    if np.any(bad):
        raise ValueError(f"degenerate gradient at boundary sample {np.asarray(points)[np.argmax(bad)]}")
    n = dz.shape[1]
    if n == 1:
        return np.full(len(points), np.inf)
    # null space of the row vector dz: trailing right singular vectors
    _, _, vh = np.linalg.svd(dz[:, None, :])
    W = np.conj(np.transpose(vh[:, 1:, :], (0, 2, 1)))
    R = np.einsum("pja,pjk,pkb->pab", W, H, np.conj(W))
    return np.linalg.eigvalsh(R)[:, 0]


def levi_min(rho: DefiningFunction, neighborhood: bool = False, shell: float = 5.0) -> float:
    """Minimum Levi eigenvalue over boundary samples.

    With ``neighborhood=True`` the minimum is taken over grid points of the
    shell ``|rho| < shell * spacing`` instead, using the level set through
    each point.
    """
    if neighborhood:
        m = np.abs(rho.rho.values.real) < shell * min(rho.rho.spacing)
        points = rho.rho.points()[m.ravel()]
    else:
        points = boundary_samples(rho)
    if len(points) == 0:
        raise ValueError("defining function has no boundary samples on this grid")
    return float(np.min(levi_eigenvalues(rho, points)))


def update_defining(rho: DefiningFunction, displacement, reference: DefiningFunction | None = None):
    """Return ``rho o G`` for ``G = I + g`` sampled on the grid.

    ``displacement`` is a Diffeo (its inverse displacement is used) or a
    sequence of real displacement fields.  When ``reference`` is given the
    C^2 distance to it over the ambient mask is recorded on the result.
    """
    g = getattr(displacement, "inverse_displacement", displacement)
    g = [np.asarray(c.values.real if isinstance(c, GridField) else c) for c in g]
    pts = rho.rho.points() + np.stack([c.ravel() for c in g], axis=1)
    if not rho.periodic:
        lo = np.array(rho.rho.origin)
        hi = lo + np.array(rho.rho.box_length) - np.array(rho.rho.spacing)
        outside = np.any((pts < lo - 1e-12) | (pts > hi + 1e-12), axis=1)
        if np.any(outside):
            raise ValueError(f"interpolation out of box at {pts[np.argmax(outside)]}")
    new_vals = rho.interpolate(rho.rho.values.real, pts).reshape(rho.rho.shape)
    out = DefiningFunction(rho.rho.like(new_vals), rho.periodic, rho.ambient_mask)
    if reference is not None:
        out.c2_drift = c2_distance(out, reference, reference.ambient_mask)
    return out


@dataclass(frozen=True)
class StabilityBudget:
    eps_D: float
    delta_rho0: float
    levi_floor: float
    levi_sensitivity: float = 1.0
    composition_constant: float = 1.0
    boundary_floor: float = 0.0

    def __post_init__(self):
        for name in ("eps_D", "delta_rho0", "levi_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"budget entry {name} must be positive, got {getattr(self, name)}")


def compute_budget(rho0: DefiningFunction, levi_sensitivity: float, composition_constant: float,
                   fraction: float = 0.1) -> StabilityBudget:
    """Budget with ``eps = fraction * levi_floor / C_levi``.

    ``delta`` follows from summing the per-step bound: the drift after any
    number of steps is at most ``C_rho * delta * pi^2 / 6``, so
    ``delta = 6 eps / (pi^2 C_rho)`` keeps it below ``eps``.
    """
    floor = levi_min(rho0)
    eps = fraction * floor / levi_sensitivity
    delta = 6 * eps / (np.pi ** 2 * composition_constant)
    return StabilityBudget(eps, delta, floor, levi_sensitivity, composition_constant,
                           boundary_distance(rho0))


def boundary_distance(rho: DefiningFunction) -> float:
    """Distance from the domain to the edge of the ambient neighbourhood."""
    if rho.ambient_mask is None:
        return np.inf
    dist = ndimage.distance_transform_edt(rho.ambient_mask, sampling=rho.rho.spacing)
    inside = rho.interior
    return float(dist[inside].min()) if inside.any() else np.inf


@dataclass
class ChainReport:
    rows: list = field(default_factory=list)
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def check_chain_stability(chain, budget: StabilityBudget, f_norms, raise_on_failure: bool = False,
                          levi_values=None) -> ChainReport:
    """Check the per-step map budget and the cumulative domain drift.

    ``chain[0]`` is the initial defining function; ``f_norms[j]`` is the C^2
    norm of the j-th map.  The Levi floor may drop by at most
    ``levi_sensitivity * eps``.
    """
    report = ChainReport()
    if not chain:
        return report
    rho0 = chain[0]
    levi_bound = budget.levi_floor - budget.levi_sensitivity * budget.eps_D
    dist_bound = budget.boundary_floor - budget.composition_constant * budget.eps_D
    for j, rho in enumerate(chain):
        fnorm = f_norms[j] if j < len(f_norms) else 0.0
        fbound = budget.delta_rho0 / (j + 1) ** 2
        drift = c2_distance(rho, rho0, rho0.ambient_mask)
        levi = levi_values[j] if levi_values is not None else levi_min(rho)
        dist = boundary_distance(rho)
        report.rows.append({"step": j, "f_norm": fnorm, "f_bound": fbound, "rho_drift": drift,
                            "levi_min": levi, "dist_to_boundary": dist})
        for quantity, value, bound, ok in (
                ("f_C2_norm", fnorm, fbound, fnorm <= fbound),
                ("rho_C2_drift", drift, budget.eps_D, drift <= budget.eps_D),
                ("levi_min", levi, levi_bound, levi >= levi_bound),
                ("dist_to_boundary", dist, dist_bound, not np.isfinite(dist_bound) or dist >= dist_bound)):
            if not ok:
                report.violations.append((j, quantity, value, bound))
                if raise_on_failure:
                    raise BudgetViolation(j, quantity, value, bound)
    return report


# ----------------------------------------------------------------------------
# model domains


def periodic_ball(shape, box_length, radius: float, weights=None) -> DefiningFunction:
    """Ball-like domain on the torus: ``sum_k w_k (1 - cos 2pi(x_k - c_k)/L_k)/(2 pi^2/L_k^2) - R^2``.

    Near the centre the defining function is ``sum w_k (x_k - c_k)^2 - R^2``.
    The ambient neighbourhood is the set where the function stays below
    ``3 R^2``.
    """
    box = tuple(float(b) for b in box_length)
    w = np.ones(len(shape)) if weights is None else np.asarray(weights, dtype=float)

    def f(*xs):
        out = -radius ** 2
        for k, x in enumerate(xs):
            L = box[k]
            out = out + w[k] * (1 - np.cos(2 * np.pi * (x - L / 2) / L)) * L ** 2 / (2 * np.pi ** 2)
        return out

    rho = box_field(f, shape, box)
    return DefiningFunction(rho, True, rho.values.real < 3 * radius ** 2)


def ellipsoid(shape, box_length, weights, periodic=False) -> DefiningFunction:
    """``sum_j w_j |z_j|^2 - 1`` on a box centred at the origin."""
    origin = tuple(-b / 2 for b in box_length)

    def f(*xs):
        out = -1.0
        for j, w in enumerate(weights):
            out = out + w * (xs[2 * j] ** 2 + xs[2 * j + 1] ** 2)
        return out

    return DefiningFunction(box_field(f, shape, box_length, origin), periodic)


@dataclass(frozen=True, eq=False)
class Chart:
    """Affine chart ``x -> matrix @ x + offset`` onto a graph domain.

    In chart coordinates the piece is ``{y_d > graph(y')}`` with
    ``|grad graph| < 1``.
    """

    matrix: np.ndarray
    offset: np.ndarray
    graph_gradient_sup: float
    cutoff: GridField


@dataclass(frozen=True, eq=False)
class DomainChart:
    """Charts, cutoffs and masks of a domain glued from graph pieces.

    ``closure_mask`` marks the grid points of the closed domain, where the
    partition ``chi_0 + sum chi_nu^2 = 1`` must hold.
    """

    charts: tuple
    interior_cutoff: GridField
    domain_mask: np.ndarray
    closure_mask: np.ndarray

    def partition_defect(self) -> float:
        total = self.interior_cutoff.values.real + sum(c.cutoff.values.real ** 2 for c in self.charts)
        return float(np.abs(total - 1)[self.closure_mask].max())


def strip_domain(shape, box_length, bottom: float, top: float, amplitude: float, band: float):
    """Graph strip ``{b(x1) < x2 < t(x1)}`` on a periodic 2-D box.

    ``b = bottom + amplitude sin(2 pi x1 / L1)``, ``t = top + amplitude cos(2 pi x1 / L1)``.
    Each boundary carries a chart (identity below, reflection above) and a
    cutoff equal to 1 within ``band`` of the boundary in x2 and 0 beyond
    ``2 band``.  The interior cutoff is ``1 - sum chi^2`` inside the strip.

    Returns
    -------
    (DefiningFunction, DomainChart)
    """
    L1, L2 = box_length
    k = 2 * np.pi / L1
    slope = amplitude * k
    if slope >= 1:
        raise ValueError(f"graph slope {slope:.3g} violates the cone condition")
    if top - bottom < 4 * band + 2 * amplitude + 1e-12:
        raise ValueError("strip too thin for the cutoff bands")
    grid = GridField(np.zeros(shape), box_length)
    x1, x2 = grid.mesh()
    lower = bottom + amplitude * np.sin(k * x1)
    upper = top + amplitude * np.cos(k * x1)
    dist_lo = x2 - lower
    dist_hi = upper - x2

    def cut(t):
        return transition((np.abs(t) - band) / band)

    chi_lo = cut(dist_lo) * np.ones(shape)
    chi_hi = cut(dist_hi) * np.ones(shape)
    inside = (dist_lo > 0) & (dist_hi > 0)
    # 1 - sum chi^2 vanishes on both bands, so cutting it off at the
    # boundary keeps chi_0 smooth and supported inside the strip
    chi0 = np.where(inside, 1 - chi_lo ** 2 - chi_hi ** 2, 0.0)
    rho = np.maximum(-dist_lo, -dist_hi) * np.ones(shape)
    charts = (Chart(np.eye(2), np.zeros(2), slope, grid.like(chi_lo)),
              Chart(np.diag([1.0, -1.0]), np.zeros(2), slope, grid.like(chi_hi)))
    closed = (dist_lo >= 0) & (dist_hi >= 0)
    chart = DomainChart(charts, grid.like(chi0), inside, closed)
    return DefiningFunction(grid.like(rho), True), chart
