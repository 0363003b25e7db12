"""Hölder-Zygmund norms, estimated two independent ways.

``difference`` works from the definition: first differences for
0 < s < 1, midpoint second differences at s = 1, and recursion on the
gradient above 1.  ``besov`` takes the supremum of weighted dyadic pieces.
Both include the sup-norm term, so either value bounds ``sup |u|``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import GridField, displaced_eval, spectral_diff
from .lp_core import LPFamily, default_family, max_resolved_level


@dataclass(frozen=True)
class HolderZygmundIndex:
    s: float

    def __post_init__(self):
        if not np.isfinite(self.s) or self.s <= 0:
            raise ValueError(f"Hölder-Zygmund index must be positive, got {self.s}")

    @property
    def is_integer(self) -> bool:
        return float(self.s).is_integer()


@dataclass(frozen=True)
class NormEstimate:
    value: float
    backend: str
    levels_used: tuple
    resolution: tuple
    profile: np.ndarray = field(default=None, repr=False)


def _index(s) -> HolderZygmundIndex:
    return s if isinstance(s, HolderZygmundIndex) else HolderZygmundIndex(float(s))


def _mask_array(u: GridField, mask):
    if mask is None:
        return None
    m = np.asarray(mask.real if isinstance(mask, GridField) else mask).astype(bool)
    if m.shape != u.shape:
        raise ValueError(f"mask shape {m.shape} does not match field shape {u.shape}")
    if not m.any():
        raise ValueError("domain mask is empty")
    return m


def _shift(values, axis, step, mask):
    """``values[x + step e_axis]`` with a validity mask (no wrap when masked)."""
    shifted = np.roll(values, -step, axis=axis)
    if mask is None:
        return shifted, None
    n = values.shape[axis]
    idx = np.arange(n)
    nowrap = (idx + step < n) & (idx + step >= 0)
    shape = [1] * values.ndim
    shape[axis] = n
    valid = np.roll(mask, -step, axis=axis) & nowrap.reshape(shape)
    return shifted, valid


def _offsets(u: GridField, axis: int, lo_factor: float, mode: str = "dyadic"):
    """Integer steps along one axis.

    ``dyadic``: powers of two m with ``m h lo_factor`` in ``[2h, L/4]``;
    ``all``: every m with ``m lo_factor <= n/2`` (exhaustive on the torus).
    """
    if mode == "all":
        return list(range(1, int(u.shape[axis] // (2 * lo_factor)) + 1))
    if mode != "dyadic":
        raise ValueError(f"unknown offset mode {mode!r}")
    h = u.spacing[axis]
    top = u.box_length[axis] / 4
    steps, m = [], 1
    while m * h * lo_factor <= top + 1e-12 * top:
        if m * h * lo_factor >= 2 * h - 1e-12 * h:
            steps.append(m)
        m *= 2
    return steps


def _seminorm_fraction(u: GridField, s: float, mask, mode: str) -> tuple:
    """sup |u(x+h) - u(x)| / |h|^s over axis-aligned offsets."""
    vals = u.values
    best, used = 0.0, []
    for ax in range(u.dim):
        for m in _offsets(u, ax, 1.0, mode):
            shifted, valid = _shift(vals, ax, m, mask)
            diff = np.abs(shifted - vals)
            if mask is not None:
                ok = valid & mask
                if not ok.any():
                    continue
                diff = diff[ok]
            best = max(best, float(diff.max()) / (m * u.spacing[ax]) ** s)
            used.append(m)
    return best, used


def _seminorm_zygmund(u: GridField, mask, mode: str) -> tuple:
    """sup |u(x) + u(x+2h) - 2u(x+h)| / |2h| over axis-aligned offsets."""
    vals = u.values
    best, used = 0.0, []
    for ax in range(u.dim):
        for m in _offsets(u, ax, 2.0, mode):
            mid, vmid = _shift(vals, ax, m, mask)
            far, vfar = _shift(vals, ax, 2 * m, mask)
            second = np.abs(vals + far - 2 * mid)
            if mask is not None:
                ok = mask & vmid & vfar
                if not ok.any():
                    continue
                second = second[ok]
            best = max(best, float(second.max()) / (2 * m * u.spacing[ax]))
            used.append(m)
    return best, used


def zygmund_norm_diff(u: GridField, s, domain_mask=None, offsets: str = "dyadic") -> NormEstimate:
    """Difference-quotient estimate of ``|u|_s`` on the grid or a masked domain.

    By default offsets are axis-aligned powers of two times the spacing
    with ``|x - y|`` in ``[2 h, L/4]``; ``offsets="all"`` scans every grid
    offset up to half the box.  Derivatives for s > 1 are spectral.
    """
    idx = _index(s)
    mask = _mask_array(u, domain_mask)
    value, used = _diff_recursive(u, idx.s, mask, offsets)
    levels = (min(used), max(used)) if used else (0, 0)
    return NormEstimate(value, "difference", levels, u.shape)


def _diff_recursive(u: GridField, s: float, mask, mode: str = "dyadic"):
    if s > 1:
        value, used = _diff_recursive(u, s - 1, mask, mode)
        for ax in range(u.dim):
            du = u.like(spectral_diff(u.values, u.box_length, ax))
            v, more = _diff_recursive(du, s - 1, mask, mode)
            value += v
            used += more
        return value, used
    sup = float(np.abs(u.values if mask is None else u.values[mask]).max())
    if float(s).is_integer():
        semi, used = _seminorm_zygmund(u, mask, mode)
    else:
        semi, used = _seminorm_fraction(u, s, mask, mode)
    if mask is not None and not used:
        raise ValueError("domain mask has empty interior at the smallest admissible offset")
    return sup + semi, used


def zygmund_norm_besov(u: GridField, s, family: LPFamily | None = None, domain_mask=None,
                       max_level: int | None = None) -> NormEstimate:
    """``max(sup|u|, sup_j 2^(js) ||lam_j * u||_inf)`` over resolved levels.

    The sup restricts to masked samples when a mask is given.
    """
    idx = _index(s)
    family = family or default_family()
    mask = _mask_array(u, domain_mask)
    top = min(family.max_level, max_resolved_level(u))
    if max_level is not None:
        top = min(top, max_level)
    if top < 0:
        raise ValueError(f"grid {u.shape} resolves no dyadic level")
    fu = np.fft.fftn(u.values)
    from .grid import frequency_norm
    radius = frequency_norm(u.shape, u.box_length)
    profile = np.empty(top + 1)
    for j in range(top + 1):
        piece = np.fft.ifftn(fu * family.symbol(j, radius))
        piece = np.abs(piece if mask is None else piece[mask])
        profile[j] = 2.0 ** (j * idx.s) * float(piece.max())
    sup = float(np.abs(u.values if mask is None else u.values[mask]).max())
    return NormEstimate(max(sup, float(profile.max())), "besov", (0, top), u.shape, profile)


def zygmund_norm(u: GridField, s, backend: str = "besov", **kwargs) -> float:
    if backend == "besov":
        return zygmund_norm_besov(u, s, **kwargs).value
    if backend == "difference":
        return zygmund_norm_diff(u, s, kwargs.get("domain_mask")).value
    raise ValueError(f"unknown norm backend {backend!r}")


def sup_norm(u: GridField, mask=None) -> float:
    return u.sup(mask)


def check_convexity(u: GridField, a: float, b: float, theta: float, backend: str = "difference",
                    **kwargs) -> dict:
    """Compare ``|u|_((1-theta)a + theta b)`` with ``|u|_a^(1-theta) |u|_b^theta``."""
    if not 0 <= theta <= 1:
        raise ValueError("theta must lie in [0, 1]")
    if a <= 0 or b <= 0:
        raise ValueError("indices must be positive")
    mid = zygmund_norm(u, (1 - theta) * a + theta * b, backend, **kwargs)
    na = zygmund_norm(u, a, backend, **kwargs)
    nb = na if b == a else zygmund_norm(u, b, backend, **kwargs)
    rhs = na ** (1 - theta) * nb ** theta
    return {"lhs": mid, "rhs": rhs, "ratio": mid / rhs if rhs > 0 else 0.0}


def map_norm(f_components, index: float, backend: str = "besov", **kwargs) -> float:
    """Norm of a map ``I + f``: the identity contributes exactly 1.

    ``f_components`` is a sequence of real displacement fields.
    """
    return 1.0 + max(zygmund_norm(c, index, backend, **kwargs) for c in f_components)


def compose(u: GridField, displacement) -> GridField:
    """``u(x + f(x))`` by trigonometric interpolation on a periodic grid."""
    disp = np.stack([np.asarray(c.real if isinstance(c, GridField) else c).reshape(u.shape)
                     for c in displacement])
    return u.like(displaced_eval(u.values, u.box_length, u.origin, disp))


def check_product_chain(u: GridField, v: GridField, phi, a: float, eps: float = 0.1,
                        backend: str = "besov", **kwargs) -> dict:
    """Evaluate both sides of the product and chain-rule inequalities.

    ``phi`` is a map ``I + f`` given either as a Diffeo-like object with a
    ``displacement`` attribute or as a sequence of displacement fields.
    Unknown constants are set to one; the reported ratios are lhs / rhs.
    """
    u.check_compatible(v)
    disp = getattr(phi, "displacement", phi)
    disp = [c if isinstance(c, GridField) else u.like(c) for c in disp]
    norm = lambda w, s: zygmund_norm(w, s, backend, **kwargs)
    lhs = norm(u * v, a)
    rhs = norm(u, a) * norm(v, eps) + norm(u, eps) * norm(v, a)
    report = {"product_lhs": lhs, "product_rhs": rhs, "product_ratio": lhs / rhs if rhs else 0.0}
    comp = compose(u, disp)
    clhs = norm(comp, a)
    if a < 1:
        crhs = norm(u, a) * map_norm(disp, 1.0, backend, **kwargs) ** a
    else:
        m1 = map_norm(disp, 1 + eps, backend, **kwargs)
        crhs = (norm(u, a) * m1 ** ((1 + 2 * eps) / (1 + eps))
                + norm(u, 1 + eps) * map_norm(disp, a, backend, **kwargs) + sup_norm(u))
    report.update(chain_lhs=clhs, chain_rhs=crhs, chain_ratio=clhs / crhs if crhs else 0.0)
    return report
