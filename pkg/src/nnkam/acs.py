"""Almost complex structures ``X_abar = d/dzbar_a + A^b_abar d/dz_b``.

A structure is stored as an array ``A`` of shape ``(n, n, *grid)`` with
``A[a, b] = A^b_abar``: rows carry the anti-holomorphic index, columns the
value index.  Column ``b`` is the (0,1)-form ``A^b = sum_a A^b_abar dzbar_a``.

Maps ``F = I + f`` are given by complex components ``f_b``; the real
displacement is ``(Re f_1, Im f_1, ..., Re f_n, Im f_n)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .dbar import Form01, Form02, HomotopyOperator
from .errors import InversionAbort
from .grid import GridField, complex_symbols, cubic_eval, displaced_eval, spectral_diff
from .znorm import zygmund_norm

EPS_NORM = 0.1


def _grid_axes(arr: np.ndarray, d: int) -> tuple:
    return tuple(range(arr.ndim - d, arr.ndim))


def _pointwise(A: np.ndarray) -> np.ndarray:
    """``(n, n, *grid)`` -> ``(*grid, n, n)``."""
    return np.moveaxis(A, (0, 1), (-2, -1))


def _fieldwise(M: np.ndarray) -> np.ndarray:
    return np.moveaxis(M, (-2, -1), (0, 1))


def matmul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.einsum("ab...,bc...->ac...", A, B)


def pointwise_solve(B: np.ndarray, C: np.ndarray) -> np.ndarray:
    """``B^-1 C`` per grid point; the adjugate formula for n = 2."""
    n = B.shape[0]
    if n == 1:
        return C / B
    if n == 2:
        det = B[0, 0] * B[1, 1] - B[0, 1] * B[1, 0]
        adj = np.array([[B[1, 1], -B[0, 1]], [-B[1, 0], B[0, 0]]])
        return matmul(adj, C) / det
    return _fieldwise(np.linalg.solve(_pointwise(B), _pointwise(C)))


def min_singular_value(B: np.ndarray) -> float:
    return float(np.linalg.svd(_pointwise(B), compute_uv=False)[..., -1].min())


def max_operator_norm(A: np.ndarray) -> float:
    return float(np.linalg.svd(_pointwise(A), compute_uv=False)[..., 0].max())


@dataclass(frozen=True, eq=False)
class ACS:
    A: np.ndarray
    grid: GridField
    periodic: bool = True

    def __post_init__(self):
        A = np.asarray(self.A, dtype=complex)
        n = A.shape[0]
        if A.ndim != 2 + self.grid.dim or A.shape[:2] != (n, n) or A.shape[2:] != self.grid.shape:
            raise ValueError(f"structure array {A.shape} does not match an {n}x{n} field on {self.grid.shape}")
        if self.grid.dim != 2 * n:
            raise ValueError(f"n = {n} needs a {2 * n}-D grid")
        if not np.isfinite(A).all():
            raise ValueError("structure has non-finite entries")
        norm = max_operator_norm(A)
        if norm >= 1:
            raise ValueError(f"sup |A| = {norm:.3g} >= 1: vector fields degenerate")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @classmethod
    def zero(cls, grid: GridField, periodic: bool = True) -> "ACS":
        n = grid.dim // 2
        return cls(np.zeros((n, n) + grid.shape, complex), grid, periodic)

    def entry(self, a: int, b: int) -> GridField:
        return self.grid.like(self.A[a, b])

    def form(self, b: int) -> Form01:
        return Form01(tuple(self.entry(a, b) for a in range(self.n)))

    def mean(self) -> np.ndarray:
        return self.A.mean(axis=_grid_axes(self.A, self.grid.dim))

    def norm(self, s: float, backend: str = "besov", **kwargs) -> float:
        return max(zygmund_norm(self.entry(a, b), s, backend, **kwargs)
                   for a in range(self.n) for b in range(self.n))

    def sup(self) -> float:
        return float(np.abs(self.A).max())


def _complex_derivs(arr: np.ndarray, grid: GridField):
    """``d/dz_a`` and ``d/dzbar_a`` of fields with leading batch axes."""
    dz, dzb = complex_symbols(grid.shape, grid.box_length)
    axes = _grid_axes(arr, grid.dim)
    fa = np.fft.fftn(arr, axes=axes)
    D = np.stack([np.fft.ifftn(fa * s, axes=axes) for s in dz])
    Db = np.stack([np.fft.ifftn(fa * s, axes=axes) for s in dzb])
    return D, Db


def integrability_residual(X: ACS):
    """``N^m_bc = d_bbar A^m_cbar - d_cbar A^m_bbar - (A^e_cbar d_e A^m_bbar - A^e_bbar d_e A^m_cbar)``.

    Returns ``(forms, sup)`` with one Form02 per value index m.
    """
    D, Db = _complex_derivs(X.A, X.grid)  # D[e, a, m] = d_e A[a, m]
    forms = []
    for m in range(X.n):
        comps = {}
        for b, c in itertools.combinations(range(X.n), 2):
            lin = Db[b, c, m] - Db[c, b, m]
            quad = sum(X.A[c, e] * D[e, b, m] - X.A[b, e] * D[e, c, m] for e in range(X.n))
            comps[(b, c)] = X.grid.like(lin - quad)
        forms.append(Form02(comps, X.n, X.grid))
    sup = max((f.sup() for f in forms), default=0.0)
    return forms, sup


# ----------------------------------------------------------------------------
# maps


def real_displacement(f) -> list:
    out = []
    for c in f:
        out += [c.like(c.values.real), c.like(c.values.imag)]
    return out


def complex_components(disp) -> tuple:
    return tuple(disp[2 * k].like(disp[2 * k].values.real + 1j * disp[2 * k + 1].values.real)
                 for k in range(len(disp) // 2))


def jacobian(disp, periodic: bool = True) -> np.ndarray:
    """Real Jacobian ``(*grid, d, d)`` of a displacement list."""
    g = disp[0]
    rows = []
    for c in disp:
        v = c.values.real
        if periodic:
            rows.append([spectral_diff(v, g.box_length, k).real for k in range(g.dim)])
        else:
            rows.append(np.gradient(v, *g.spacing, edge_order=2))
    return np.moveaxis(np.array(rows), (0, 1), (-2, -1))


def jacobian_norm(disp, periodic: bool = True) -> float:
    """``sup_x |Df(x)|`` in the operator 2-norm."""
    return float(np.linalg.svd(jacobian(disp, periodic), compute_uv=False)[..., 0].max())


def evaluate(fields: np.ndarray, grid: GridField, displacement: np.ndarray, periodic: bool) -> np.ndarray:
    """Interpolate stacked fields ``(k, *grid)`` at the moved grid points ``x + displacement(x)``."""
    if periodic:
        return displaced_eval(fields, grid.box_length, grid.origin, displacement)
    pts = grid.points() + displacement.reshape(displacement.shape[0], -1).T
    return cubic_eval(fields, grid.box_length, grid.origin, pts).reshape(fields.shape)


def _compose_disp(outer: np.ndarray, inner: np.ndarray, grid: GridField, periodic: bool) -> np.ndarray:
    """Displacement of ``(I + outer) o (I + inner)``."""
    return inner + evaluate(outer, grid, inner, periodic).real


@dataclass(frozen=True, eq=False)
class Diffeo:
    """``F = I + f`` with cached inverse ``G = I + g``."""

    f: tuple
    g: tuple
    theta: float
    periodic: bool = True
    inversion_error: float = 0.0
    forward_error: float = 0.0
    dg_norm: float = 0.0
    sweeps: int = 0

    @property
    def grid(self) -> GridField:
        return self.f[0]

    @property
    def displacement(self) -> list:
        return real_displacement(self.f)

    @property
    def inverse_displacement(self) -> list:
        return real_displacement(self.g)

    @property
    def is_identity(self) -> bool:
        return all(not np.any(c.values) for c in self.f)

    @classmethod
    def identity(cls, grid: GridField, periodic: bool = True) -> "Diffeo":
        zero = tuple(grid.like(np.zeros(grid.shape)) for _ in range(grid.dim // 2))
        return cls(zero, zero, 0.0, periodic)


def invert_map(f, tol: float = 1e-12, periodic: bool = True, max_sweeps: int = 200) -> Diffeo:
    """Fixed-point inverse ``g <- -f o (I + g)`` of ``F = I + f``.

    ``f`` is a sequence of complex components.  Requires ``|Df|_0 < 1/2``.
    """
    f = tuple(f)
    grid = f[0]
    disp = np.array([c.values.real for c in real_displacement(f)])
    theta = jacobian_norm(real_displacement(f), periodic)
    if theta >= 0.5:
        raise ValueError(f"|Df|_0 = {theta:.4g} >= 1/2 violates the inversion contract")
    if not disp.any():
        return Diffeo.identity(grid, periodic)
    g = -disp
    for sweep in range(1, max_sweeps + 1):
        new = -(_compose_disp(disp, g, grid, periodic) - g)
        change = float(np.abs(new - g).max())
        g = new
        if change < tol:
            break
    else:
        raise InversionAbort(sweep, "fixed-point change", change, tol)
    gf = _compose_disp(g, disp, grid, periodic)      # displacement of G o F
    fg = _compose_disp(disp, g, grid, periodic)      # displacement of F o G
    g_fields = complex_components([grid.like(v) for v in g])
    dg = jacobian_norm([grid.like(v) for v in g], periodic)
    return Diffeo(f, g_fields, theta, periodic, float(np.abs(gf).max()), float(np.abs(fg).max()), dg, sweep)


def compose(F2: Diffeo | np.ndarray, F1: np.ndarray, grid: GridField, periodic: bool = True) -> np.ndarray:
    """Displacement of ``F2 o F1`` from stacked real displacements."""
    outer = np.array([c.values.real for c in F2.displacement]) if isinstance(F2, Diffeo) else F2
    return _compose_disp(outer, F1, grid, periodic)


# ----------------------------------------------------------------------------
# pushforward


def _map_derivatives(F: Diffeo):
    f = np.array([c.values for c in F.f])
    D, Db = _complex_derivs(f, F.grid)  # D[a, c] = d_a f_c
    return D, Db


@dataclass
class PushforwardTerms:
    """``A + dbar f + A d f = I0 + I1 + I2 + I3 + I4`` for ``f = -S_t P(A - mean A)``."""

    K: np.ndarray
    I0: np.ndarray
    I1: np.ndarray
    I2: np.ndarray
    I3: np.ndarray
    I4: np.ndarray
    norms: dict = field(default_factory=dict)
    recombination_error: float = float("nan")

    def total(self) -> np.ndarray:
        return self.I0 + self.I1 + self.I2 + self.I3 + self.I4


@dataclass
class Pushforward:
    structure: ACS
    composed: np.ndarray          # A' o F on the source grid
    min_singular: float
    terms: PushforwardTerms | None = None


def pushforward(X: ACS, F: Diffeo, terms: PushforwardTerms | None = None,
                singular_floor: float = 0.1) -> Pushforward:
    """``A' o F = (I + conj(df) + A conj(dbar f))^-1 (A + dbar f + A df)``, then ``A' = (A' o F) o G``."""
    if F.is_identity:
        return Pushforward(X, X.A.copy(), 1.0, terms)
    D, Db = _map_derivatives(F)
    n = X.n
    eye = np.eye(n).reshape((n, n) + (1,) * X.grid.dim)
    K = np.conj(D) + matmul(X.A, np.conj(Db))
    B = eye + K
    smin = min_singular_value(B)
    if smin <= singular_floor:
        raise ValueError(f"I + K is near-singular: min singular value {smin:.3g} <= {singular_floor}")
    C = X.A + Db + matmul(X.A, D)
    composed = pointwise_solve(B, C)
    if terms is not None:
        terms.K = K
        terms.recombination_error = float(np.abs(pointwise_solve(B, terms.total()) - composed).max())
    g = np.array([c.values.real for c in F.inverse_displacement])
    flat = composed.reshape((n * n,) + X.grid.shape)
    moved = evaluate(flat, X.grid, g, X.periodic).reshape(composed.shape)
    return Pushforward(ACS(moved, X.grid, X.periodic), composed, smin, terms)


def kam_map(X: ACS, level, smoother, H: HomotopyOperator):
    """``f = -S_t P(A - mean A)`` per value index with the term decomposition.

    Returns ``(f components, PushforwardTerms)``; the mean is the harmonic
    part that the torus homotopy cannot invert.
    """
    from .dbar import dbar_apply, dbar_scalar
    from .smooth import smooth_apply

    n, grid = X.n, X.grid
    mean = X.mean()
    fcomps, I1, I2, I3 = [], np.zeros_like(X.A), np.zeros_like(X.A), np.zeros_like(X.A)
    for b in range(n):
        centred = Form01(tuple(grid.like(X.A[a, b] - mean[a, b]) for a in range(n)))
        Pu = H.P(centred)
        SPu = smooth_apply(smoother, level, Pu)
        fcomps.append(SPu.like(-SPu.values))
        Qd = H.Q(dbar_apply(centred))
        dP = dbar_scalar(Pu)
        dSP = dbar_scalar(SPu)
        for a in range(n):
            I1[a, b] = X.A[a, b] - smooth_apply(smoother, level, X.entry(a, b)).values
            I2[a, b] = smooth_apply(smoother, level, Qd.components[a]).values
            I3[a, b] = smooth_apply(smoother, level, dP.components[a]).values - dSP.components[a].values
    I0 = np.broadcast_to(mean.reshape((n, n) + (1,) * grid.dim), X.A.shape).copy()
    f = np.array([c.values for c in fcomps])
    D, _ = _complex_derivs(f, grid)
    I4 = matmul(X.A, D)
    terms = PushforwardTerms(np.zeros_like(X.A), I0, I1, I2, I3, I4)
    return tuple(fcomps), terms


def term_norms(terms: PushforwardTerms, grid: GridField, s: float) -> dict:
    out = {}
    for name in ("I0", "I1", "I2", "I3", "I4", "K"):
        arr = getattr(terms, name)
        n = arr.shape[0]
        for idx, key in ((s, "s"), (EPS_NORM, "eps")):
            out[f"{name}_{key}"] = max(zygmund_norm(grid.like(arr[a, b]), idx)
                                       for a in range(n) for b in range(n))
    terms.norms = out
    return out


# ----------------------------------------------------------------------------
# linear normalisation


def _linear_transform(X: ACS, m: np.ndarray) -> np.ndarray:
    """``A' o T`` for ``T(z) = z - zbar m``: ``(I - A conj(m))^-1 (A - m)``."""
    n = X.n
    mm = m.reshape((n, n) + (1,) * X.grid.dim)
    eye = np.eye(n).reshape((n, n) + (1,) * X.grid.dim)
    B = eye - matmul(X.A, np.broadcast_to(np.conj(mm), X.A.shape))
    return pointwise_solve(B, X.A - mm)


def real_linear_map(m: np.ndarray) -> np.ndarray:
    """Real ``2n x 2n`` matrix of ``w_b = z_b - sum_a m[a, b] zbar_a``."""
    n = m.shape[0]
    T = np.eye(2 * n)
    for a in range(n):
        for b in range(n):
            c = -m[a, b]
            # c * (x_a - i y_a) contributes to Re w_b and Im w_b
            T[2 * b, 2 * a] += c.real
            T[2 * b, 2 * a + 1] += c.imag
            T[2 * b + 1, 2 * a] += c.imag
            T[2 * b + 1, 2 * a + 1] += -c.real
    return T


def linear_normalize(X: ACS, base_point=None, tol: float = 1e-13, max_iter: int = 100):
    """Straighten ``A`` at a point (or its torus mean) by ``w = z - zbar m``.

    Returns ``(structure, T)`` where the structure is ``A' o T`` sampled on
    the source grid and ``T`` is the real matrix of the linear map.
    ``base_point`` is a grid index tuple; ``None`` on the torus normalises
    the mean, by iterating ``m <- m + mean(A' o T)``.
    """
    if base_point is not None:
        m = X.A[(slice(None), slice(None)) + tuple(base_point)]
        if np.linalg.norm(m, 2) >= 1:
            raise ValueError(f"|A(p)| = {np.linalg.norm(m, 2):.3g} >= 1 cannot be straightened")
        return ACS(_linear_transform(X, m), X.grid, X.periodic), real_linear_map(m)
    m = X.mean()
    if np.linalg.norm(m, 2) >= 1:
        raise ValueError(f"|mean A| = {np.linalg.norm(m, 2):.3g} >= 1 cannot be straightened")
    for _ in range(max_iter):
        out = _linear_transform(X, m)
        drift = out.mean(axis=_grid_axes(out, X.grid.dim))
        if np.abs(drift).max() < tol:
            break
        m = m + drift
    return ACS(out, X.grid, X.periodic), real_linear_map(m)


def generate_structure(grid: GridField, phi) -> tuple:
    """Integrable structure ``Phi_* 0`` for ``Phi = I + phi`` and its straightening map.

    Returns ``(ACS, Diffeo of Phi)``; ``Phi^-1`` straightens the structure.
    """
    Phi = invert_map(phi, tol=1e-14)
    return pushforward(ACS.zero(grid), Phi).structure, Phi
