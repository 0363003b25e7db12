"""KAM iteration for integrable structures on the torus.

Each step builds ``f_i = -S_(t_i) P (A_i - mean A_i)``, inverts ``F_i = I + f_i``
and pushes the structure forward.  Levels follow ``N_(i+1) = ceil(d N_i)``
so ``t_i = 2^-N_i`` never exceeds ``t_(i-1)^d``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .acs import (ACS, Diffeo, complex_components, compose, integrability_residual,
                  invert_map, jacobian_norm, kam_map, pushforward, real_displacement, term_norms)
from .dbar import HomotopyOperator
from .domain import DefiningFunction, levi_min, update_defining
from .errors import GeometryAbort, InversionAbort, IterationAbort, ScheduleAbort
from .grid import GridField, spectral_diff
from .smooth import SmoothingLevel, SmoothingOperator
from .znorm import HolderZygmundIndex, zygmund_norm


def p_of_d(d: float) -> float:
    """Threshold ``d / (2(2 - d))`` that ``r - s`` must exceed."""
    if not 1 <= d < 2:
        raise ValueError(f"d must lie in [1, 2), got {d}")
    return d / (2 * (2 - d))


def critical_d(gap: float) -> float:
    """Largest ``d`` with ``p(d) < gap``; the inverse of ``p``."""
    return 4 * gap / (1 + 2 * gap)


@dataclass(frozen=True)
class FeasibleRegion:
    """``{(alpha, beta): alpha d + beta < budget, alpha > alpha_min, beta > beta_min}``."""

    r: float
    s: float
    d: float
    lam: float
    gamma: float

    @property
    def alpha_min(self) -> float:
        return (0.5 + self.lam) / (2 - self.d)

    @property
    def beta_min(self) -> float:
        return self.lam / (self.d - 1)

    @property
    def budget(self) -> float:
        return self.r - self.s - self.lam - self.gamma

    @property
    def nonempty(self) -> bool:
        return self.alpha_min * self.d + self.beta_min < self.budget

    @property
    def vertices(self) -> list:
        if not self.nonempty:
            return []
        a, b = self.alpha_min, self.beta_min
        return [(a, b), ((self.budget - b) / self.d, b), (a, self.budget - a * self.d)]

    def centre(self) -> tuple:
        if not self.nonempty:
            raise ValueError(f"feasible region is empty for r-s={self.r - self.s:.4g}, d={self.d}")
        v = np.array(self.vertices)
        return tuple(float(x) for x in v.mean(axis=0))

    def margins(self, alpha: float, beta: float) -> dict:
        return {"budget": self.budget - alpha * self.d - beta,
                "alpha": alpha * (2 - self.d) - 0.5 - self.lam,
                "beta": beta * (self.d - 1) - self.lam}

    def contains(self, alpha: float, beta: float) -> bool:
        return all(v > 0 for v in self.margins(alpha, beta).values())


def feasible_region(r: float, s: float, d: float, lam: float = 0.0, gamma: float = 0.0) -> FeasibleRegion:
    if not 1 < d < 2:
        raise ValueError(f"d must lie in (1, 2), got {d}")
    if lam < 0 or gamma < 0:
        raise ValueError("lambda and gamma must be non-negative")
    return FeasibleRegion(float(r), float(s), float(d), float(lam), float(gamma))


@dataclass(frozen=True)
class T0Cap:
    caps: dict
    value: float


def compute_t0_cap(alpha: float, lam: float, gamma: float, L0: float, delta: float,
                   constants: dict) -> T0Cap:
    """Minimum of the four caps on ``t_0``.

    ``constants`` holds measured ``C_star``, ``C2``, ``C_rs``, ``C_r``,
    ``C_s``.  ``delta = inf`` (no boundary, as on the torus) switches the
    second cap off.
    """
    if alpha <= 0.5:
        raise ValueError(f"alpha must exceed 1/2, got {alpha}")
    for key in ("C_star", "C2", "C_rs", "C_r", "C_s"):
        if not constants.get(key, 0) > 0:
            raise ValueError(f"constant {key} must be positive, got {constants.get(key)}")
    if not (L0 > 0 and delta > 0 and lam > 0 and gamma > 0):
        raise ValueError("L0, delta, lambda and gamma must be positive")
    caps = {
        "C_star": (1 / constants["C_star"]) ** (2 / (2 * alpha - 1)),
        "C2": math.inf if math.isinf(delta) else (delta / constants["C2"]) ** (1 / (alpha - 0.5)),
        "C_lambda": min((1 / (2 * constants[k])) ** (1 / lam) for k in ("C_rs", "C_r", "C_s")),
        "L0": (1 / L0) ** (1 / gamma),
    }
    for key, v in caps.items():
        if not v > 0:
            raise ValueError(f"t0 cap {key} = {v} is not positive")
    return T0Cap(caps, min(caps.values()))


@dataclass(frozen=True)
class IterParams:
    alpha: float
    beta: float
    d: float
    lam: float
    gamma: float
    t0: float
    C_star: float
    r: float
    s: float
    m: float | None = None
    t0_cap: float | None = None

    def __post_init__(self):
        HolderZygmundIndex(self.r), HolderZygmundIndex(self.s)
        if self.s <= 1:
            raise ValueError(f"s must exceed 1, got {self.s}")
        if self.r <= 1.5:
            raise ValueError(f"r must exceed 3/2, got {self.r}")
        if not 0 < self.t0 < 1:
            raise ValueError(f"t0 must lie in (0, 1), got {self.t0}")
        region = feasible_region(self.r, self.s, self.d, self.lam, self.gamma)
        if not region.contains(self.alpha, self.beta):
            raise ValueError(f"(alpha, beta) = ({self.alpha}, {self.beta}) infeasible: "
                             f"{region.margins(self.alpha, self.beta)}")
        if self.t0_cap is not None and self.t0 > self.t0_cap:
            raise ValueError(f"t0 = {self.t0:.4g} exceeds the cap {self.t0_cap:.4g}")
        if self.C_star <= 0:
            raise ValueError("C_star must be positive")
        if self.m is None:
            object.__setattr__(self, "m", self.r)

    @property
    def level0(self) -> int:
        return SmoothingLevel.from_t(self.t0).N

    @property
    def region(self) -> FeasibleRegion:
        return feasible_region(self.r, self.s, self.d, self.lam, self.gamma)


def schedule(N0: int, d: float, steps: int) -> list:
    if N0 < 1:
        raise ValueError("the schedule needs N0 >= 1 to grow")
    out = [int(N0)]
    for _ in range(steps - 1):
        out.append(int(math.ceil(d * out[-1] - 1e-12)))
    return out


# ----------------------------------------------------------------------------
# one step


@dataclass
class KAMOperators:
    smoother: SmoothingOperator
    homotopy: HomotopyOperator
    theta_max: float = 0.45
    inversion_tol: float = 1e-14


def ck_norm(disp, k: int) -> float:
    """``max_(|beta| <= k) sup |d^beta f|`` for a periodic real displacement."""
    g = disp[0]
    fields = [c.values.real for c in disp]
    best = max(float(np.abs(v).max()) for v in fields)
    current = fields
    for _ in range(k):
        current = [spectral_diff(v, g.box_length, ax).real for v in current for ax in range(g.dim)]
        best = max(best, max(float(np.abs(v).max()) for v in current))
    return best


@dataclass
class StepRecord:
    i: int
    N: int
    t: float
    a: float
    L: float
    M: float
    bound_a: float
    bound_L: float
    precondition: float = math.nan
    f_c1: float = math.nan
    f_c2: float = math.nan
    theta: float = math.nan
    inversion_error: float = math.nan
    levi_min: float = math.nan
    a_next: float = math.nan
    L_next: float = math.nan
    M_next: float = math.nan
    smoothing_term: float = math.nan
    quadratic_term: float = math.nan
    recombination_error: float = math.nan
    integrability: float = math.nan
    term_norms: dict = field(default_factory=dict)

    @property
    def margin_a(self) -> float:
        return self.bound_a - self.a

    @property
    def margin_L(self) -> float:
        return self.bound_L - self.L


def kam_step(X: ACS, rho: DefiningFunction | None, level, ops: KAMOperators, params: IterParams,
             record: StepRecord):
    """One iteration; fills ``record`` and returns ``(X_next, rho_next, F)``."""
    level = level if isinstance(level, SmoothingLevel) else SmoothingLevel(int(level))
    t = level.t
    if not np.any(X.A):
        F = Diffeo.identity(X.grid, X.periodic)
        record.update = None
        record.f_c1 = record.f_c2 = record.theta = 0.0
        record.a_next = record.L_next = record.M_next = 0.0
        return X, rho, F
    record.precondition = t ** -0.5 * record.a
    if record.precondition > 1 / params.C_star:
        raise ScheduleAbort(record.i, "t^-1/2 |A|_s", record.precondition, 1 / params.C_star)
    f, terms = kam_map(X, level, ops.smoother, ops.homotopy)
    disp = real_displacement(f)
    record.f_c1 = ck_norm(disp, 1)
    record.f_c2 = ck_norm(disp, 2)
    if record.f_c1 > ops.theta_max:
        raise InversionAbort(record.i, "|f|_1", record.f_c1, ops.theta_max)
    try:
        F = invert_map(f, tol=ops.inversion_tol, periodic=X.periodic)
        push = pushforward(X, F, terms)
    except ValueError as exc:
        raise InversionAbort(record.i, str(exc), math.nan, ops.theta_max) from exc
    record.theta = F.theta
    record.inversion_error = F.inversion_error
    rho_next = rho
    if rho is not None:
        rho_next = update_defining(rho, F)
        record.levi_min = levi_min(rho_next)
        if record.levi_min <= 0:
            raise GeometryAbort(record.i, "Levi minimum", record.levi_min, 0.0)
    Y = push.structure
    record.a_next = Y.norm(params.s)
    record.L_next = Y.norm(params.r)
    record.M_next = record.L_next if params.m == params.r else Y.norm(params.m)
    record.smoothing_term = t ** (params.r - params.s) * record.L
    record.quadratic_term = t ** -0.5 * record.a ** 2
    record.recombination_error = terms.recombination_error
    record.term_norms = term_norms(terms, X.grid, params.s)
    record.integrability = integrability_residual(Y)[1]
    return Y, rho_next, F


# ----------------------------------------------------------------------------
# driver


@dataclass
class IterTrace:
    params: IterParams
    records: list = field(default_factory=list)
    status: str = "running"
    failure: str | None = None
    increments: list = field(default_factory=list)
    increment_norms: list = field(default_factory=list)
    increment_sup: list = field(default_factory=list)
    C_m: list = field(default_factory=list)
    N_md: int | None = None
    eta: float = math.nan
    theta_monitor: float = math.nan
    ell: float = math.nan
    mu: float = math.nan
    jacobian_defect: float = math.nan
    composition_norms: list = field(default_factory=list)
    composition_constant: float = math.nan
    oracle: dict = field(default_factory=dict)

    @property
    def steps_within_bound(self) -> int:
        return sum(1 for r in self.records if r.a <= r.bound_a)

    def rows(self) -> list:
        keys = ["i", "N", "t", "a", "L", "M", "bound_a", "bound_L", "precondition", "f_c1", "f_c2",
                "theta", "inversion_error", "levi_min", "a_next", "L_next", "smoothing_term",
                "quadratic_term", "recombination_error", "integrability"]
        out = []
        for k, rec in enumerate(self.records):
            row = {key: getattr(rec, key) for key in keys}
            row["increment"] = self.increment_norms[k] if k < len(self.increment_norms) else math.nan
            row["C_m"] = self.C_m[k] if k < len(self.C_m) else math.nan
            for name in ("I0", "I1", "I2", "I3", "I4"):
                row[f"{name}_s"] = rec.term_norms.get(f"{name}_s", math.nan)
            out.append(row)
        return out


def fit_eta(M: list, t: list, N: int, lam: float, d: float) -> float:
    """Smallest ``eta > lam/(d-1)`` with ``M_i <= M_N t_i^-eta`` for ``i >= N``."""
    floor = lam / (d - 1) * (1 + 1e-6) + 1e-12
    best = floor
    for i in range(N + 1, len(M)):
        if M[i] > M[N] and t[i] < 1:
            best = max(best, math.log(M[i] / M[N]) / math.log(1 / t[i]))
    return best


def run_iteration(X0: ACS, params: IterParams, ops: KAMOperators, rho0: DefiningFunction | None = None,
                  max_steps: int = 10, floor: float = 1e-12, monitor: GridField | None = None):
    """Iterate until ``a_i < floor`` or ``max_steps``; returns ``(IterTrace, Diffeo)``.

    Per-step bounds ``a_i <= t_i^alpha`` and ``L_i <= L_0 t_i^-beta`` are
    checked before each step; a violation or a typed abort truncates the
    trace with the failing quantity.
    """
    trace = IterTrace(params)
    grid = X0.grid
    levels = schedule(params.level0, params.d, max_steps + 1)
    L0 = X0.norm(params.r)
    total = np.zeros((grid.dim,) + grid.shape)
    X, rho = X0, rho0
    for i, N in enumerate(levels):
        t = 2.0 ** -N
        a = X.norm(params.s)
        L = L0 if i == 0 else trace.records[-1].L_next
        M = L if params.m == params.r else X.norm(params.m)
        rec = StepRecord(i, N, t, a, L, M, t ** params.alpha, L0 * t ** -params.beta)
        trace.records.append(rec)
        if a > rec.bound_a:
            trace.status, trace.failure = "failed", f"step {i}: a = {a:.4g} > t^alpha = {rec.bound_a:.4g}"
            break
        if L > rec.bound_L * (1 + 1e-12):
            trace.status, trace.failure = "failed", f"step {i}: L = {L:.4g} > L0 t^-beta = {rec.bound_L:.4g}"
            break
        if a < floor:
            trace.status = "converged"
            break
        if i == max_steps:
            trace.status = "max_steps"
            break
        try:
            X, rho, F = kam_step(X, rho, N, ops, params, rec)
        except IterationAbort as exc:
            trace.status, trace.failure = "failed", str(exc)
            break
        f = np.array([c.values.real for c in F.displacement])
        new = compose(f, total, grid, X0.periodic)
        trace.increments.append(new - total)
        total = new
        if monitor is not None:
            trace.composition_norms.append(zygmund_norm(_compose_scalar(monitor, total), params.r))
    _finish(trace, total, grid, params, monitor)
    disp = [grid.like(v) for v in total]
    final = invert_map(complex_components(disp), tol=ops.inversion_tol, periodic=X0.periodic) \
        if np.any(total) else Diffeo.identity(grid, X0.periodic)
    return trace, final


def _compose_scalar(u: GridField, disp: np.ndarray) -> GridField:
    from .znorm import compose as zcompose
    return zcompose(u, list(disp))


def _finish(trace: IterTrace, total: np.ndarray, grid: GridField, params: IterParams, monitor):
    recs = trace.records
    steps = [r for r in recs if not math.isnan(r.M_next)]
    trace.C_m = [r.M_next / r.M if r.M > 0 else 0.0 for r in steps]
    trace.N_md = next((i for i, c in enumerate(trace.C_m) if c <= recs[i].t ** -params.lam), None)
    Ms = [r.M for r in recs]
    ts = [r.t for r in recs]
    N = trace.N_md if trace.N_md is not None else 0
    trace.eta = fit_eta(Ms, ts, N, params.lam, params.d)
    trace.theta_monitor = 0.5 * params.alpha / (params.alpha + trace.eta)
    trace.ell = (1 - trace.theta_monitor) * params.s + trace.theta_monitor * params.m
    trace.mu = (1 - trace.theta_monitor) * params.alpha - trace.theta_monitor * trace.eta
    index = trace.ell + 0.5
    for inc in trace.increments:
        trace.increment_norms.append(max(zygmund_norm(grid.like(c), index) for c in inc))
        trace.increment_sup.append(float(np.abs(inc).max()))
    trace.jacobian_defect = jacobian_norm([grid.like(v) for v in total]) if np.any(total) else 0.0
    if monitor is not None and trace.composition_norms:
        base = zygmund_norm(monitor, params.r)
        trace.composition_constant = max((n / base) ** (1 / (j + 1))
                                         for j, n in enumerate(trace.composition_norms))


def increments_contract(trace: IterTrace, ratio: float = 0.5) -> bool:
    """Strict decrease with ratio below ``ratio`` from step ``N(m, d)`` on."""
    start = trace.N_md if trace.N_md is not None else 0
    seq = trace.increment_norms[start:]
    if len(seq) < 2:
        return False
    return all(b < ratio * a for a, b in zip(seq, seq[1:]))


# ----------------------------------------------------------------------------
# torus benchmark with an analytic generator


@dataclass(frozen=True)
class Generator:
    """``phi_mu(x) = scale * sum c exp(i k . 2 pi x / L)`` over ``(mu, c, k)`` modes."""

    modes: tuple
    box_length: tuple
    scale: float = 1.0

    def jacobian_bound(self) -> float:
        """Upper bound on ``|D phi|`` from the mode list."""
        return self.scale * sum(abs(c) * 2 * np.pi * np.linalg.norm(np.divide(k, self.box_length))
                                for _, c, k in self.modes)

    def scaled(self, scale: float) -> "Generator":
        return Generator(self.modes, self.box_length, float(scale))

    @property
    def n(self) -> int:
        return len(self.box_length) // 2

    def _phase(self, k, points):
        return np.exp(1j * sum(2 * np.pi * k[j] * points[:, j] / self.box_length[j]
                               for j in range(len(k))))

    def values(self, points: np.ndarray) -> np.ndarray:
        out = np.zeros((self.n, points.shape[0]), complex)
        for mu, c, k in self.modes:
            out[mu] += self.scale * c * self._phase(k, points)
        return out

    def derivatives(self, points: np.ndarray):
        """``D[a, mu] = d_(z_a) phi_mu``, ``Db[a, mu] = d_(zbar_a) phi_mu`` at points."""
        n = self.n
        D = np.zeros((n, n, points.shape[0]), complex)
        Db = np.zeros_like(D)
        for mu, c, k in self.modes:
            w = self.scale * c * self._phase(k, points)
            for a in range(n):
                kx = 2j * np.pi * k[2 * a] / self.box_length[2 * a]
                ky = 2j * np.pi * k[2 * a + 1] / self.box_length[2 * a + 1]
                D[a, mu] += 0.5 * (kx - 1j * ky) * w
                Db[a, mu] += 0.5 * (kx + 1j * ky) * w
        return D, Db

    def real_values(self, points: np.ndarray) -> np.ndarray:
        v = self.values(points)
        return np.stack([p for mu in range(self.n) for p in (v[mu].real, v[mu].imag)])

    def inverse_displacement(self, points: np.ndarray, tol: float | None = None,
                             max_iter: int = 500) -> np.ndarray:
        """``psi(y) = Phi^-1(y) - y`` from ``x = y - phi(x)``, pointwise.

        The default tolerance is a few ulps of the largest coordinate.
        """
        if tol is None:
            tol = 8 * np.finfo(float).eps * max(1.0, float(np.abs(points).max()))
        psi = -self.real_values(points)
        for _ in range(max_iter):
            new = -self.real_values(points + psi.T)
            change = float(np.abs(new - psi).max())
            psi = new
            if change < tol:
                return psi
        raise InversionAbort(max_iter, "generator inverse change", change, tol)

    def structure_at(self, points: np.ndarray) -> np.ndarray:
        """``Phi_* 0`` at points: ``(I + conj D)^-1 Dbar`` at ``Phi^-1(y)``."""
        psi = self.inverse_displacement(points)
        D, Db = self.derivatives(points + psi.T)
        n = self.n
        B = np.eye(n)[:, :, None] + np.conj(D)
        return np.moveaxis(np.linalg.solve(np.moveaxis(B, 2, 0), np.moveaxis(Db, 2, 0)), 0, 2)


def random_generator(seed: int, box_length, count: int = 4, kmax: int = 1) -> Generator:
    rng = np.random.default_rng(seed)
    dim = len(box_length)
    modes = []
    for _ in range(count):
        mu = int(rng.integers(dim // 2))
        k = tuple(int(v) for v in rng.integers(-kmax, kmax + 1, size=dim))
        if not any(k):
            k = (1,) + k[1:]
        c = complex(rng.normal(), rng.normal()) / np.sqrt(count)
        modes.append((mu, c, k))
    return Generator(tuple(modes), tuple(float(b) for b in box_length))


@dataclass
class Benchmark:
    grid: GridField
    generator: Generator
    structure: ACS
    psi: np.ndarray
    interpolation_error: float


def _fourier_shift(values: np.ndarray, box_length, shift) -> np.ndarray:
    """Trigonometric interpolant (Nyquist split evenly) at ``x + shift``."""
    out = np.fft.fftn(values, axes=tuple(range(-len(box_length), 0)))
    d = len(box_length)
    for j in range(d):
        n = values.shape[values.ndim - d + j]
        k = 2 * np.pi * np.fft.fftfreq(n, d=box_length[j] / n)
        fac = np.exp(1j * k * shift[j])
        fac[n // 2] = np.cos(k[n // 2] * shift[j])
        out = out * fac.reshape([-1 if a == j else 1 for a in range(d)])
    return np.fft.ifftn(out, axes=tuple(range(-d, 0)))


def build_benchmark(grid: GridField, generator: Generator) -> Benchmark:
    """Sample the generated structure and its exact straightening map on a grid."""
    pts = grid.points()
    A = generator.structure_at(pts).reshape((generator.n, generator.n) + grid.shape)
    psi = generator.inverse_displacement(pts).reshape((grid.dim,) + grid.shape)
    half = tuple(0.5 * h for h in grid.spacing)
    mid = pts + np.array(half)
    psi_mid = generator.inverse_displacement(mid).reshape(psi.shape)
    interp = float(np.abs(_fourier_shift(psi, grid.box_length, half).real - psi_mid).max())
    return Benchmark(grid, generator, ACS(A, grid), psi, interp)


def normalize_benchmark(grid: GridField, generator: Generator, s: float, target: float,
                        rtol: float = 1e-6, max_iter: int = 20) -> Benchmark:
    """Rescale the generator so ``|A_0|_s`` sits just below ``target``."""
    def norm(scale):
        gen = generator.scaled(scale)
        pts = grid.points()
        A = gen.structure_at(pts).reshape((gen.n, gen.n) + grid.shape)
        return max(zygmund_norm(grid.like(A[a, b]), s) for a in range(gen.n) for b in range(gen.n))

    goal = target * (1 - rtol)
    x0 = generator.scale * min(1.0, 0.01 / generator.jacobian_bound())
    y0 = norm(x0)
    x1 = x0 * goal / y0
    y1 = norm(x1)
    for _ in range(max_iter):
        if abs(y1 - goal) <= rtol * goal * 0.5:
            break
        x0, x1, y0 = x1, x1 + (goal - y1) * (x1 - x0) / (y1 - y0), y1
        y1 = norm(x1)
    if y1 > target:
        raise ValueError(f"normalisation overshoots: {y1:.6g} > {target:.6g}")
    return build_benchmark(grid, generator.scaled(x1))


def oracle_comparison(bench: Benchmark, total: np.ndarray) -> dict:
    """``F - F_exact`` up to the translation freedom of holomorphic torus maps."""
    diff = total - bench.psi
    shift = diff.reshape(diff.shape[0], -1).mean(axis=1)
    err = float(np.abs(diff - shift.reshape((-1,) + (1,) * bench.grid.dim)).max())
    return {"error": err, "translation": shift.tolist(), "interpolation_error": bench.interpolation_error,
            "ratio": err / bench.interpolation_error if bench.interpolation_error > 0 else math.inf}


# ----------------------------------------------------------------------------
# measured constants


def measure_constants(X: ACS, params_r: float, params_s: float, ops: KAMOperators, level: int,
                      theta_target: float = 0.4, smoothing_levels=None) -> dict:
    """Constants from one calibration step and the smoothing remainder ratios.

    ``C_rs``: max of ``|(I - S_t) A|_s / (t^(r-s) |A|_r)`` over levels;
    ``C_s``: ``a_1 / (t^-1/2 a_0^2)``; ``C_r``: ``L_1 / L_0``; ``C2``:
    ``|f|_2 / (t^-1/2 a_0)``; ``C_star = (|f|_1 / (t^-1/2 a_0)) / theta_target``.
    """
    from .smooth import smooth_remainder

    r, s = params_r, params_s
    L = X.norm(r)
    a = X.norm(s)
    levels = smoothing_levels or range(1, 6)
    ratios = []
    for N in levels:
        t = 2.0 ** -N
        rem = max(zygmund_norm(smooth_remainder(ops.smoother, N, X.entry(p, q)), s)
                  for p in range(X.n) for q in range(X.n))
        ratios.append(rem / (t ** (r - s) * L))
    t = 2.0 ** -level
    f, terms = kam_map(X, level, ops.smoother, ops.homotopy)
    disp = real_displacement(f)
    F = invert_map(f, tol=ops.inversion_tol, periodic=X.periodic)
    Y = pushforward(X, F).structure
    scale = t ** -0.5 * a
    return {"C_rs": max(ratios), "C_s": Y.norm(s) / (t ** -0.5 * a ** 2), "C_r": Y.norm(r) / L,
            "C2": ck_norm(disp, 2) / scale, "C_star": ck_norm(disp, 1) / scale / theta_target,
            "calibration_level": level, "calibration_a": a}


@dataclass
class BenchmarkSetup:
    params: IterParams
    benchmark: Benchmark
    cap: T0Cap
    constants: dict
    L0: float


def configure_torus_benchmark(grid: GridField, generator: Generator, ops: KAMOperators, r: float, s: float,
                              d: float, lam: float, gamma: float, alpha="auto", beta="auto", t0="auto",
                              calibration_level: int = 4, calibration_a: float = 5e-3,
                              theta_target: float = 0.4) -> BenchmarkSetup:
    """Measure constants, cap ``t_0`` and normalise ``|A_0|_s = t_0^alpha``.

    ``alpha``/``beta`` "auto" take the centroid of the feasible triangle;
    ``t0`` "auto" takes half the cap.  The schedule starts at the dyadic
    level ``N_0 = ceil(-log2 t_0)`` and the structure is normalised against
    ``2^(-N_0 alpha)``.
    """
    region = feasible_region(r, s, d, lam, gamma)
    ca, cb = region.centre()
    alpha = ca if alpha == "auto" else float(alpha)
    beta = cb if beta == "auto" else float(beta)
    cal = normalize_benchmark(grid, generator, s, calibration_a)
    constants = measure_constants(cal.structure, r, s, ops, calibration_level, theta_target)
    # L0 depends on the normalisation, so "auto" scans dyadic t0 = 2^-N
    # downward and keeps the first with t0 <= (cap computed at t0) / 2
    levels = range(1, 40) if t0 == "auto" else [SmoothingLevel.from_t(float(t0)).N]
    bench = cap = None
    for N in levels:
        t_choice = 2.0 ** -N if t0 == "auto" else float(t0)
        try:
            bench = normalize_benchmark(grid, cal.generator, s, (2.0 ** -N) ** alpha)
        except (ValueError, InversionAbort):
            continue
        L0 = bench.structure.norm(r)
        cap = compute_t0_cap(alpha, lam, gamma, L0, math.inf, constants)
        if t0 != "auto" or t_choice <= cap.value / 2:
            break
    if bench is None:
        raise ValueError("no admissible t0: every normalisation failed")
    params = IterParams(alpha, beta, d, lam, gamma, t_choice, constants["C_star"], r, s, t0_cap=cap.value)
    return BenchmarkSetup(params, bench, cap, constants, L0)
