import numpy as np
import pytest
from scipy import integrate

from nnkam.dbar import (CELL_INTEGRAL, BallExtension, Form01, Form02, HomotopyOperator, dbar_apply,
                        dbar_apply_fd, dbar_scalar, homotopy_bm, homotopy_residual, homotopy_solve)
from nnkam.domain import ellipsoid, periodic_ball
from nnkam.grid import GridField

TWO_PI4 = (2 * np.pi,) * 4
# int over [-1/2, 1/2]^4 of |u|^-2, from independent quadrature
CELL_INTEGRAL_REF = 4.286854062301842


def _grid(n):
    return GridField(np.zeros((n,) * 4), TWO_PI4)


def _trig_form(g, seed, kmax=2, mean_zero=True):
    rng = np.random.default_rng(seed)
    comps = []
    for _ in range(2):
        F = np.zeros(g.shape, complex)
        idx = tuple(np.r_[0:kmax + 1, g.shape[j] - kmax:g.shape[j]] for j in range(4))
        F[np.ix_(*idx)] = rng.standard_normal((2 * kmax + 1,) * 4) + 1j * rng.standard_normal((2 * kmax + 1,) * 4)
        if mean_zero:
            F.flat[0] = 0
        comps.append(g.like(np.fft.ifftn(F) * g.values.size / (2 * kmax + 1) ** 4))
    return Form01(tuple(comps))


def _analytic_form(n):
    # a_1 = sin x1 cos y2, a_2 = cos(x1 + 2 y1) sin x2 at exact sample points
    g = _grid(n)
    x1, y1, x2, y2 = g.mesh()
    one = np.ones(g.shape, complex)
    return Form01((g.like(np.sin(x1) * np.cos(y2) * one), g.like(np.cos(x1 + 2 * y1) * np.sin(x2) * one)))


def _exact_dbar(n):
    # d_zbar_b = (d_x_b + i d_y_b)/2; (dbar a)_12 = dzbar_1 a_2 - dzbar_2 a_1
    g = _grid(n)
    x1, y1, x2, y2 = g.mesh()
    dzb1_a2 = 0.5 * (-np.sin(x1 + 2 * y1) - 2j * np.sin(x1 + 2 * y1)) * np.sin(x2)
    dzb2_a1 = 0.5 * (1j * np.sin(x1) * -np.sin(y2))
    return dzb1_a2 - dzb2_a1


def test_cell_integral_against_independent_quadrature():
    # the 4-cube splits into 8 face pyramids; integrating the radial direction
    # in closed form leaves a 3-D integral reducible to this 2-D one
    f = lambda y, x: np.arctan(1 / np.sqrt(1 + x * x + y * y)) / np.sqrt(1 + x * x + y * y)
    val = 8 * integrate.dblquad(f, 0, 1, 0, 1, epsabs=1e-14, epsrel=1e-14)[0]
    assert val == pytest.approx(CELL_INTEGRAL_REF, rel=1e-12)
    assert CELL_INTEGRAL == pytest.approx(CELL_INTEGRAL_REF, rel=1e-12)


def test_constant_form_is_closed():
    g = _grid(8)
    a = Form01((g.like(np.full(g.shape, 2.0 + 1j)), g.like(np.full(g.shape, -3.0))))
    assert dbar_apply(a).sup() < 1e-13


def test_dbar_squared_vanishes(rng):
    g = _grid(16)
    u = _trig_form(g, 1).components[0]
    assert dbar_apply(dbar_scalar(u)).sup() <= 1e-10


def test_dbar_matches_analytic_derivative():
    a = _analytic_form(16)
    assert np.max(np.abs(dbar_apply(a).get(0, 1).values - _exact_dbar(16))) < 1e-12


def test_finite_difference_oracle_converges_at_fourth_order():
    errs = []
    for n in (8, 16, 32):
        a = _analytic_form(n)
        errs.append(np.max(np.abs(dbar_apply_fd(a, 4).get(0, 1).values - dbar_apply(a).get(0, 1).values)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders[-1] > 3.8 and orders.min() > 3.5, orders


def test_form02_antisymmetry():
    w = dbar_apply(_analytic_form(8))
    assert np.array_equal(w.get(1, 0).values, -w.get(0, 1).values)
    assert w.get(0, 0) is None


def test_homotopy_recovers_potential():
    g = _grid(16)
    u = _trig_form(g, 2).components[0]
    H = HomotopyOperator("spectral")
    a = dbar_scalar(u)
    Pa, rep = homotopy_solve(H, a)
    assert (dbar_scalar(Pa) - a).sup() <= 1e-9
    assert dbar_scalar(Pa - u).sup() <= 1e-9
    assert rep["residual"] <= 1e-9


def test_zero_form_maps_to_zero():
    g = _grid(8)
    a = Form01((g.like(np.zeros(g.shape)), g.like(np.zeros(g.shape))))
    Pa, rep = homotopy_solve(HomotopyOperator("spectral"), a)
    assert Pa.sup() == 0 and rep["residual"] == 0


def test_random_form_residual():
    H = HomotopyOperator("spectral")
    for seed in range(5):
        _, rep = homotopy_solve(H, _trig_form(_grid(16), seed, kmax=3))
        assert rep["residual"] <= 1e-8


def test_nonzero_mean_rejected_with_value():
    a = _trig_form(_grid(8), 0, mean_zero=False)
    with pytest.raises(ValueError, match="nonzero mean"):
        homotopy_solve(HomotopyOperator("spectral"), a)


def test_homotopy_is_linear_and_translation_equivariant():
    g = _grid(16)
    H = HomotopyOperator("spectral")
    a, b = _trig_form(g, 3), _trig_form(g, 4)
    combo = Form01(tuple(x * 2.0 - y * 0.5j for x, y in zip(a.components, b.components)))
    lin = H.P(a) * 2.0 - H.P(b) * 0.5j
    assert np.max(np.abs(H.P(combo).values - lin.values)) < 1e-10
    shift = (3, 0, 5, 1)
    rolled = Form01(tuple(c.like(np.roll(c.values, shift, axis=(0, 1, 2, 3))) for c in a.components))
    assert np.max(np.abs(H.P(rolled).values - np.roll(H.P(a).values, shift, axis=(0, 1, 2, 3)))) < 1e-10
    q = H.Q(dbar_apply(combo)).array()
    q_lin = 2.0 * H.Q(dbar_apply(a)).array() - 0.5j * H.Q(dbar_apply(b)).array()
    assert np.max(np.abs(q - q_lin)) < 1e-10


def test_backend_validation():
    with pytest.raises(ValueError, match="unknown"):
        HomotopyOperator("leray")
    with pytest.raises(ValueError, match="torus"):
        HomotopyOperator("spectral", domain=ellipsoid((8,) * 4, (5.2,) * 4, [1, 1]))
    with pytest.raises(ValueError, match="bounded"):
        HomotopyOperator("bm_kernel", domain=periodic_ball((8,) * 4, (1.0,) * 4, 0.2),
                         extension=BallExtension(1.0, 1.3, 4))
    with pytest.raises(ValueError, match="extension"):
        HomotopyOperator("bm_kernel", domain=ellipsoid((8,) * 4, (5.2,) * 4, [1, 1]))
    with pytest.raises(ValueError, match="even"):
        dbar_scalar(GridField(np.zeros((8,) * 3), (1.0,) * 3))


def _kernel_op(m):
    dom = ellipsoid((m,) * 4, (5.2,) * 4, [1, 1])
    return HomotopyOperator("bm_kernel", domain=dom, extension=BallExtension(1.0, 1.3, 4))


def test_kernel_homotopy_of_zero():
    Pa, rep = homotopy_bm(_kernel_op(16), lambda p: np.zeros((len(p), 2), complex))
    assert Pa.sup() == 0 and rep["residual"] == 0


def test_kernel_residual_second_order_on_polynomial_data():
    # a = dbar(|z1|^2 + z1 zbar2) = (z1, z1)
    def sampler(p):
        z1 = p[:, 0] + 1j * p[:, 1]
        return np.stack([z1, z1], axis=1)

    res = []
    for m in (16, 32):
        H = _kernel_op(m)
        grid = H.domain.rho
        a_vals = H.extension(sampler, grid.points())
        a = Form01(tuple(grid.like(a_vals[:, c].reshape(grid.shape)) for c in range(2)))
        r = homotopy_residual(H, a)
        step = m // 16
        sub = (slice(0, None, step),) * 4
        pts = grid.points().reshape(grid.shape + (4,))[sub]
        near = np.linalg.norm(pts, axis=-1) <= 0.35 + 1e-12
        res.append(max(np.abs(c.values[sub])[near].max() for c in r.components))
    assert np.log2(res[0] / res[1]) >= 1.7, res
