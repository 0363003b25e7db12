import numpy as np
import pytest

from nnkam.domain import strip_domain
from nnkam.errors import ResolutionExhausted
from nnkam.grid import GridField
from nnkam.harness import weierstrass
from nnkam.lp_core import build_cone_pair
from nnkam.smooth import (SmoothingLevel, SmoothingOperator, commutator_d_smooth, extension_budget,
                          fitted_slope, glued_commutator_terms, rychkov_extend, smooth_apply,
                          smooth_remainder)
from nnkam.znorm import zygmund_norm_besov

LEVELS = list(range(3, 9))
STRIP_SHAPE, STRIP_BOX = (256, 256), (2.0, 128.0)


@pytest.fixture(scope="module")
def pair2():
    return build_cone_pair(2, moment_order=2, level_count=12)


@pytest.fixture(scope="module")
def strip(pair2):
    rho, chart = strip_domain(STRIP_SHAPE, STRIP_BOX, 32.0, 96.0, 0.1, 14.4)
    return chart, SmoothingOperator("glued", pair=pair2, chart=chart)


def _trig(shape, kmax, rng):
    g = GridField(np.zeros(shape), (2 * np.pi,) * len(shape))
    F = np.zeros(shape, complex)
    for k in np.ndindex(*shape):
        kk = [ki if ki < n // 2 else ki - n for ki, n in zip(k, shape)]
        if np.sqrt(np.sum(np.square(kk))) <= kmax:
            F[k] = rng.standard_normal() + 1j * rng.standard_normal()
    return g.like(np.fft.ifftn(F))


def test_level_quantisation():
    assert SmoothingLevel.from_t(0.3).N == 2 and SmoothingLevel.from_t(0.25).N == 2
    assert SmoothingLevel(5).t == 2 ** -5
    with pytest.raises(ValueError):
        SmoothingLevel(-1)
    with pytest.raises(ValueError):
        SmoothingLevel.from_t(1.5)


def test_band_limited_input_is_reproduced(rng):
    u = _trig((64, 64), 8, rng)
    op = SmoothingOperator("multiplier")
    assert np.max(np.abs(smooth_apply(op, 3, u).values - u.values)) < 1e-12
    v = _trig((64, 64), 4, rng)
    assert smooth_remainder(op, 3, v).sup() < 1e-12


def test_constants_are_reproduced(pair2, strip):
    c = GridField(np.full((64, 64), 2.5), (2.0, 2.0))
    for op in (SmoothingOperator("multiplier"), SmoothingOperator("cone", pair=pair2)):
        assert np.max(np.abs(smooth_apply(op, 4, c).values - 2.5)) < 1e-12
    # glued: S0(chi_0 c) + sum chi S(chi c) differs from c only by the
    # truncation residual of the smoothed cutoffs, which decays with N
    chart, op = strip
    cg = GridField(np.full(STRIP_SHAPE, 2.5), STRIP_BOX)
    res = [np.max(np.abs(smooth_apply(op, N, cg).values - 2.5)[chart.closure_mask]) for N in (2, 4, 6)]
    assert res[0] > res[1] > res[2] and res[2] < 1e-8


def test_unknown_backend_and_missing_pieces():
    with pytest.raises(ValueError, match="backend"):
        SmoothingOperator("fourier")
    with pytest.raises(ValueError, match="cone pair"):
        SmoothingOperator("cone")


def test_level_overflow_is_resolution_exhausted():
    op = SmoothingOperator("multiplier")
    with pytest.raises(ResolutionExhausted):
        smooth_apply(op, op.family.max_level, GridField(np.zeros(64), (1.0,)))


def test_gain_slope_for_weierstrass():
    u = weierstrass(0.8)
    op = SmoothingOperator("multiplier")
    vals = [zygmund_norm_besov(smooth_apply(op, N, u), 1.6).value for N in LEVELS]
    assert fitted_slope(LEVELS, vals) == pytest.approx(0.8, abs=0.15)


def test_remainder_slope_for_weierstrass():
    u = weierstrass(1.4)
    op = SmoothingOperator("multiplier")
    vals = [zygmund_norm_besov(smooth_remainder(op, N, u), 0.6).value for N in LEVELS]
    assert fitted_slope(LEVELS, vals) == pytest.approx(-0.8, abs=0.15)


def test_apply_plus_remainder_is_identity(rng, pair2, strip):
    u = GridField(rng.standard_normal((64, 64)), (2.0, 2.0))
    for op in (SmoothingOperator("multiplier"), SmoothingOperator("cone", pair=pair2)):
        total = smooth_apply(op, 3, u) + smooth_remainder(op, 3, u)
        assert np.max(np.abs(total.values - u.values)) < 1e-13


def test_multiplier_nesting(rng):
    u = GridField(rng.standard_normal((128,)), (1.0,))
    op = SmoothingOperator("multiplier")
    once = smooth_apply(op, 3, u)
    assert np.max(np.abs(smooth_apply(op, 4, once).values - once.values)) < 1e-12


def test_convolution_backends_commute_with_derivatives(pair2):
    u = weierstrass(1.5, 128, 2.0, dim=2)
    for op in (SmoothingOperator("multiplier"), SmoothingOperator("cone", pair=pair2)):
        for N in (2, 4, 6):
            for ax in (0, 1):
                assert commutator_d_smooth(op, N, u, ax).sup() <= 1e-10


def test_glued_commutator_equals_cutoff_expression(strip):
    # the two sides agree up to the discrete product rule, whose defect for
    # the spectral derivative on this grid is about 2e-4 at N = 3
    chart, op = strip
    w = weierstrass(1.5, STRIP_SHAPE[0], 2.0).values.real
    for vals in (np.broadcast_to(w[:, None], STRIP_SHAPE), np.ones(STRIP_SHAPE)):
        u = GridField(vals.copy(), STRIP_BOX)
        for N, tol in ((3, 1e-3), (5, 1e-5)):
            for ax in (0, 1):
                lhs = commutator_d_smooth(op, N, u, ax).values
                rhs = glued_commutator_terms(op, N, u, ax).values
                assert np.max(np.abs(lhs - rhs)[chart.closure_mask]) <= tol * max(1.0, np.abs(lhs).max())


def test_cutoff_expression_is_glued_only(pair2):
    with pytest.raises(ValueError, match="glued"):
        glued_commutator_terms(SmoothingOperator("cone", pair=pair2), 3, GridField(np.zeros((16, 16)), (1.0, 1.0)), 0)


def test_low_regularity_warns():
    u = GridField(np.zeros(64), (1.0,))
    with pytest.warns(UserWarning, match="regularity"):
        commutator_d_smooth(SmoothingOperator("multiplier"), 2, u, 0, regularity=0.8)


def test_glued_needs_exact_partition(pair2):
    _, chart = strip_domain((64, 64), (1.0, 1.0), 0.2, 0.8, 0.03, 0.05)
    bad = type(chart)(chart.charts, chart.interior_cutoff.like(chart.interior_cutoff.values * 0.5),
                      chart.domain_mask, chart.closure_mask)
    with pytest.raises(ValueError, match="partition"):
        SmoothingOperator("glued", pair=pair2, chart=bad)


@pytest.fixture(scope="module")
def line():
    n, L = 4096, 64.0
    g = GridField(np.zeros(n), (L,), (-L / 2,))
    return g, g.coords(0), build_cone_pair(1, moment_order=4, level_count=6)


def test_extension_of_zero_is_zero(line):
    g, x, pair = line
    assert rychkov_extend(g, pair, x > 0, levels=4).sup() == 0


def test_extension_reproduces_f_within_budget(line):
    g, x, pair = line
    f = g.like(np.exp(-((x - 8) / 2.0) ** 2) * np.cos(3 * x))
    om = x > 0
    for J in (3, 4, 5):
        err = np.abs(rychkov_extend(f, pair, om, levels=J).values - f.values)[om].max()
        assert err <= extension_budget(f, pair, J) + 1e-9
    assert np.abs(rychkov_extend(f, pair, om, levels=4).values - f.values)[om].max() < 5e-3


def test_extension_ignores_values_outside_omega(line):
    g, x, pair = line
    f = np.exp(-((x - 8) / 2.0) ** 2)
    om = x > 0
    junk = np.where(om, f, np.sin(5 * x))
    a = rychkov_extend(g.like(f), pair, om, levels=4).values
    b = rychkov_extend(g.like(junk), pair, om, levels=4).values
    assert np.array_equal(a, b)


def test_extension_rejects_bad_geometry(line, pair2):
    g, x, pair = line
    with pytest.raises(ValueError, match="cone axis"):
        rychkov_extend(GridField(np.zeros((16, 16)), (1.0, 1.0)), pair2, np.ones((16, 16), bool), cone_axis=0)
    with pytest.raises(ValueError, match="graph"):
        rychkov_extend(g, pair, np.abs(x) < 4)
