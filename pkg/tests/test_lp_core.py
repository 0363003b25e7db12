import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nnkam.errors import InfeasibleMomentSystem, ResolutionExhausted
from nnkam.grid import GridField, frequency_norm, read_field
from nnkam.lp_core import (SpectralProfile, build_classical_family, build_cone_pair, cone_kernel_samples,
                           decay_rate, default_family, direct_circular_convolution, dyadic_convolve,
                           measure_cross_decay, save_pair_kernel, transition, validate_profile)


@pytest.fixture(scope="module")
def family():
    return build_classical_family(SpectralProfile.smooth_bump(), 8)


def test_transition_endpoints_and_monotone():
    t = np.linspace(-1, 2, 3001)
    v = transition(t)
    assert np.all(v[t <= 0] == 1) and np.all(v[t >= 1] == 0)
    assert np.all(np.diff(v) <= 0)
    assert transition(0.5) == pytest.approx(0.5, abs=1e-15)


def test_profile_plateau_and_support():
    p = SpectralProfile.smooth_bump()
    r = np.linspace(0, 4, 4001)
    assert np.all(p(r[r <= 1]) == 1) and np.all(p(r[r >= 2]) == 0)
    assert np.all((p(r) >= 0) & (p(r) <= 1)) and np.all(np.diff(p(r)) <= 0)


def test_validate_profile_names_bad_radius():
    bad = SpectralProfile(lambda r: np.where(r < 2.5, 1.0, 0.0), 1.0, 2.0)
    with pytest.raises(ValueError, match="support"):
        validate_profile(bad)


def test_telescoping_on_lattice(family):
    radius = frequency_norm((64, 64), (2 * np.pi, 2 * np.pi))
    total = sum(family.symbol(j, radius) for j in range(9))
    assert np.abs(total - family.low_pass(8, radius)).max() < 1e-15
    for j in range(1, 9):
        expect = family.profile(2.0 ** -j * radius) - family.profile(2.0 ** -(j - 1) * radius)
        assert np.array_equal(family.symbol(j, radius), expect)


def test_tabulated_profile_level_one():
    prof = SpectralProfile.from_table([0, 1, 1.5, 2], [1, 1, 0.3, 0])
    fam = build_classical_family(prof, 4)
    assert fam.symbol(1, 1.5) == pytest.approx(0.7, abs=1e-15)


def test_almost_orthogonality_white_noise(family, rng):
    u = GridField(rng.standard_normal((1024,)), (2 * np.pi,))
    for j in range(1, 6):
        for k in range(j + 2, 8):
            w = dyadic_convolve(family, j, dyadic_convolve(family, k, u))
            assert w.sup() == 0.0 or w.sup() < 1e-16


def test_constants_and_single_modes(family):
    c = GridField(np.full(64, 2.5), (2 * np.pi,))
    assert np.allclose(dyadic_convolve(family, 0, c).values, 2.5, atol=1e-15)
    for j in range(1, 4):
        assert dyadic_convolve(family, j, c).sup() < 1e-15
    g = GridField(np.zeros(64), (2 * np.pi,))
    mode = g.like(np.exp(3j * g.coords(0)))
    for j in range(4):
        out = dyadic_convolve(family, j, mode)
        assert np.abs(out.values - family.symbol(j, 3.0) * mode.values).max() < 1e-14


def test_matches_direct_convolution(family, rng):
    u = GridField(rng.standard_normal((64, 64)), (2 * np.pi, 2 * np.pi))
    for j in (0, 2, 3):
        kern = family.spatial_kernel(j, u.shape, u.box_length)
        direct = direct_circular_convolution(np.fft.ifftshift(kern.values), u.values)
        fast = dyadic_convolve(family, j, u).values
        assert np.abs(fast - direct).max() <= 1e-10 * np.abs(direct).max()


def test_resolution_exhausted(family):
    u = GridField(np.zeros(16), (2 * np.pi,))
    with pytest.raises(ResolutionExhausted) as err:
        dyadic_convolve(family, 5, u)
    assert err.value.max_level == 1


@settings(max_examples=20, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 3))
def test_linearity(a, b, j):
    r = np.random.default_rng(7)
    fam = default_family(8)
    u = GridField(r.standard_normal(64), (2 * np.pi,))
    v = GridField(r.standard_normal(64), (2 * np.pi,))
    lhs = dyadic_convolve(fam, j, u * a + v * b)
    rhs = dyadic_convolve(fam, j, u) * a + dyadic_convolve(fam, j, v) * b
    assert (lhs - rhs).sup() < 1e-13 * (1 + abs(a) + abs(b))


@pytest.fixture(scope="module")
def pair1():
    return build_cone_pair(1, moment_order=4, level_count=8)


def test_psi_one_moments_vanish(pair1):
    g = GridField(np.zeros(2 ** 15), (32.0,), (-16.0,))
    psi = cone_kernel_samples(pair1, "psi", 1, g)
    x, h = g.coords(0), g.spacing[0]
    mass = np.sum(np.abs(psi)) * h
    for k in range(5):
        assert abs(np.sum(x ** k * psi) * h) < 1e-8 * max(mass, 1.0) * 16 ** k


def test_kernels_live_in_the_cone(pair1):
    g = GridField(np.zeros(2 ** 14), (32.0,), (-16.0,))
    x = g.coords(0)
    for j in range(4):
        for which in ("phi", "psi"):
            k = cone_kernel_samples(pair1, which, j, g)
            outside = x >= -pair1.support_bound(j)
            assert np.sum(np.abs(k[outside])) < 1e-8 * np.sum(np.abs(k))


def test_reproduction_of_band_limited_field():
    pair = build_cone_pair(2, moment_order=8, level_count=12)
    g = GridField(np.zeros((64, 64)), (2 * np.pi,) * 2)
    x, y = g.mesh()
    u = g.like(np.broadcast_to(np.cos(2 * x) * np.sin(y) + 0.5 * np.cos(3 * y), g.shape))
    ks = [np.fft.fftfreq(64, 1 / 64)[:, None] * np.ones((1, 64)), np.ones((64, 1)) * np.fft.fftfreq(64, 1 / 64)]
    J = 8
    out = np.fft.ifftn(np.fft.fftn(u.values) * pair.partial_sum_hat(J, ks))
    budget = pair.reproduction_error(J, 3 * np.sqrt(2)) * np.sum(np.abs(np.fft.fftn(u.values))) / u.values.size
    assert np.abs(out - u.values).max() <= budget + 1e-12
    assert np.abs(out - u.values).max() < 1e-6


def test_moment_order_out_of_range():
    with pytest.raises(InfeasibleMomentSystem) as err:
        build_cone_pair(1, moment_order=20)
    assert err.value.achieved_order == 12


def _gaussian_generators():
    g = GridField(np.zeros(2 ** 14), (64.0,), (-32.0,))
    x = g.coords(0)
    G = np.exp(-x ** 2 / 2)
    return g.like(G), g.like((x ** 4 - 6 * x ** 2 + 3) * G)


def test_cross_decay_with_vanishing_moments():
    eta, theta = _gaussian_generators()
    base = measure_cross_decay(eta, theta, 1, 1, 0)
    assert np.isfinite(base) and base > 0
    vals = [measure_cross_decay(eta, theta, 0, k, 0) for k in range(1, 6)]
    assert np.all(np.diff(np.log2(vals)) <= -3)
    assert decay_rate(vals) <= -(4 - 0 - 1)


def test_cross_decay_needs_moments():
    eta, _ = _gaussian_generators()
    vals = [measure_cross_decay(eta, eta, 0, k, 0) for k in range(1, 6)]
    assert abs(decay_rate(vals)) < 0.1


def test_pair_kernel_file(tmp_path, pair1):
    save_pair_kernel(tmp_path / "psi.bin", pair1, "psi", 2, (256,), (16.0,))
    f, meta = read_field(tmp_path / "psi.bin")
    assert f.shape == (256,) and meta["kind"] == "cone_psi" and meta["moment_order"] == "4"
