import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nnkam.grid import GridField
from nnkam.harness import generate_corpus, weierstrass
from nnkam.znorm import (HolderZygmundIndex, check_convexity, check_product_chain, zygmund_norm,
                         zygmund_norm_besov, zygmund_norm_diff)

# exhaustive pair search for sin(2 pi x) on 2^14 samples of the unit torus, s = 1/2
SINE_HALF_EXHAUSTIVE = 4.0175709962174455


def _exhaustive_holder(u: np.ndarray, s: float) -> float:
    """max over all sample pairs of |u(x)-u(y)| / dist^s with periodic distance, plus sup|u|."""
    n = len(u)
    best = 0.0
    for m in range(1, n):
        dist = min(m, n - m) / n
        best = max(best, float(np.abs(np.roll(u, m) - u).max()) / dist ** s)
    return best + float(np.abs(u).max())


@pytest.fixture(scope="module")
def sine():
    n = 2 ** 14
    return GridField(np.sin(2 * np.pi * np.arange(n) / n), (1.0,))


def test_zero_field_has_zero_norm():
    z = GridField(np.zeros(64), (1.0,))
    assert zygmund_norm_diff(z, 0.5).value == 0 and zygmund_norm_besov(z, 0.5).value == 0


def test_exhaustive_oracle_value(sine):
    assert _exhaustive_holder(sine.values.real, 0.5) == pytest.approx(SINE_HALF_EXHAUSTIVE, rel=1e-12)


def test_all_offsets_equal_exhaustive_search(sine):
    assert zygmund_norm_diff(sine, 0.5, offsets="all").value == pytest.approx(SINE_HALF_EXHAUSTIVE, rel=1e-12)


def test_dyadic_offsets_bracket_the_exhaustive_value(sine):
    v = zygmund_norm_diff(sine, 0.5).value
    assert 0.9 * SINE_HALF_EXHAUSTIVE <= v <= SINE_HALF_EXHAUSTIVE


def test_weierstrass_norm_saturates_under_refinement():
    vals = [zygmund_norm_diff(weierstrass(0.6, n), 0.6).value for n in (2 ** 10, 2 ** 12, 2 ** 14)]
    assert max(vals) / min(vals) <= 1.1


def test_single_mode_besov_value():
    j0, s, amp = 5, 0.7, 0.3
    g = GridField(np.zeros(1024), (2 * np.pi,))
    k = 1.5 * 2 ** j0
    u = g.like(amp * np.cos(k * g.coords(0)))
    est = zygmund_norm_besov(u, s)
    nonzero = np.nonzero(est.profile > 1e-10 * est.value)[0]
    assert set(nonzero) <= {j0, j0 + 1}
    assert 2 ** ((j0 - 1) * s) * amp <= est.value <= 2 ** ((j0 + 1) * s) * amp


def test_weierstrass_profile_is_flat_at_its_index():
    est = zygmund_norm_besov(weierstrass(0.6), 0.6)
    prof = est.profile[2:-2]
    slope = np.polyfit(np.arange(len(prof)), np.log2(prof), 1)[0]
    assert abs(slope) < 0.1


@settings(max_examples=25, deadline=None)
@given(st.floats(-1e3, 1e3).filter(lambda c: abs(c) > 1e-6), st.sampled_from([0.3, 1.0, 1.6]))
def test_norms_scale_exactly(c, s):
    u = weierstrass(0.9, 256)
    for backend in ("besov", "difference"):
        assert zygmund_norm(u * c, s, backend) == pytest.approx(abs(c) * zygmund_norm(u, s, backend), rel=1e-12)


def test_besov_growth_in_s_on_band_limited_data():
    g = GridField(np.zeros(2048), (2 * np.pi,))
    j0 = 7
    u = g.like(np.cos(1.5 * 2 ** j0 * g.coords(0)))
    s1, s2 = 0.5, 1.5
    ratio = zygmund_norm_besov(u, s2).value / zygmund_norm_besov(u, s1).value
    assert ratio == pytest.approx(2 ** (j0 * (s2 - s1)), rel=0.2) or \
        ratio == pytest.approx(2 ** ((j0 + 1) * (s2 - s1)), rel=0.2)


def test_restriction_is_monotone(rng):
    u = weierstrass(0.8, 512, dim=2)
    big = np.zeros(u.shape, bool)
    big[64:448, 64:448] = True
    small = np.zeros(u.shape, bool)
    small[128:256, 100:300] = True
    for backend in ("besov", "difference"):
        full = zygmund_norm(u, 0.5, backend, domain_mask=big)
        sub = zygmund_norm(u, 0.5, backend, domain_mask=small)
        assert sub <= full + 1e-12


def test_integer_index_detection():
    assert HolderZygmundIndex(1.0).is_integer and not HolderZygmundIndex(1.0 + 1e-12).is_integer
    with pytest.raises(ValueError):
        HolderZygmundIndex(0.0)


def test_convexity_endpoints_and_corpus():
    u = weierstrass(1.4, 1024)
    for theta in (0.0, 1.0):
        assert check_convexity(u, 1.1, 2.5, theta)["ratio"] == pytest.approx(1.0, rel=1e-12)
    items = generate_corpus(0, "weierstrass", a_values=(0.7, 1.2, 1.8, 2.4, 3.0, 0.9, 1.5, 2.1, 2.7, 3.3),
                            n=1024)
    items += generate_corpus(0, "bandlimited", count=10, n=1024)
    worst = max(check_convexity(it.data, 1.1, 2.5, 0.5)["ratio"] for it in items)
    assert np.isfinite(worst) and worst <= 1e2


def test_product_chain_sanity(rng):
    g = GridField(np.zeros(256), (2 * np.pi,))
    u = weierstrass(2.0, 256, 2 * np.pi)
    one = g.like(np.ones(256))
    assert check_product_chain(u, one, [g.like(np.zeros(256))], 1.7)["product_ratio"] <= 2
    ident = check_product_chain(u, one, [g.like(np.zeros(256))], 1.7)
    assert ident["chain_ratio"] <= 1 + 1e-12
    x = g.coords(0)
    for k in range(10):
        v = g.like(np.cos((k + 1) * x + rng.uniform(0, 6)))
        disp = [g.like(0.05 * np.sin(x + rng.uniform(0, 6)))]
        rep = check_product_chain(weierstrass(1.0 + 0.2 * k, 256, 2 * np.pi), v, disp, 1.7, 0.1)
        assert all(np.isfinite(rep[key]) for key in ("product_ratio", "chain_ratio"))
