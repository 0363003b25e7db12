import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nnkam.grid import (GridField, box_field, cubic_eval, displaced_eval, read_field, shift_eval,
                        spectral_diff, trig_eval, write_field)


def _direct_interpolant(values, box, origin, points):
    """Symmetric trigonometric interpolant summed mode by mode (no FFT tricks beyond the coefficients)."""
    shape = values.shape
    coef = np.fft.fftn(values) / values.size
    out = np.zeros(len(points), complex)
    for idx in np.ndindex(*shape):
        ks = []
        for i, n in zip(idx, shape):
            k = i if i < n // 2 else i - n
            ks.append(k)
        weights = [[(k, 1.0)] if abs(k) != n // 2 else [(k, 0.5), (-k, 0.5)] for k, n in zip(ks, shape)]
        for combo in np.ndindex(*[len(w) for w in weights]):
            kk = [weights[a][c][0] for a, c in enumerate(combo)]
            wt = np.prod([weights[a][c][1] for a, c in enumerate(combo)])
            phase = sum(2 * np.pi * kj * (points[:, j] - origin[j]) / box[j] for j, kj in enumerate(kk))
            out += wt * coef[idx] * np.exp(1j * phase)
    return out


def test_rejects_non_power_of_two_shape():
    with pytest.raises(ValueError, match="power-of-two"):
        GridField(np.zeros((12,)), (1.0,))


def test_rejects_nan_and_box_mismatch():
    with pytest.raises(ValueError, match="finite"):
        GridField(np.array([0.0, np.nan]), (1.0,))
    with pytest.raises(ValueError, match="axes"):
        GridField(np.zeros((4, 4)), (1.0,))


def test_incompatible_fields_do_not_combine():
    a = GridField(np.zeros(8), (1.0,))
    b = GridField(np.zeros(8), (2.0,))
    with pytest.raises(ValueError, match="incompatible"):
        a + b


def test_trig_eval_matches_modewise_sum(rng):
    v = rng.standard_normal((8, 4))
    box, origin = (2.0, 3.0), (0.5, -1.0)
    pts = rng.uniform(-2, 4, (20, 2))
    ref = _direct_interpolant(v, box, origin, pts)
    assert np.abs(trig_eval(v, box, origin, pts) - ref).max() < 1e-12


def test_trig_eval_reproduces_samples(rng):
    g = GridField(rng.standard_normal((8, 8, 4)), (1.0, 2.0, 1.0))
    out = trig_eval(g.values, g.box_length, g.origin, g.points())
    assert np.abs(out - g.values.ravel()).max() < 1e-12


def test_four_dimensional_paths_agree(rng):
    # small displacement takes the Taylor route, large one the NUFFT route
    g = GridField(np.zeros((8,) * 4), (2 * np.pi,) * 4)
    X = g.mesh()
    u = np.broadcast_to(np.sin(X[0] + X[3]) * np.cos(2 * X[1]) + 0.3 * np.cos(X[2]), g.shape)
    for amp in (1e-3, 0.3):
        disp = np.array([np.broadcast_to(amp * np.cos(X[j] + X[0]), g.shape) for j in range(4)])
        Y = [X[j] + disp[j] for j in range(4)]
        exact = np.sin(Y[0] + Y[3]) * np.cos(2 * Y[1]) + 0.3 * np.cos(Y[2])
        assert np.abs(displaced_eval(u, g.box_length, g.origin, disp) - exact).max() < 1e-12


def test_shift_eval_is_a_translation():
    g = GridField(np.zeros((32, 32)), (2 * np.pi,) * 2)
    x, y = g.mesh()
    u = np.broadcast_to(np.exp(np.sin(x) + 0.5 * np.cos(y)), g.shape)
    d = np.array([np.full(g.shape, 0.01), np.full(g.shape, -0.02)])
    out = shift_eval(u, g.box_length, d)
    assert np.abs(out - np.exp(np.sin(x + 0.01) + 0.5 * np.cos(y - 0.02))).max() < 1e-10


def test_spectral_diff_single_mode():
    g = box_field(lambda x: np.sin(3 * x), (32,), (2 * np.pi,))
    d = spectral_diff(g.values, g.box_length, 0)
    assert np.abs(d - 3 * np.cos(3 * g.coords(0))).max() < 1e-12


def test_cubic_eval_exact_on_quadratics():
    g = box_field(lambda x, y: x ** 2 - x * y, (16, 16), (1.0, 1.0))
    pts = np.array([[0.3, 0.2], [0.5, 0.61]])
    out = cubic_eval(g.values, g.box_length, g.origin, pts)
    assert np.abs(out - (pts[:, 0] ** 2 - pts[:, 0] * pts[:, 1])).max() < 1e-2
    with pytest.raises(ValueError, match="outside"):
        cubic_eval(g.values, g.box_length, g.origin, np.array([[2.0, 0.0]]))


def test_binary_roundtrip(tmp_path, rng):
    g = GridField(rng.standard_normal((4, 8)) + 1j * rng.standard_normal((4, 8)), (1.5, 2.0), (0.25, -1.0))
    write_field(tmp_path / "f.bin", g, {"kind": "test", "levels": 3})
    h, meta = read_field(tmp_path / "f.bin")
    assert np.array_equal(h.values, g.values) and h.box_length == g.box_length and h.origin == g.origin
    assert meta["kind"] == "test" and meta["levels"] == "3"
    raw = (tmp_path / "f.bin").read_bytes()
    assert np.frombuffer(raw[:8], "<i8")[0] == 2
    assert len(raw) == 8 + 16 + 16 + 16 * 32


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_linearity_of_interpolation(a, b):
    r = np.random.default_rng(1)
    u, v = r.standard_normal(16), r.standard_normal(16)
    pts = r.uniform(0, 1, (5, 1))
    lhs = trig_eval(a * u + b * v, (1.0,), (0.0,), pts)
    rhs = a * trig_eval(u, (1.0,), (0.0,), pts) + b * trig_eval(v, (1.0,), (0.0,), pts)
    assert np.abs(lhs - rhs).max() < 1e-12 * (1 + abs(a) + abs(b)) * 10
