"""Acceptance gate: one test per criterion, each running its harness experiment.

Every test records ``PASS``/``FAIL`` with the measured detail and runtime;
the terminal summary (see conftest) prints one line per criterion.  Where
the experiment emits the raw measurements, the verdict is recomputed here
from the table rather than trusted from the ledger.
"""
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from nnkam.harness import ExperimentSpec, run_experiment

pytestmark = pytest.mark.slow

SEED = 0


def _run(name, params=None):
    t0 = time.perf_counter()
    bundle = run_experiment(ExperimentSpec(name, params or {}, SEED))
    return bundle, time.perf_counter() - t0


def _record(k, bundle, elapsed, limit, extra_ok=True, extra=""):
    status, detail = bundle.ledger[k]
    ok = status == "pass" and elapsed <= limit and extra_ok
    note = f"{detail}; {elapsed:.1f} s (limit {limit} s)" + (f"; {extra}" if extra else "")
    ACCEPTANCE[k] = ("PASS" if ok else "FAIL", note)
    print(f"criterion {k} {'PASS' if ok else 'FAIL'}: {note}")
    assert status == "pass", detail
    assert extra_ok, extra
    assert elapsed <= limit, f"runtime {elapsed:.1f} s exceeds {limit} s"


def _col(table, name):
    return table.columns.index(name)


@pytest.fixture(scope="module")
def scaling():
    return _run("scaling-laws")


def _refit(table, law):
    """Slopes recomputed from the emitted (N, norm) pairs: {(a, s or r): (slope, theory)}."""
    groups = {}
    iN, iv, ith = _col(table, "N"), _col(table, "norm_value"), _col(table, "theory_slope")
    key = _col(table, "r") if law == "gain" else _col(table, "s")
    for row in table.rows:
        if row[_col(table, "law")] != law:
            continue
        g = groups.setdefault((row[_col(table, "a")], row[key]), ([], [], row[ith]))
        g[0].append(row[iN])
        g[1].append(row[iv])
    return {k: (np.polyfit(N, np.log2(v), 1)[0], th) for k, (N, v, th) in groups.items()}


def test_criterion_1_gain_law(scaling):
    bundle, elapsed = scaling
    fits = _refit(bundle.tables["scaling"], "gain")
    worst = max(abs(sl - th) for sl, th in fits.values())
    _record(1, bundle, elapsed, 120, len(fits) == 6 and worst <= 0.2, f"refit max error {worst:.3g}")


def test_criterion_2_remainder_law(scaling):
    bundle, elapsed = scaling
    fits = _refit(bundle.tables["scaling"], "remainder")
    worst = max(abs(sl - th) for sl, th in fits.values())
    _record(2, bundle, elapsed, 120, len(fits) >= 3 and worst <= 0.2, f"refit max error {worst:.3g}")


def test_criterion_3_commutator():
    bundle, elapsed = _run("commutator")
    t = bundle.tables["commutator"]
    conv = [r[_col(t, "value")] for r in t.rows if r[0] in ("multiplier", "cone")]
    glued = [r for r in t.rows if r[0] == "glued"]
    slope = np.polyfit([r[1] for r in glued], np.log2([r[2] for r in glued]), 1)[0]
    ok = max(conv) <= 1e-10 and abs(slope + 1.0) <= 0.25
    _record(3, bundle, elapsed, 180, ok, f"refit glued slope {slope:.4g}")


def test_criterion_4_homotopy():
    bundle, elapsed = _run("homotopy")
    t = bundle.tables["homotopy"]
    spectral = [r[_col(t, "residual")] for r in t.rows if r[0] == "spectral"]
    kernel = [r[_col(t, "residual")] for r in t.rows if r[0] == "bm_kernel"]
    orders = np.log2(np.array(kernel[:-1]) / np.array(kernel[1:]))
    ok = len(spectral) == 10 and max(spectral) <= 1e-8 and len(kernel) == 3 and orders.min() >= 1.7
    _record(4, bundle, elapsed, 480, ok, "kernel orders " + ", ".join(f"{o:.3g}" for o in orders))


def test_criterion_5_integrability():
    bundle, elapsed = _run("integrability")
    t = bundle.tables["integrability"]
    const = [r[_col(t, "residual")] for r in t.rows if r[0].startswith("constant")]
    push = [r[_col(t, "residual")] for r in t.rows if r[0] == "pushforward"]
    orders = np.log2(np.array(push[:-1]) / np.array(push[1:]))
    _record(5, bundle, elapsed, 120, max(const) <= 1e-10 and orders.min() >= 1.7,
            "orders " + ", ".join(f"{o:.3g}" for o in orders))


def test_criterion_6_inverse_maps():
    bundle, elapsed = _run("inverse-maps")
    t = bundle.tables["inverse"]
    rows = t.rows
    ok = len(rows) == 10 and all(r[_col(t, "theta")] < 0.5 and r[_col(t, "inversion_error")] <= 1e-8
                                 and r[_col(t, "dg_norm")] <= 2 * r[_col(t, "theta")] for r in rows)
    _record(6, bundle, elapsed, 60, ok, f"{len(rows)} maps")


def test_criterion_7_feasibility():
    bundle, elapsed = _run("feasibility-map")
    t = bundle.tables["threshold_grid"]
    agree = all(bool(r[_col(t, "nonempty")]) == (r[_col(t, "gap")] > r[_col(t, "d")] / (2 * (2 - r[_col(t, "d")])))
                for r in t.rows)
    ok = bundle.summary["p_of_1"] == 0.5 and len(t.rows) == 400 and agree
    _record(7, bundle, elapsed, 1, ok, "closed form rechecked on 400 cells")


def test_criterion_8_kam():
    bundle, elapsed = _run("kam-run")
    t, sm = bundle.tables["trace"], bundle.summary
    alpha = sm["alpha"]
    within = sum(1 for r in t.rows if r[_col(t, "a")] <= r[_col(t, "t")] ** alpha)
    L_ok = all(r[_col(t, "L")] <= r[_col(t, "bound_L")] for r in t.rows)
    ratio = sm["oracle_error"] / sm["interpolation_error"]
    ok = within >= 4 and L_ok and sm["jacobian_defect"] < 1 and ratio <= 10
    _record(8, bundle, elapsed, 600, ok, f"recount {within} steps; oracle ratio {ratio:.3g}")


def test_criterion_9_norm_equivalence():
    bundle, elapsed = _run("norm-equivalence")
    t = bundle.tables["norms"]
    ratios = np.array([r[_col(t, "besov")] / r[_col(t, "difference")] for r in t.rows])
    funcs = {r[0] for r in t.rows}
    svals = {r[1] for r in t.rows}
    ok = len(funcs) == 20 and svals == {0.4, 0.8, 1.0, 1.3, 2.2} and ratios.min() >= 0.1 and ratios.max() <= 10
    _record(9, bundle, elapsed, 120, ok, f"recomputed range [{ratios.min():.3g}, {ratios.max():.3g}]")


def test_criterion_10_determinism():
    bundle, elapsed = _run("determinism")
    t = bundle.tables["determinism"]
    ok = len(t.rows) > 0 and all(r[_col(t, "identical")] for r in t.rows)
    _record(10, bundle, elapsed, 60, ok, f"{len(t.rows)} files")
