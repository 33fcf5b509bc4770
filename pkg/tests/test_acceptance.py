"""Acceptance criteria, each at its stated size and tolerance.

Every test records one ``criterion N: PASS|FAIL (...)`` line, printed in the
terminal summary.  Runtime limits are part of the criteria that state them.
"""

import math
import time

import numpy as np
import pytest

from masertur import EngineParams, ModelKind, build_tilted_liouvillian, tur_q
from masertur.cli import DEFAULT_SEED
from masertur.closed_forms import affinity, current_model1, q_ht_closed_form, q_pop
from masertur.fcs import (
    cumulants_charpoly,
    cumulants_eig_fd,
    dominant_eigenvalue,
    trajectory_cumulants,
)
from masertur.models import cold_current_from_state, steady_state
from masertur.sweep import SweepSpec, iter_params, lambda_curve, p_curve, q_histogram, sample_params
from masertur.validate import discrepancy_report, report_csv

I, II, NIC = ModelKind.THREE_LEVEL_I, ModelKind.THREE_LEVEL_II, ModelKind.FOUR_LEVEL_NIC
FIG2 = EngineParams(gamma_h=0.1, gamma_c=2.0, lam=0.2, n_h=5.0, n_c=0.027)
FIG4 = EngineParams(gamma_h=0.3, gamma_c=0.03, lam=0.3, n_h=6.0, n_c=3.0)
FIG5 = EngineParams(gamma_h=0.6, gamma_c=0.4, lam=0.5, n_h=5.0, n_c=2.0)
MODERATE = {"n_h": (0.05, 10.0), "n_c": (0.05, 10.0)}
LAMBDA_GRID = np.linspace(0.005, 1.0, 200)


def record(log, number, passed, detail):
    log.append(f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})")
    assert passed, detail


def rel(a, b):
    return abs(a - b) / abs(b)


def draws(kind, count, seed, **ranges):
    return list(iter_params(SweepSpec(kind, count, seed, ranges={**MODERATE, **ranges})))


def exact_q(kind, params):
    cum = cumulants_charpoly(kind, params)
    return affinity(params.n_h, params.n_c) * cum.variance / cum.current


@pytest.fixture(scope="module")
def histograms():
    """Default-range histograms at 1e6 samples per kind with the published seed."""
    t = time.perf_counter()
    out = {kind: q_histogram(SweepSpec(kind, 10**6, DEFAULT_SEED), "resolvent") for kind in ModelKind}
    return out, time.perf_counter() - t


def test_criterion_01_null_eigenvalue(acceptance_log):
    t = time.perf_counter()
    worst = max(abs(dominant_eigenvalue(build_tilted_liouvillian(kind, p, 0.0)))
                for kind in ModelKind for p in iter_params(SweepSpec(kind, 1000, 101)))
    dt = time.perf_counter() - t
    record(acceptance_log, 1, worst < 1e-10 and dt < 10,
           f"max |xi(0)| = {worst:.2e} < 1e-10 over 3x1000 draws; {dt:.1f} s < 10 s")


def test_criterion_02_method_agreement(acceptance_log):
    t = time.perf_counter()
    worst, used = 0.0, 0
    for kind in ModelKind:
        for p in iter_params(SweepSpec(kind, 1000, 102)):
            b = cumulants_charpoly(kind, p)
            if abs(b.current) < 1e-10:
                continue
            a = cumulants_eig_fd(kind, p)
            worst = max(worst, rel(a.current, b.current), rel(a.variance, b.variance))
            used += 1
    dt = time.perf_counter() - t
    record(acceptance_log, 2, worst < 1e-5 and dt < 30,
           f"max rel EigFD/CharPoly = {worst:.2e} < 1e-5 over {used} points; {dt:.1f} s < 30 s")


@pytest.fixture(scope="module")
def model1_grid():
    return list(iter_params(SweepSpec(I, 1000, 103)))


def test_criterion_03_closed_form_current(acceptance_log, model1_grid):
    t = time.perf_counter()
    worst, used = 0.0, 0
    for p in model1_grid:
        closed = current_model1(p)
        if abs(closed) < 1e-10:
            continue
        for route in (cumulants_charpoly, cumulants_eig_fd):
            worst = max(worst, rel(closed, route(I, p).current))
        used += 1
    dt = time.perf_counter() - t
    record(acceptance_log, 3, worst < 1e-6 and dt < 10,
           f"max rel closed form vs CharPoly and EigFD = {worst:.2e} < 1e-6 over {used} points; "
           f"{dt:.1f} s < 10 s")


def test_criterion_04_steady_state_consistency(acceptance_log, model1_grid):
    worst, used = 0.0, 0
    for p in model1_grid:
        fcs = cumulants_charpoly(I, p).current
        if abs(fcs) < 1e-10:
            continue
        worst = max(worst, rel(cold_current_from_state(I, p, steady_state(I, p)), fcs))
        used += 1
    record(acceptance_log, 4, worst < 1e-8, f"max rel state current vs FCS = {worst:.2e} < 1e-8 "
                                            f"over {used} points")


def test_criterion_05_threshold_saturation(acceptance_log):
    worst = 0.0
    for kind in (I, II):
        for p in draws(kind, 100, 105):
            for sign in (1, -1):
                worst = max(worst, abs(tur_q(kind, p.replace(n_h=p.n_c * (1 + sign * 1e-4))).q - 2))
    record(acceptance_log, 5, worst < 1e-3, f"max |q - 2| = {worst:.2e} < 1e-3, models I and II")


def test_criterion_06_scaling_invariance(acceptance_log):
    worst = 0.0
    for kind in ModelKind:
        for p in draws(kind, 100, 106):
            ref = tur_q(kind, p).q
            for k in (0.1, 0.5, 2.0, 10.0):
                worst = max(worst, abs(tur_q(kind, p.scaled_rates(k)).q - ref))
    record(acceptance_log, 6, worst < 1e-8, f"max |dq| = {worst:.2e} < 1e-8 over 3x100 draws")


def test_criterion_07_high_temperature_three_level(acceptance_log):
    worst, above, low = 0.0, 0, math.inf
    for kind in (I, II):
        for p in draws(kind, 100, 107):
            hot = p.scaled_occupations(1e4)
            q = exact_q(kind, hot)
            worst = max(worst, abs(q - q_ht_closed_form(hot)))
            above += q >= 2
            low = min(low, q)
    record(acceptance_log, 7, worst < 1e-2 and above == 0,
           f"max |q - q_HT| = {worst:.2e} < 1e-2; q < 2 required but {above} of 200 draws "
           f"have q >= 2 (min q = {low:.6f})")


def test_criterion_08_high_temperature_nic(acceptance_log):
    worst = 0.0
    for p in draws(NIC, 100, 108):
        worst = max(worst, abs(exact_q(NIC, p.scaled_occupations(1e4)) - 2))
    record(acceptance_log, 8, worst < 1e-2, f"max |q - 2| = {worst:.2e} < 1e-2 over 100 draws")


def test_criterion_09_nic_endpoint(acceptance_log):
    worst = 0.0
    for p in draws(NIC, 100, 109):
        p = p.replace(p=-1.0)
        worst = max(worst, rel(tur_q(NIC, p).q, q_pop(p.n_h, p.n_c)))
    record(acceptance_log, 9, worst < 1e-6, f"max rel |q(p=-1) - q_pop| = {worst:.2e} < 1e-6")


def test_criterion_10_inequalities(acceptance_log, histograms):
    block = sample_params(SweepSpec(I, 10**5, 110, ranges=MODERATE))
    nh, nc = block["n_h"], block["n_c"]
    low_pop = min(q_pop(h, c) for h, c in zip(nh, nc) if h != c)
    hists, _ = histograms
    low_fcs = min(h.min_value for h in hists.values())
    record(acceptance_log, 10, low_pop >= 2 - 1e-12 and low_fcs >= 1,
           f"min q_pop = {low_pop:.15f} >= 2 - 1e-12 over 1e5 draws; "
           f"min FCS q = {low_fcs:.4f} >= 1 over 3x1e6 samples")


def test_criterion_11_figure2(acceptance_log):
    t = time.perf_counter()
    c1, c2 = lambda_curve(I, FIG2, LAMBDA_GRID), lambda_curve(II, FIG2, LAMBDA_GRID)
    dt = time.perf_counter() - t
    q1, q2 = c1.q, c2.q
    r1, r2 = c1.reliability, c2.reliability
    dips = bool(np.any(q1 < 2))
    tail = q1[LAMBDA_GRID >= 0.8]
    saturates = np.ptp(tail) < 0.05 * np.ptp(q1)
    q_cross = bool(np.any(np.diff(np.sign(q1 - q2)) != 0))
    r_cross = bool(np.any(np.diff(np.sign(r1 - r2)) != 0)) and r1[-1] > r2[-1]
    record(acceptance_log, 11, dips and saturates and q_cross and r_cross and dt < 5,
           f"model I dips below 2: {dips} (min q = {q1.min():.4f}); saturates: {saturates}; "
           f"q curves cross: {q_cross}; reliability crosses with I higher at large lambda: {r_cross}; "
           f"{dt:.1f} s < 5 s")


def test_criterion_12_figure4(acceptance_log):
    t = time.perf_counter()
    ref = lambda_curve(I, FIG4, LAMBDA_GRID).q
    low = lambda_curve(NIC, FIG4.replace(p=-0.945), LAMBDA_GRID).q
    high = lambda_curve(NIC, FIG4.replace(p=0.7), LAMBDA_GRID).q
    dt = time.perf_counter() - t
    below, above = bool(np.all(low < ref)), bool(np.all(high > ref))
    record(acceptance_log, 12, below and above and dt < 10,
           f"p=-0.945 below reference: {below}; p=0.7 above reference: {above}; {dt:.1f} s < 10 s")


def test_criterion_13_figure5(acceptance_log):
    grid = np.linspace(-1.0, 1.0, 201)
    ok, worst = True, 0.0
    for lam in (1.0, 0.5, 0.15):
        q = p_curve(FIG5.replace(lam=lam), grid).q
        i = int(np.nanargmin(q))
        ok &= 0 < i < grid.size - 1 and q[i] < q[0] and q[i] < np.nanmax(q[i:])
        worst = max(worst, abs(q[0] - q_pop(FIG5.n_h, FIG5.n_c)))
    record(acceptance_log, 13, ok and worst < 1e-4,
           f"interior minimum for lambda in (1, 0.5, 0.15): {ok}; max |q(-1) - q_pop| = {worst:.2e} < 1e-4")


def test_criterion_14_histograms(acceptance_log, histograms):
    hists, dt = histograms
    bulk = {k.value: h.mass_within(1.99, 2.01) for k, h in hists.items()}
    mins = {k.value: h.min_value for k, h in hists.items()}
    ok = (all(b > 0.5 for b in bulk.values()) and mins["II"] < mins["I"] and mins["NIC"] > mins["I"]
          and dt < 600)
    record(acceptance_log, 14, ok,
           "mass in [1.99, 2.01] > 0.5: " + ", ".join(f"{k} {v:.3f}" for k, v in bulk.items())
           + "; min q: " + ", ".join(f"{k} {v:.4f}" for k, v in mins.items())
           + f"; need II < I < NIC; seed {DEFAULT_SEED}, 1e6 samples each; {dt:.0f} s < 600 s")


def test_criterion_15_trajectory(acceptance_log):
    t = time.perf_counter()
    ref = cumulants_charpoly(I, FIG2)
    mc = trajectory_cumulants(I, FIG2, n_traj=10_000, seed=DEFAULT_SEED)
    dt = time.perf_counter() - t
    zi = (mc.current - ref.current) / mc.diagnostics["current_se"]
    zv = (mc.variance - ref.variance) / mc.diagnostics["variance_se"]
    record(acceptance_log, 15, abs(zi) < 3 and abs(zv) < 3 and dt < 300,
           f"mean z = {zi:+.2f}, variance z = {zv:+.2f}, |z| < 3 with 1e4 trajectories; {dt:.0f} s < 300 s")


def test_criterion_16_discrepancy_report(acceptance_log):
    rows = discrepancy_report()
    text = report_csv(rows)
    quantities = {r["quantity"] for r in rows}
    ok = bool(rows) and {"c0p", "c0pp", "c1", "c1p", "c2", "current"} <= quantities
    ok &= any(q.startswith("Q_I") for q in quantities) and any(q.startswith("Q_II") for q in quantities)
    record(acceptance_log, 16, ok and text.count("\n") == len(rows) + 1,
           f"{len(rows)} rows over {len(quantities)} quantities generated")
