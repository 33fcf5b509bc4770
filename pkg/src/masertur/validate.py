"""Self-check suite and the closed-form discrepancy report.

Each check returns a :class:`Check`.  Checks marked ``quarantined`` encode
statements that the counting-statistics pipeline contradicts; they are run
and reported but do not decide the exit status.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import __version__
from ._io import csv_line, dumps
from .closed_forms import (
    affinity,
    current_model1,
    model1_coefficients,
    q1_closed_form,
    q1_rederived,
    q2_closed_form,
    q2_rederived,
    q_ht_closed_form,
    q_pop,
)
from .fcs import (
    charpoly_coefficients,
    cumulants_charpoly,
    cumulants_eig_fd,
    dominant_eigenvalue,
    trajectory_cumulants,
)
from .models import EngineParams, ModelKind, build_tilted_liouvillian, cold_current_from_state, steady_state
from .observables import tur_q
from .sweep import SweepSpec, iter_params, sample_params

KINDS = tuple(ModelKind)
FIG2 = EngineParams(gamma_h=0.1, gamma_c=2.0, lam=0.2, n_h=5.0, n_c=0.027)
# occupations bounded away from zero so that the affinity stays finite
MODERATE = {"n_h": (0.05, 10.0), "n_c": (0.05, 10.0)}


@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    quarantined: bool = False
    reason: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        extra = f" [quarantined: {self.reason}]" if self.quarantined else ""
        return f"{self.name}: {tag} ({self.detail}){extra}"

    def as_dict(self) -> dict:
        return {"name": self.name, "status": "PASS" if self.passed else "FAIL",
                "detail": self.detail, "quarantined": self.quarantined, "reason": self.reason}


def _draws(kind, count, seed, **ranges):
    return list(iter_params(SweepSpec(kind, count, seed, ranges={**MODERATE, **ranges})))


def _rel(a, b):
    return abs(a - b) / abs(b)


def _exact_q(kind, params):
    """q from the exact characteristic-polynomial cumulants, without the zero-current guard.

    At occupations scaled by 1e4 with fixed couplings the current of a
    weakly driven draw can fall below the degeneracy threshold while
    remaining fully resolved by the exact route.
    """
    cum = cumulants_charpoly(kind, params)
    return affinity(params.n_h, params.n_c) * cum.variance / cum.current


def check_null_eigenvalue(count=1000, seed=11) -> Check:
    worst = 0.0
    for kind in KINDS:
        for p in iter_params(SweepSpec(kind, count, seed)):
            worst = max(worst, abs(dominant_eigenvalue(build_tilted_liouvillian(kind, p, 0.0))))
    return Check("null-eigenvalue", worst < 1e-10, f"max |xi(0)| = {worst:.3g} < 1e-10")


def check_method_agreement(count=100, seed=12) -> Check:
    worst = 0.0
    for kind in KINDS:
        for p in iter_params(SweepSpec(kind, count, seed)):
            b = cumulants_charpoly(kind, p)
            if abs(b.current) < 1e-10:
                continue
            a = cumulants_eig_fd(kind, p)
            worst = max(worst, _rel(a.current, b.current), _rel(a.variance, b.variance))
    return Check("method-agreement", worst < 1e-5, f"max rel diff EigFD/CharPoly = {worst:.3g} < 1e-5")


def check_closed_form_current(count=1000, seed=13) -> Check:
    worst = 0.0
    for p in iter_params(SweepSpec(ModelKind.THREE_LEVEL_I, count, seed)):
        fcs = cumulants_charpoly(ModelKind.THREE_LEVEL_I, p).current
        if abs(fcs) < 1e-10:
            continue
        worst = max(worst, _rel(current_model1(p), fcs))
    return Check("closed-form-current", worst < 1e-6, f"max rel diff = {worst:.3g} < 1e-6")


def check_steady_state(count=300, seed=14) -> Check:
    worst = 0.0
    for kind in KINDS:
        for p in iter_params(SweepSpec(kind, count, seed)):
            fcs = cumulants_charpoly(kind, p).current
            if abs(fcs) < 1e-10:
                continue
            worst = max(worst, _rel(cold_current_from_state(kind, p, steady_state(kind, p)), fcs))
    return Check("steady-state-consistency", worst < 1e-8, f"max rel diff = {worst:.3g} < 1e-8")


def check_threshold(count=100, seed=15) -> Check:
    worst = 0.0
    for kind in (ModelKind.THREE_LEVEL_I, ModelKind.THREE_LEVEL_II):
        for p in _draws(kind, count, seed):
            for sign in (1, -1):
                q = tur_q(kind, p.replace(n_h=p.n_c * (1 + sign * 1e-4))).q
                worst = max(worst, abs(q - 2))
    return Check("threshold-saturation", worst < 1e-3, f"max |q - 2| = {worst:.3g} < 1e-3")


def check_scaling(count=100, seed=16, ks=(0.1, 0.5, 2.0, 10.0)) -> Check:
    worst = 0.0
    for kind in KINDS:
        for p in _draws(kind, count, seed):
            ref = tur_q(kind, p).q
            for k in ks:
                worst = max(worst, abs(tur_q(kind, p.scaled_rates(k)).q - ref))
    return Check("scaling-invariance", worst < 1e-8, f"max |dQ| = {worst:.3g} < 1e-8")


def check_qpop(count=100_000, seed=17) -> Check:
    a = sample_params(SweepSpec(ModelKind.THREE_LEVEL_I, count, seed, ranges=MODERATE))
    values = [q_pop(h, c) for h, c in zip(a["n_h"], a["n_c"]) if h != c]
    low = min(values)
    return Check("qpop-lower-bound", low >= 2 - 1e-12, f"min = {low:.15g} >= 2 - 1e-12")


def check_nic_endpoint(count=100, seed=18) -> Check:
    worst = 0.0
    for p in _draws(ModelKind.FOUR_LEVEL_NIC, count, seed):
        p = p.replace(p=-1.0)
        worst = max(worst, _rel(tur_q(ModelKind.FOUR_LEVEL_NIC, p).q, q_pop(p.n_h, p.n_c)))
    return Check("nic-endpoint", worst < 1e-6, f"max rel |q(p=-1) - q_pop| = {worst:.3g} < 1e-6")


def check_nic_high_temperature(count=100, seed=19, scale=1e4) -> Check:
    worst = 0.0
    for p in _draws(ModelKind.FOUR_LEVEL_NIC, count, seed):
        worst = max(worst, abs(_exact_q(ModelKind.FOUR_LEVEL_NIC, p.scaled_occupations(scale)) - 2))
    return Check("nic-high-temperature", worst < 1e-2, f"max |q - 2| = {worst:.3g} < 1e-2")


def check_three_level_high_temperature(count=100, seed=20, scale=1e4) -> Check:
    """Numeric q at scaled occupations against the high-temperature closed form."""
    worst, above = 0.0, 0
    for kind in (ModelKind.THREE_LEVEL_I, ModelKind.THREE_LEVEL_II):
        for p in _draws(kind, count, seed):
            hot = p.scaled_occupations(scale)
            q = _exact_q(kind, hot)
            worst = max(worst, abs(q - q_ht_closed_form(hot)))
            above += q >= 2
    return Check("high-temperature-three-level", worst < 1e-2 and above == 0,
                 f"max |q - q_HT| = {worst:.3g} < 1e-2; {above} of {2 * count} draws have q >= 2",
                 quarantined=True,
                 reason="exact q keeps the O(1/n^2) population excess over 2 that the "
                        "high-temperature form drops")


def check_trajectory(n_traj=10_000, seed=21) -> Check:
    ref = cumulants_charpoly(ModelKind.THREE_LEVEL_I, FIG2)
    mc = trajectory_cumulants(ModelKind.THREE_LEVEL_I, FIG2, n_traj=n_traj, seed=seed)
    zi = (mc.current - ref.current) / mc.diagnostics["current_se"]
    zv = (mc.variance - ref.variance) / mc.diagnostics["variance_se"]
    return Check("trajectory-agreement", abs(zi) < 3 and abs(zv) < 3,
                 f"mean z = {zi:+.2f}, variance z = {zv:+.2f}, |z| < 3")


DEFAULT_CHECKS = (
    check_null_eigenvalue,
    check_method_agreement,
    check_closed_form_current,
    check_steady_state,
    check_threshold,
    check_scaling,
    check_qpop,
    check_nic_endpoint,
    check_nic_high_temperature,
    check_three_level_high_temperature,
)


def run_checks(with_trajectory: bool = False, progress=None) -> list:
    checks = list(DEFAULT_CHECKS) + ([check_trajectory] if with_trajectory else [])
    out = []
    for fn in checks:
        result = fn()
        if progress is not None:
            progress(result)
        out.append(result)
    return out


# ---------------------------------------------------------------------------
# discrepancy report

REPORT_COLUMNS = ("quantity", "model", "point", "printed", "pipeline", "signed_rel_error", "note")


def _report_points():
    yield "fig2_lambda_0.05", FIG2.replace(lam=0.05)
    yield "fig2_lambda_0.2", FIG2
    yield "fig2_lambda_1", FIG2.replace(lam=1.0)
    for i, p in enumerate(_draws(ModelKind.THREE_LEVEL_I, 3, 22)):
        yield f"random_{i}", p


def discrepancy_report() -> list:
    """Printed closed forms against the counting-statistics pipeline.

    Printed characteristic-polynomial coefficients follow the ``det(L - xi)``
    convention, which for the five-dimensional generator is minus the monic
    ``det(xi - L)`` used internally; the pipeline column is converted.
    """
    rows = []

    def add(quantity, model, label, printed, pipeline, note=""):
        err = (printed - pipeline) / abs(pipeline) if pipeline != 0 else float("nan")
        rows.append({"quantity": quantity, "model": model, "point": label, "printed": printed,
                     "pipeline": pipeline, "signed_rel_error": err, "note": note})

    for label, p in _report_points():
        q1 = tur_q(ModelKind.THREE_LEVEL_I, p).q
        q2 = tur_q(ModelKind.THREE_LEVEL_II, p).q
        add("Q_I", "I", label, q1_closed_form(p), q1, "printed TUR ratio, verbatim")
        add("Q_I", "I", label, q1_rederived(p), q1,
            "occupation factor restored in G and H: 6(2+3n_c)n_h and 6(2+3n_h)n_c")
        add("Q_II", "II", label, q2_closed_form(p), q2, "printed TUR ratio, verbatim")
        add("Q_II", "II", label, q2_rederived(p), q2,
            "re-derived: rate product on A'B', primed symbols and C' in the inner bracket")
        coeffs = charpoly_coefficients(ModelKind.THREE_LEVEL_I, p)
        printed = model1_coefficients(p)
        notes = {"c1": "printed 4[...] term lacks a lambda^2 factor and the overall sign is flipped",
                 "c2": "printed form mixes terms with and without rate factors"}
        for name in ("c0p", "c0pp", "c1", "c1p", "c2"):
            add(name, "I", label, printed[name], -getattr(coeffs, name), notes.get(name, ""))
        add("current", "I", label, current_model1(p), cumulants_charpoly(ModelKind.THREE_LEVEL_I, p).current)
        hot = p.scaled_occupations(1e4)
        add("Q_HT vs Q_II(verbatim)", "II", label + "_x1e4", q2_closed_form(hot), q_ht_closed_form(hot),
            "high-temperature reduction of the printed Model II ratio")
    return rows


def report_csv(rows) -> str:
    return ",".join(REPORT_COLUMNS) + "\n" + "".join(
        csv_line(r[c] for c in REPORT_COLUMNS) for r in rows)


def results_json(checks, rows, meta: dict | None = None) -> str:
    return dumps({"metadata": {"version": __version__, **(meta or {})}, "checks": [c.as_dict() for c in checks], "discrepancies": rows,
                  "affinity_convention": "ln[n_h(n_c+1)/(n_c(n_h+1))]",
                  "all_passed": all(c.passed for c in checks if not c.quarantined)})


__all__ = ["Check", "run_checks", "discrepancy_report", "report_csv", "results_json", "affinity"]
