"""Thermodynamic quantities assembled from the current cumulants.

Under tight coupling every photon carries the same energy quantum, so the
power statistics are the photon-current statistics times
``omega_h - omega_c`` and the TUR ratio

    q = sigma * var(I) / I**2 = affinity * var(I) / I

does not depend on the level frequencies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._io import csv_line, dumps
from .closed_forms import (  # noqa: F401  (re-exported closed forms)
    affinity,
    current_model1,
    q1_closed_form,
    q1_rederived,
    q2_closed_form,
    q2_rederived,
    q_ht_closed_form,
    q_nic_p_minus1,
    q_pop,
)
from .errors import DegenerateOperation, InvalidParams
from .fcs import Cumulants, Method, cumulants, endpoint_slopes
from .models import EngineParams, LevelFrequencies, ModelKind

EPS_CURRENT = 1e-12

CSV_COLUMNS = ("kind", "gamma_h", "gamma_c", "lambda", "n_h", "n_c", "p",
               "current", "variance", "sigma", "q", "reliability", "method")


@dataclass
class TurReport:
    kind: ModelKind
    params: EngineParams
    current: float
    variance: float
    sigma: float
    q: float
    reliability: float
    method: Method
    power: float | None = None
    power_variance: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {"kind": self.kind.value, **self.params.as_dict(),
               "current": self.current, "variance": self.variance, "sigma": self.sigma,
               "q": self.q, "reliability": self.reliability, "method": self.method.value}
        if self.power is not None:
            out["power"] = self.power
            out["power_variance"] = self.power_variance
        return out

    def to_json(self) -> str:
        return dumps(self.as_dict())

    def csv_row(self) -> str:
        d = self.as_dict()
        return csv_line(d[c] for c in CSV_COLUMNS)

    @staticmethod
    def csv_header() -> str:
        return ",".join(CSV_COLUMNS) + "\n"


def _require_positive_occupations(n_h, n_c):
    for name, value in (("n_h", n_h), ("n_c", n_c)):
        if value <= 0:
            raise InvalidParams(name, "occupation must be > 0 for a finite entropy production")


def entropy_production(current: float, n_h: float, n_c: float) -> float:
    """Entropy production rate ``affinity * current``; non-negative for physical currents."""
    _require_positive_occupations(n_h, n_c)
    if n_h == n_c:
        return 0.0
    return affinity(n_h, n_c) * current


def power(current: float, freqs: LevelFrequencies) -> float:
    return freqs.quantum * current


def power_variance(variance: float, freqs: LevelFrequencies) -> float:
    return freqs.quantum**2 * variance


def reliability(cum: Cumulants) -> float:
    """Mean over standard deviation rate; the energy quantum cancels."""
    if not cum.variance > 0:
        raise DegenerateOperation(f"degenerate: variance {cum.variance:.3g} is not positive")
    return cum.current / math.sqrt(cum.variance)


def q_from_cumulants(current, variance, n_h, n_c):
    """Vectorized ``affinity * variance / current``; NaN where undefined."""
    current, variance = np.asarray(current, float), np.asarray(variance, float)
    n_h, n_c = np.asarray(n_h, float), np.asarray(n_c, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        aff = np.log1p((n_h - n_c) / (n_c * (n_h + 1)))
        q = aff * variance / current
    bad = (np.abs(current) <= EPS_CURRENT) | (n_h <= 0) | (n_c <= 0) | ~np.isfinite(q)
    return np.where(bad, np.nan, q)


def _report(kind, params, cum, freqs, diagnostics=None):
    if abs(cum.current) <= EPS_CURRENT:
        raise DegenerateOperation(
            f"degenerate: zero current (|I| = {abs(cum.current):.3g} <= {EPS_CURRENT})")
    sigma = entropy_production(cum.current, params.n_h, params.n_c)
    q = sigma * cum.variance / cum.current**2
    rel = reliability(cum)
    pw = pv = None
    if freqs is not None:
        pw, pv = power(cum.current, freqs), power_variance(cum.variance, freqs)
    diag = dict(cum.diagnostics)
    diag.update(diagnostics or {})
    return TurReport(kind, params, cum.current, cum.variance, sigma, q, rel, cum.method,
                     pw, pv, diag)


def tur_q(kind, params: EngineParams, method="charpoly", freqs: LevelFrequencies | None = None,
          **options) -> TurReport:
    """Full TUR report at one parameter point.

    At the four-level endpoint ``p = -1`` the bright and dark superpositions
    decouple and the current vanishes identically, so ``q`` is 0/0 there.  The
    report then carries the one-sided limit ``p -> -1+``, the ratio of the
    exact ``p``-slopes of variance and current (always via the characteristic
    polynomial); current, variance, entropy production and reliability all
    tend to zero.
    """
    kind = ModelKind.parse(kind)
    if not isinstance(params, EngineParams):
        params = EngineParams(**params)
    method = Method.parse(method)
    _require_positive_occupations(params.n_h, params.n_c)
    if params.n_h == params.n_c:
        raise DegenerateOperation("degenerate: zero current at threshold n_h == n_c")
    if params.lam == 0:
        raise DegenerateOperation("degenerate: zero current at lambda == 0")

    if kind is ModelKind.FOUR_LEVEL_NIC and params.p == -1.0:
        slope_current, slope_variance = endpoint_slopes(kind, params)
        q = affinity(params.n_h, params.n_c) * slope_variance / slope_current
        zero = 0.0 if freqs is not None else None
        return TurReport(kind, params, 0.0, 0.0, 0.0, q, 0.0, Method.CHARPOLY, zero, zero,
                         {"limit": "p -> -1+", "current_slope": slope_current,
                          "variance_slope": slope_variance})

    return _report(kind, params, cumulants(kind, params, method, **options), freqs)
