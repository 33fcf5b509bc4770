"""Closed-form expressions transcribed exactly as printed.

These evaluators are kept verbatim, including terms that look like
transcription slips, so that they can be audited against the numerical
counting-statistics pipeline (see :func:`discrepancy_report`).  Nothing in
the numerical pipeline depends on them.
"""

from __future__ import annotations

import math

from .errors import DegenerateOperation, InvalidParams


def affinity(n_h: float, n_c: float) -> float:
    """Thermodynamic affinity ``ln[n_h (n_c + 1) / (n_c (n_h + 1))]`` per photon."""
    if n_h <= 0 or n_c <= 0:
        bad = "n_h" if n_h <= 0 else "n_c"
        raise InvalidParams(bad, "occupation must be > 0 for a finite affinity")
    # log1p keeps full relative accuracy as n_h -> n_c
    return math.log1p((n_h - n_c) / (n_c * (n_h + 1)))


def _require_bias(n_h, n_c):
    if n_h == n_c:
        raise DegenerateOperation("degenerate: zero current at threshold n_h == n_c")


def q_pop(n_h: float, n_c: float) -> float:
    """Population-only part of the TUR ratio; its limit at ``n_h == n_c`` is 2.

    With ``a = n_h (n_c+1)`` and ``b = n_c (n_h+1)`` one has ``a - b = n_h - n_c``
    and ``a + b = n_h + n_c + 2 n_h n_c``, so the ratio equals ``2 atanh(x)/x``
    with ``x = (a - b)/(a + b)``, which stays accurate next to threshold.
    """
    _require_bias(n_h, n_c)
    if n_h <= 0 or n_c <= 0:
        raise InvalidParams("n_h" if n_h <= 0 else "n_c", "occupation must be > 0")
    x = (n_h - n_c) / (n_h + n_c + 2 * n_h * n_c)
    return 2 * math.atanh(x) / x


def current_model1(params) -> float:
    gh, gc, lam, nh, nc = params.gamma_h, params.gamma_c, params.lam, params.n_h, params.n_c
    num = 4 * (nh - nc) * gh * gc * lam**2
    den = (4 * lam**2 * (gh * (3 * nh + 1) + gc * (3 * nc + 1))
           + (3 * nh * nc + 2 * nh + 2 * nc + 1) * (gh * (nh + 1) + gc * (nc + 1)) * gh * gc)
    return num / den


def model1_coefficients(params) -> dict:
    """Printed characteristic-polynomial coefficients for model I."""
    gh, gc, lam, nh, nc = params.gamma_h, params.gamma_c, params.lam, params.n_h, params.n_c
    gp = gh * (nh + 1) + gc * (nc + 1)
    c0p = (nh - nc) * gh * gc * gp * lam**2
    c0pp = (2 * nh * nc + nh + nc) * gh * gc * gp * lam**2
    c1 = 0.25 * gp * ((3 * nh * nc + 2 * nh + 2 * nc + 1) * gc * gh * gp
                      + 4 * (gh * (3 * nh + 1) + gc * (3 * nc + 1)))
    c1p = 2 * (nh - nc) * gh * gc * lam**2
    c2 = (-0.25 * ((nh + 1) ** 2 * (2 * nh + 1) * gh**3 + (nc + 1) ** 2 * (2 * nc + 1) * gc**3
                   + (nh + 1) * (7 + 13 * nh + 6 * (2 + 3 * nh) * nc)
                   + (nc + 1) * (7 + 13 * nc + 6 * (2 + 3 * nc) * nh))
          - 4 * ((2 * nh + 1) * gh + (2 * nc + 1) * gc))
    return {"c0p": c0p, "c0pp": c0pp, "c1": c1, "c1p": c1p, "c2": c2}


def _model1_letters(params):
    gh, gc, lam, nh, nc = params.gamma_h, params.gamma_c, params.lam, params.n_h, params.n_c
    return {
        "A": gc * (1 + nc) + gh * (1 + nh),
        "B": 1 + 2 * nh + nc * (2 + 3 * nh),
        "C": 4 * (gc * (1 + 3 * nc) + gh * (1 + 3 * nh)),
        "D": (1 + 2 * nc) * gc * ((1 + nc) ** 2 * gc**2 + 16 * lam**2),
        "F": (1 + 2 * nh) * gh * ((1 + nh) ** 2 * gh**2 + 16 * lam**2),
        "G": (1 + nc) * (7 + 13 * nc + 6 * (2 + 3 * nc)) * gc**2 * gh,
        "H": (1 + nh) * (7 + 13 * nh + 6 * (2 + 3 * nh)) * gh**2 * gc,
    }


def q1_closed_form(params) -> float:
    """TUR ratio of model I as printed."""
    gh, gc, lam, nh, nc = params.gamma_h, params.gamma_c, params.lam, params.n_h, params.n_c
    _require_bias(nh, nc)
    s = _model1_letters(params)
    A, B, C = s["A"], s["B"], s["C"]
    den = A * B * gc * gh + C * lam**2
    bracket = (A * (nh + nc + 2 * nh * nc)
               + 8 * (nh - nc) ** 2 * lam**2 * gc * gh / den
               * (2 - (s["D"] + s["F"] + s["G"] + s["H"]) / den))
    return bracket / (A * (nh - nc)) * affinity(nh, nc)


def q2_closed_form(params) -> float:
    """TUR ratio of model II as printed (inner bracket uses the unprimed A, B, C)."""
    gh, gc, lam, nh, nc = params.gamma_h, params.gamma_c, params.lam, params.n_h, params.n_c
    _require_bias(nh, nc)
    s = _model1_letters(params)
    A, B, C = s["A"], s["B"], s["C"]
    Ap = gc * nc + gh * nh
    Bp = nc + nh + 3 * nc * nh
    Dp = gc * (2 + 3 * nc) + gh * (2 + 3 * nh)
    den = Ap * (Ap * Bp + 4 * Dp * lam**2)
    inner = 2 - (A * (4 * B + A * C) + 16 * C * lam**2) / den
    return affinity(nh, nc) * ((nh + nc + 2 * nh * nc) / (nh - nc)
                               + 8 * (nh - nc) * gc * gh * lam**2 / den * inner)


def q1_rederived(params) -> float:
    """Model I TUR ratio with the occupation factor restored in the G and H terms.

    Agrees with the counting-statistics pipeline to rounding error; kept next
    to the verbatim form for the discrepancy report.
    """
    gh, gc, lam, nh, nc = params.gamma_h, params.gamma_c, params.lam, params.n_h, params.n_c
    _require_bias(nh, nc)
    s = _model1_letters(params)
    A, B, C = s["A"], s["B"], s["C"]
    G = (1 + nc) * (7 + 13 * nc + 6 * (2 + 3 * nc) * nh) * gc**2 * gh
    H = (1 + nh) * (7 + 13 * nh + 6 * (2 + 3 * nh) * nc) * gh**2 * gc
    den = A * B * gc * gh + C * lam**2
    bracket = (A * (nh + nc + 2 * nh * nc)
               + 8 * (nh - nc) ** 2 * lam**2 * gc * gh / den
               * (2 - (s["D"] + s["F"] + G + H) / den))
    return bracket / (A * (nh - nc)) * affinity(nh, nc)


def q2_rederived(params) -> float:
    """Model II TUR ratio re-derived from the characteristic polynomial.

    Differs from the printed form in three places: the rate product
    multiplies ``A' B'`` in the denominator, the inner numerator is
    ``A'(4 Gc Gh B' + A' C') + 16 C' lam^2``, and the inner denominator
    carries no extra ``A'``.
    """
    gh, gc, lam, nh, nc = params.gamma_h, params.gamma_c, params.lam, params.n_h, params.n_c
    _require_bias(nh, nc)
    Ap = gc * nc + gh * nh
    Bp = nc + nh + 3 * nc * nh
    Cp = gc * (1 + 2 * nc) + gh * (1 + 2 * nh)
    Dp = gc * (2 + 3 * nc) + gh * (2 + 3 * nh)
    K = gc * gh * Ap * Bp + 4 * Dp * lam**2
    inner = 2 - (Ap * (4 * gc * gh * Bp + Ap * Cp) + 16 * Cp * lam**2) / K
    return affinity(nh, nc) * ((nh + nc + 2 * nh * nc) / (nh - nc)
                               + 8 * (nh - nc) * gc * gh * lam**2 / (Ap * K) * inner)


def q_ht_closed_form(params) -> float:
    """High-temperature TUR ratio shared by both three-level models."""
    gh, gc, lam, nh, nc = params.gamma_h, params.gamma_c, params.lam, params.n_h, params.n_c
    _require_bias(nh, nc)
    num = (16 * (nh - nc) ** 2 * gh * gc * lam**2
           * (gc**2 * nc**2 + gh**2 * nh**2 + 5 * gc * gh * nh * nc + lam**2))
    den = 9 * nh * nc * (gc * nc + gh * nh) ** 2 * (4 * lam**2 + gh * gc * nh * nc) ** 2
    return 2 - num / den


def q_nic_p_minus1(n_h: float, n_c: float) -> float:
    """Four-level TUR ratio at fully destructive interference; equals :func:`q_pop`."""
    return q_pop(n_h, n_c)
