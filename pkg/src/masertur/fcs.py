"""Long-time photon-current cumulants from the counting-field-tilted generator.

Four routes are provided and are deliberately independent of each other:

``eigfd``
    central differences of the dominant eigenvalue ``xi(chi)``;
``charpoly``
    implicit differentiation of the characteristic polynomial, whose
    coefficients come from the Faddeev-LeVerrier recursion;
``resolvent``
    first and second order perturbation theory of the null eigenvalue,
    using the stationary state and one more linear solve;
``trajectory``
    Monte Carlo quantum-jump unraveling built directly from the Hamiltonian
    and jump operators (no generator matrix involved).

All derivatives use ``i d/dchi`` so that emission into the cold bath counts
as a positive current.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable

import flint
import numpy as np
from flint import acb, acb_mat, arb, fmpz_mat

from .errors import (
    DegenerateDominantRoot,
    DegenerateOperation,
    EigenSolverFailure,
    InsufficientHorizon,
    InvalidParams,
    StepTooSmall,
    ZeroC1,
)
from .models import (
    EngineParams,
    ModelKind,
    TiltedLiouvillian,
    _as_arrays,
    _channels,
    counting_derivatives,
    coherence_coupling,
    counting_split,
    generator_stack,
    population_mask,
)

DEFAULT_STEP = 1e-3
IMAG_TOL = 1e-6
TIE_TOL = 1e-10
PRECISION = 128  # bits used when refining eigenvalues


class Method(str, Enum):
    EIG_FD = "eigfd"
    CHARPOLY = "charpoly"
    RESOLVENT = "resolvent"
    TRAJECTORY = "trajectory"

    @classmethod
    def parse(cls, value) -> "Method":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise InvalidParams("method", f"unknown method {value!r} (use one of {names})") from None


@dataclass
class Cumulants:
    current: float
    variance: float
    method: Method
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CharPolyCoefficients:
    """Low-order coefficients of ``det(xi - L(chi)) = sum_n c_n xi**n``.

    Primes denote ``i d/dchi`` at ``chi = 0``.
    """

    c0p: float
    c0pp: float
    c1: float
    c1p: float
    c2: float


def _check_step(step):
    if not 0 < step <= 0.1:
        raise InvalidParams("step", f"must lie in (0, 0.1], got {step}")


def _relative_imag(z_current, z_variance):
    scale = max(abs(z_current.real), abs(z_variance.real))
    resid = max(abs(z_current.imag), abs(z_variance.imag))
    return resid / scale if scale > 0 else resid


def _params(params):
    return params if isinstance(params, EngineParams) else EngineParams(**params)


# ---------------------------------------------------------------------------
# dominant eigenvalue

def dominant_eigenvalue_stack(matrices: np.ndarray, *, check_ties: bool = False):
    """Eigenvalue with the largest real part for each matrix in a stack.

    Returns ``(values, gap)`` where ``gap`` is the distance in real part to
    the runner-up eigenvalue.
    """
    try:
        w = np.linalg.eigvals(matrices)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverFailure(str(exc)) from exc
    order = np.argsort(-w.real, axis=-1)
    w = np.take_along_axis(w, order, axis=-1)
    gap = w[..., 0].real - w[..., 1].real
    if check_ties and np.any(gap < TIE_TOL):
        raise DegenerateDominantRoot("two eigenvalues share the largest real part")
    return w[..., 0], gap


def dominant_eigenvalue(L: TiltedLiouvillian) -> complex:
    """Dominant eigenvalue ``xi(chi)`` of a tilted generator."""
    m = L.entries if isinstance(L, TiltedLiouvillian) else np.asarray(L)
    chi = L.chi if isinstance(L, TiltedLiouvillian) else 1.0
    xi, gap = dominant_eigenvalue_stack(m)
    if chi != 0 and gap < TIE_TOL:
        raise DegenerateDominantRoot(f"dominant root ambiguous at chi={chi} (gap {gap:.3g})")
    return complex(xi)


def _richardson(d_h, d_half):
    return (4 * d_half - d_h) / 3


def _acb_matrix(m):
    n = m.shape[0]
    return acb_mat(n, n, [acb(complex(z)) for z in np.ravel(m)])


class _PreciseGenerator:
    """The tilted generator held in ball arithmetic.

    The counting phase is applied at working precision, so generators at
    nearby ``chi`` differ only by their exact phase factors.
    """

    def __init__(self, kind, params):
        self.rest, self.emission, self.absorption = counting_split(kind, params)
        self._rest = _acb_matrix(self.rest)
        self._em = _acb_matrix(self.emission)
        self._ab = _acb_matrix(self.absorption)
        self.dim = self.rest.shape[0]

    def double(self, chi):
        return self.rest + np.exp(-1j * chi) * self.emission + np.exp(1j * chi) * self.absorption

    def precise(self, chi):
        x = arb(chi)
        c, s = x.cos(), x.sin()
        return self._rest + self._em * acb(c, -s) + self._ab * acb(c, s)

    def dominant(self, chi, iterations=6):
        """Dominant eigenvalue refined by Newton steps on the eigenpair."""
        w, vecs = np.linalg.eig(self.double(chi))
        order = np.argsort(-w.real)
        if chi != 0 and w[order[0]].real - w[order[1]].real < TIE_TOL:
            raise DegenerateDominantRoot(f"dominant root ambiguous at chi={chi}")
        v = vecs[:, order[0]]
        pin = int(np.argmax(np.abs(v)))
        v = v / v[pin]
        n = self.dim
        a = self.precise(chi)
        xi = acb(complex(w[order[0]]))
        vec = [acb(complex(z)) for z in v]
        scale = float(np.abs(self.rest).max())
        entries = [[a[p, q] for q in range(n)] for p in range(n)]
        border = [acb(1) if q == pin else acb(0) for q in range(n)] + [acb(0)]
        for _ in range(iterations):
            # bordered system [[A - xi, -v], [e_pin, 0]] (dv, dxi) = (-(A v - xi v), 0)
            av = a * acb_mat(n, 1, vec)
            rows, rhs = [], []
            for p in range(n):
                row = list(entries[p])
                row[p] = row[p] - xi
                rows.extend(row + [-vec[p]])
                rhs.append(xi * vec[p] - av[p, 0])
            rows.extend(border)
            rhs.append(acb(0))
            try:
                d = acb_mat(n + 1, n + 1, rows).solve(acb_mat(n + 1, 1, rhs))
            except ZeroDivisionError as exc:
                raise EigenSolverFailure(f"eigenpair refinement singular at chi={chi}") from exc
            vec = [vec[p] + d[p, 0] for p in range(n)]
            xi = xi + d[n, 0]
            # quadratic convergence: a step below half precision leaves a full-precision iterate
            if abs(complex(d[n, 0].mid())) < 2.0 ** (-PRECISION // 2 + 8) * scale:
                break
        return xi


def _precise_derivatives(xi_at, step):
    """``i d/dchi`` and ``(i d/dchi)**2`` at zero with one Richardson level."""
    x0 = xi_at(0.0)

    def diffs(h):
        xp, xm = xi_at(h), xi_at(-h)
        return (xp - xm) * acb(0, 1) / (2 * h), -(xp - 2 * x0 + xm) / (h * h)

    a1, a2 = diffs(step)
    b1, b2 = diffs(step / 2)
    return x0, _richardson(a1, b1), _richardson(a2, b2)


def cumulants_eig_fd(kind, params: EngineParams, step: float = DEFAULT_STEP) -> Cumulants:
    """Cumulants from finite differences of the dominant eigenvalue.

    Central differences at ``step`` and ``step/2`` are combined by one
    Richardson extrapolation.  Each eigenvalue is refined well beyond double
    precision, because the current can be many orders of magnitude smaller
    than the rates and a double eigensolver would otherwise drown the
    difference quotients in rounding error.
    """
    _check_step(step)
    kind = ModelKind.parse(kind)
    gen = _PreciseGenerator(kind, _params(params))
    with flint.ctx.workprec(PRECISION):
        x0, d1, d2 = _precise_derivatives(gen.dominant, step)
        cur, var = complex(d1.mid()), complex(d2.mid())
    resid = _relative_imag(cur, var)
    if resid > IMAG_TOL:
        raise StepTooSmall(f"imaginary residual {resid:.3g} exceeds {IMAG_TOL}")
    return Cumulants(cur.real, var.real, Method.EIG_FD,
                     {"step": step, "xi0": complex(x0.mid()), "imag_current": cur.imag,
                      "imag_variance": var.imag, "imag_residual": resid})


# ---------------------------------------------------------------------------
# characteristic polynomial

def faddeev_leverrier(m: np.ndarray) -> np.ndarray:
    """Coefficients ``c[..., k]`` of ``det(x I - m) = sum_k c_k x**k`` in floating point.

    Works on stacks of square matrices; ``c[..., n] == 1``.  Fast but not
    backward stable; :func:`faddeev_leverrier_exact` is the reference.
    """
    m = np.asarray(m)
    n = m.shape[-1]
    eye = np.eye(n, dtype=m.dtype)
    c = np.zeros(m.shape[:-2] + (n + 1,), dtype=np.result_type(m.dtype, complex))
    c[..., n] = 1.0
    mk = np.zeros_like(m, dtype=c.dtype)
    for k in range(1, n + 1):
        mk = m @ mk + c[..., n - k + 1, None, None] * eye
        am = m @ mk
        c[..., n - k] = -np.trace(am, axis1=-2, axis2=-1) / k
    return c


def _binary_exponent(*arrays):
    """Smallest ``e >= 0`` such that every entry times ``2**e`` is an integer."""
    parts = [np.concatenate([np.real(a).ravel(), np.imag(a).ravel()]) for a in arrays]
    vals = np.concatenate(parts)
    vals = vals[vals != 0]
    if vals.size == 0:
        return 0
    return max(int(np.max(53 - np.frexp(vals)[1])), 0)


def _fmpz(a, e):
    n = a.shape[0]
    return fmpz_mat(n, n, [int(v) for v in np.ldexp(np.asarray(a, float), e).ravel()])


def _gaussian_charpoly(re: fmpz_mat, im: fmpz_mat) -> list:
    """Faddeev-LeVerrier over the Gaussian integers.

    For an integer matrix every intermediate matrix is integral, so the
    divisions by ``k`` are exact.  Returns ``[(re, im), ...]`` of
    ``det(x I - M)`` indexed by power.
    """
    n = re.nrows()
    eye = fmpz_mat(n, n, [int(i == j) for i in range(n) for j in range(n)])
    cr, ci = [0] * (n + 1), [0] * (n + 1)
    cr[n] = 1
    mr, mi = fmpz_mat(n, n), fmpz_mat(n, n)
    for k in range(1, n + 1):
        mr = mr + eye * cr[n - k + 1]
        mi = mi + eye * ci[n - k + 1]
        pr = re * mr - im * mi
        pi = re * mi + im * mr
        tr = sum(int(pr[i, i]) for i in range(n))
        ti = sum(int(pi[i, i]) for i in range(n))
        if tr % k or ti % k:
            raise AssertionError("Faddeev-LeVerrier trace not divisible; input was not integral")
        cr[n - k], ci[n - k] = -tr // k, -ti // k
        mr, mi = pr, pi
    return list(zip(cr, ci))


def _unscale(coeffs, denom):
    """Divide coefficient ``k`` of an ``n``-dimensional charpoly by ``denom**(n-k)``."""
    n = len(coeffs) - 1
    return [(Fraction(r) / denom ** (n - k), Fraction(i) / denom ** (n - k))
            for k, (r, i) in enumerate(coeffs)]


def faddeev_leverrier_exact(m: np.ndarray) -> list:
    """Exact characteristic polynomial of a double-precision matrix.

    Every double is a dyadic rational, so after scaling by a power of two the
    recursion runs over Gaussian integers with no rounding at all.  Returns
    ``[(re, im), ...]`` of :class:`fractions.Fraction` indexed by power.
    """
    m = np.asarray(m, dtype=complex)
    e = _binary_exponent(m)
    coeffs = _gaussian_charpoly(_fmpz(m.real, e), _fmpz(m.imag, e))
    return _unscale(coeffs, 2**e)


def _cmul(a, b):
    return (a[0] * b[0] - a[1] * b[1], a[0] * b[1] + a[1] * b[0])


def _cdiv(a, b):
    d = b[0] * b[0] + b[1] * b[1]
    return ((a[0] * b[0] + a[1] * b[1]) / d, (a[1] * b[0] - a[0] * b[1]) / d)


def _cadd(*zs):
    return (sum(z[0] for z in zs), sum(z[1] for z in zs))


def _cscale(z, s):
    return (z[0] * s, z[1] * s)


def _as_complex(z):
    return complex(float(z[0]), float(z[1]))


def _charpoly_formula(c1, c2, d1_0, d1_1, d2_0):
    """``I = -c0'/c1`` and ``var = -(c0'' + 2 I (c1' + c2 I))/c1`` on complex pairs."""
    current = _cscale(_cdiv(d1_0, c1), -1)
    inner = _cadd(d1_1, _cmul(c2, current))
    variance = _cscale(_cdiv(_cadd(d2_0, _cscale(_cmul(current, inner), 2)), c1), -1)
    return current, variance


def _exact_stencil(c_plus, c_0, c_minus, sin_h, one_minus_cos):
    """First and second ``i d/dchi`` of trigonometric polynomials of degree one.

    A coefficient of the form ``a + b exp(-i chi) + g exp(i chi)`` is
    differentiated exactly by these quotients for any step.
    """
    d1, d2 = [], []
    for p, z, m in zip(c_plus, c_0, c_minus):
        diff = _cadd(p, _cscale(m, -1))
        d1.append(_cscale((-diff[1], diff[0]), Fraction(1) / (2 * sin_h)))
        curv = _cadd(p, m, _cscale(z, -2))
        d2.append(_cscale(curv, Fraction(-1) / (2 * one_minus_cos)))
    return d1, d2


def charpoly_coeffs_numeric(L_at: Callable, step: float = 0.1) -> CharPolyCoefficients:
    """Characteristic-polynomial coefficients and their counting-field derivatives.

    ``L_at`` maps ``chi`` to a :class:`TiltedLiouvillian` (or a bare matrix).
    Coefficients at ``chi in {0, +-step}`` come from the exact recursion;
    derivatives use the trigonometric central quotients, which reduce to the
    ordinary ones as ``step -> 0`` and are exact for a single counted channel.
    Because of that exactness the largest admissible step is the default:
    the phases returned by ``L_at`` are rounded, and the rounding is divided
    by ``1 - cos(step)`` in the second derivative.
    """
    _check_step(step)

    def at(chi):
        m = L_at(chi)
        return faddeev_leverrier_exact(m.entries if isinstance(m, TiltedLiouvillian) else m)

    sin_h, omc = Fraction(math.sin(step)), Fraction(1 - math.cos(step))
    c0 = at(0.0)
    d1, d2 = _exact_stencil(at(step), c0, at(-step), sin_h, omc)
    return _coefficients(c0, d1, d2)


def _coefficients(c0, d1, d2):
    vals = [_as_complex(z) for z in (d1[0], d2[0], d1[1])]
    resid = max(abs(v.imag) for v in vals) / max(max(abs(v.real) for v in vals), 1e-300)
    if resid > IMAG_TOL:
        raise StepTooSmall(f"imaginary residual {resid:.3g} exceeds {IMAG_TOL}")
    return CharPolyCoefficients(c0p=vals[0].real, c0pp=vals[1].real,
                                c1=float(c0[1][0]), c1p=vals[2].real, c2=float(c0[2][0]))


def _rational_phase(step):
    """Rational point ``(cos h, sin h)`` on the unit circle with ``h`` close to ``step``.

    Returns ``(t, h)`` where ``t = tan(h/2)`` is rational.
    """
    t = Fraction(math.tan(step / 2)).limit_denominator(1 << 24)
    return t, 2 * math.atan(t)


def _exact_charpoly_data(kind, params, step):
    """Exact coefficients of the tilted generator at ``chi in {0, +-h}``.

    The generator is ``rest + e^{-i chi} E + e^{i chi} A`` with ``E`` and ``A``
    the counted cold jumps.  With ``tan(h/2) = p/q`` rational the phases are
    ``(q^2 - p^2 -+ 2ipq)/(p^2 + q^2)``, so after clearing denominators every
    generator is a Gaussian-integer matrix.
    """
    rest, em, ab = counting_split(kind, params)
    t, h = _rational_phase(step)
    p, q = t.numerator, t.denominator
    d, c, s = p * p + q * q, q * q - p * p, 2 * p * q
    e = _binary_exponent(rest, em, ab)
    r_re, r_im = _fmpz(rest.real, e), _fmpz(rest.imag, e)
    m_em, m_ab = _fmpz(em, e), _fmpz(ab, e)
    base_re, base_im = r_re * d, r_im * d
    denom = d * 2**e
    at0 = _unscale(_gaussian_charpoly(base_re + (m_em + m_ab) * d, base_im), denom)
    plus = _unscale(_gaussian_charpoly(base_re + (m_em + m_ab) * c, base_im + (m_ab - m_em) * s),
                    denom)
    minus = _unscale(_gaussian_charpoly(base_re + (m_em + m_ab) * c, base_im + (m_em - m_ab) * s),
                     denom)
    sin_h = Fraction(s, d)
    omc = Fraction(2 * p * p, d)
    d1, d2 = _exact_stencil(plus, at0, minus, sin_h, omc)
    return at0, d1, d2, h


def charpoly_coefficients(kind, params: EngineParams, step: float = DEFAULT_STEP) -> CharPolyCoefficients:
    """Coefficients of the tilted generator with exact rational counting phases."""
    _check_step(step)
    c0, d1, d2, _ = _exact_charpoly_data(ModelKind.parse(kind), _params(params), step)
    return _coefficients(c0, d1, d2)


def cumulants_charpoly(kind, params: EngineParams, step: float = DEFAULT_STEP) -> Cumulants:
    """Cumulants from ``I = -c0'/c1`` and ``var = -(c0'' + 2I(c1' + c2 I))/c1``.

    The coefficients and their derivatives are exact rationals for the
    double-precision generator, so the only rounding happens in the final
    conversion to floats.
    """
    _check_step(step)
    kind = ModelKind.parse(kind)
    c0, d1, d2, h = _exact_charpoly_data(kind, _params(params), step)
    coeffs = _coefficients(c0, d1, d2)
    if abs(coeffs.c1) < 1e-14:
        raise ZeroC1(f"|c1| = {abs(coeffs.c1):.3g} below 1e-14")
    cur, var = _charpoly_formula(c0[1], c0[2], d1[0], d1[1], d2[0])
    cur, var = _as_complex(cur), _as_complex(var)
    return Cumulants(cur.real, var.real, Method.CHARPOLY,
                     {"step": h, "coefficients": coeffs, "c0": float(c0[0][0]),
                      "imag_current": cur.imag, "imag_variance": var.imag})


def _dual_gaussian_charpoly(a0re, a0im, a1re, a1im) -> list:
    """Faddeev-LeVerrier for ``A0 + eps A1`` with ``eps**2 = 0`` over Gaussian integers.

    Returns ``[((re, im), (dre, dim)), ...]``: each coefficient and its
    derivative along ``A1``.  All divisions remain exact because the
    coefficients are integer polynomials in the entries.
    """
    n = a0re.nrows()
    eye = fmpz_mat(n, n, [int(i == j) for i in range(n) for j in range(n)])
    zero = fmpz_mat(n, n)
    c = [[0, 0, 0, 0] for _ in range(n + 1)]  # re, im, dre, dim
    c[n][0] = 1
    xr, xi, yr, yi = zero, zero, zero, zero  # M_k = X + eps Y
    for k in range(1, n + 1):
        ck = c[n - k + 1]
        xr, xi = xr + eye * ck[0], xi + eye * ck[1]
        yr, yi = yr + eye * ck[2], yi + eye * ck[3]
        pr = a0re * xr - a0im * xi
        pi = a0re * xi + a0im * xr
        qr = a0re * yr - a0im * yi + a1re * xr - a1im * xi
        qi = a0re * yi + a0im * yr + a1re * xi + a1im * xr
        traces = [sum(int(m[i, i]) for i in range(n)) for m in (pr, pi, qr, qi)]
        if any(t % k for t in traces):
            raise AssertionError("Faddeev-LeVerrier trace not divisible; input was not integral")
        c[n - k] = [-t // k for t in traces]
        xr, xi, yr, yi = pr, pi, qr, qi
    return [((v[0], v[1]), (v[2], v[3])) for v in c]


def endpoint_slopes(kind, params: EngineParams, step: float = DEFAULT_STEP):
    """``(dI/dp, dvar/dp)`` at a point where current and variance vanish identically.

    Used at the four-level endpoint ``p = -1``: there ``I`` and ``var`` are
    both zero, so the limiting TUR ratio is ``affinity * var'/I'``.  The
    generator is affine in ``p`` and the counting phases are rational, so the
    derivatives are exact rationals of the double-precision inputs.
    """
    _check_step(step)
    kind = ModelKind.parse(kind)
    params = _params(params)
    if params.p != int(params.p):
        raise InvalidParams("p", "endpoint slopes need an integer p (the endpoint -1 or 1)")
    rest, em, ab = counting_split(kind, params.replace(p=0.0))
    dp = coherence_coupling(kind, params)
    t, h = _rational_phase(step)
    pn, qn = t.numerator, t.denominator
    d, c, s = pn * pn + qn * qn, qn * qn - pn * pn, 2 * pn * qn
    e = _binary_exponent(rest, em, ab, dp)
    p_int = int(params.p)
    base_re = (_fmpz(rest.real, e) + _fmpz(dp.real, e) * p_int) * d
    base_im = (_fmpz(rest.imag, e) + _fmpz(dp.imag, e) * p_int) * d
    d_re, d_im = _fmpz(dp.real, e) * d, _fmpz(dp.imag, e) * d
    m_em, m_ab = _fmpz(em, e), _fmpz(ab, e)
    denom = d * 2**e

    def at(cos_num, sin_num):
        re = base_re + (m_em + m_ab) * cos_num
        im = base_im + (m_ab - m_em) * sin_num
        raw = _dual_gaussian_charpoly(re, im, d_re, d_im)
        value = _unscale([v for v, _ in raw], denom)
        slope = _unscale([w for _, w in raw], denom)
        return value, slope

    v0, s0 = at(d, 0)
    vp, sp = at(c, s)
    vm, sm = at(c, -s)
    sin_h, omc = Fraction(s, d), Fraction(2 * pn * pn, d)
    d1, d2 = _exact_stencil(vp, v0, vm, sin_h, omc)
    e1, e2 = _exact_stencil(sp, s0, sm, sin_h, omc)
    if any(z != 0 for z in (*d1[0], *d2[0])):
        raise DegenerateOperation("current does not vanish identically at this point")
    c1 = v0[1]
    slope_current = _cscale(_cdiv(e1[0], c1), -1)
    slope_variance = _cscale(_cdiv(_cadd(e2[0], _cscale(_cmul(slope_current, d1[1]), 2)), c1), -1)
    return _as_complex(slope_current).real, _as_complex(slope_variance).real


# ---------------------------------------------------------------------------
# resolvent (perturbation theory of the null eigenvalue)

def resolvent_stack(kind, params):
    """Batched cumulants from perturbation theory around ``chi = 0``.

    With ``rho`` the stationary state and ``1`` the trace functional,
    ``I = 1.L'.rho`` and ``var = 1.L''.rho + 2 1.L'.x`` where ``x`` solves
    ``L x = -(L' - I) rho`` with zero trace.
    """
    kind = ModelKind.parse(kind)
    mask = population_mask(kind)
    l0 = generator_stack(kind, params, 0.0)
    d1 = counting_derivatives(kind, params, 1)
    d2 = counting_derivatives(kind, params, 2)
    m = np.array(l0, copy=True)
    m[..., 0, :] = mask
    rhs = np.zeros(m.shape[:-1], dtype=complex)
    rhs[..., 0] = 1.0
    rho = np.linalg.solve(m, rhs[..., None])[..., 0]
    d1rho = np.einsum("...ij,...j->...i", d1, rho)
    current = d1rho @ mask
    src = -(d1rho - current[..., None] * rho)
    src[..., 0] = 0.0
    x = np.linalg.solve(m, src[..., None])[..., 0]
    variance = np.einsum("...ij,...j->...i", d2, rho) @ mask + 2 * (
        np.einsum("...ij,...j->...i", d1, x) @ mask)
    return current, variance


def cumulants_resolvent(kind, params: EngineParams) -> Cumulants:
    cur, var = resolvent_stack(kind, params)
    cur, var = complex(cur), complex(var)
    return Cumulants(cur.real, var.real, Method.RESOLVENT,
                     {"imag_current": cur.imag, "imag_variance": var.imag})


# ---------------------------------------------------------------------------
# quantum-jump unraveling

@dataclass(frozen=True)
class _Channel:
    rate: float
    nu: int
    target: int  # index of the post-jump state
    bra: np.ndarray  # L = |target><bra|


def _jump_channels(kind, params):
    """Rank-one jump operators with their rates and post-jump kets."""
    n, drive, hot, cold = _channels(kind)
    h = params.lam * drive
    raw = []  # (rate, nu, operator)
    if len(hot) == 1:
        raw.append((params.gamma_h * (params.n_h + 1), 0, hot[0]))
        raw.append((params.gamma_h * params.n_h, 0, hot[0].conj().T))
    else:
        # diagonalize the hot-bath cross-coupling matrix [[1, p], [p, 1]]
        a1, a2 = hot
        for sign in (+1, -1):
            weight = 1 + sign * params.p
            op = (a1 + sign * a2) / math.sqrt(2)
            raw.append((params.gamma_h * (params.n_h + 1) * weight, 0, op))
            raw.append((params.gamma_h * params.n_h * weight, 0, op.conj().T))
    raw.append((params.gamma_c * (params.n_c + 1), +1, cold))
    raw.append((params.gamma_c * params.n_c, -1, cold.conj().T))

    kets, channels = [], []
    heff = h.astype(complex)
    for rate, nu, op in raw:
        if rate <= 0:
            continue
        heff = heff - 0.5j * rate * (op.conj().T @ op)
        # op = |u><v| with unit |u>: read u from the nonzero column
        col = int(np.argmax(np.linalg.norm(op, axis=0)))
        u = op[:, col] / np.linalg.norm(op[:, col])
        v = (u.conj() @ op).conj()
        for i, k in enumerate(kets):
            if abs(abs(np.vdot(k, u)) - 1) < 1e-12:
                target = i
                break
        else:
            kets.append(u)
            target = len(kets) - 1
        channels.append(_Channel(rate, nu, target, v))
    return heff, kets, channels


class _WaitingTable:
    """Survival function of the no-jump evolution started from one ket."""

    TAYLOR_ORDER = 10

    def __init__(self, heff, ket, bras, rates, max_points=2_000_000):
        self.heff = heff
        norm = np.abs(heff).sum(axis=1).max()
        self.dt = 0.05 / norm
        self.bras = np.array(bras)
        self.rates = np.asarray(rates)
        step = self._propagator(self.dt)
        psi = [ket.astype(complex)]
        surv = [1.0]
        while surv[-1] > 1e-14 and len(surv) < max_points:
            nxt = step @ psi[-1]
            s = float(np.vdot(nxt, nxt).real)
            if len(surv) > 1000 and surv[-1] - s < 1e-16 * surv[-1]:
                break  # dark component: survival has plateaued
            psi.append(nxt)
            surv.append(s)
        self.psi = np.array(psi)
        self.surv = np.array(surv)
        self.floor = surv[-1] if surv[-1] > 1e-14 else 0.0

    def _propagator(self, t):
        return self._taylor(np.asarray([t]))[0]

    def _taylor(self, tau):
        a = -1j * self.heff
        out = np.broadcast_to(np.eye(a.shape[0], dtype=complex), tau.shape + a.shape).copy()
        term = out.copy()
        for k in range(1, self.TAYLOR_ORDER + 1):
            term = term @ a * (tau[:, None, None] / k)
            out = out + term
        return out

    def hazards(self, psi):
        amp = psi @ self.bras.conj().T
        return self.rates * np.abs(amp) ** 2

    def sample(self, r):
        """Waiting times for uniform draws ``r``; ``inf`` if no jump happens."""
        t = np.full(r.shape, np.inf)
        psi_out = np.zeros(r.shape + self.psi.shape[1:], dtype=complex)
        ok = r > self.floor
        if not np.any(ok):
            return t, psi_out
        rr = r[ok]
        # surv is non-increasing: find i with surv[i] >= r > surv[i+1]
        i = np.searchsorted(-self.surv, -rr, side="left") - 1
        i = np.clip(i, 0, len(self.surv) - 2)
        base = self.psi[i]
        lo, hi = np.zeros_like(rr), np.full_like(rr, self.dt)
        s0, s1 = self.surv[i], self.surv[i + 1]
        tau = self.dt * np.clip((s0 - rr) / np.maximum(s0 - s1, 1e-300), 0, 1)
        for _ in range(30):
            psi = np.einsum("nij,nj->ni", self._taylor(tau), base)
            s = np.einsum("ni,ni->n", psi.conj(), psi).real
            f = s - rr
            lo = np.where(f > 0, tau, lo)
            hi = np.where(f > 0, hi, tau)
            deriv = -self.hazards(psi).sum(axis=1)
            newton = tau - f / np.where(deriv < 0, deriv, -1e-300)
            inside = (newton > lo) & (newton < hi)
            tau_new = np.where(inside, newton, 0.5 * (lo + hi))
            if np.all(np.abs(tau_new - tau) <= 1e-15 * self.dt + 1e-14 * tau):
                tau = tau_new
                break
            tau = tau_new
        psi = np.einsum("nij,nj->ni", self._taylor(tau), base)
        t[ok] = i * self.dt + tau
        psi_out[ok] = psi
        return t, psi_out


def spectral_gap(kind, params: EngineParams) -> float:
    """Smallest decay rate among the nonzero eigenvalues of the untilted generator."""
    w = np.linalg.eigvals(generator_stack(kind, params, 0.0))
    w = w[np.argsort(-w.real)]
    return float(-w[1].real)


BLOCK = 1000


def _simulate_block(tables, channels, start_probs, burn, horizon, n, rng):
    nu = np.array([c.nu for c in channels])
    target = np.array([c.target for c in channels])
    state = rng.choice(len(tables), size=n, p=start_probs)
    clock = np.zeros(n)
    counts = np.zeros(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    end = burn + horizon
    while np.any(active):
        idx = np.flatnonzero(active)
        u_wait = rng.random(idx.size)
        u_chan = rng.random(idx.size)
        current = state[idx]  # snapshot: each trajectory makes one jump per round
        for s, table in enumerate(tables):
            sel = current == s
            if not np.any(sel):
                continue
            who = idx[sel]
            wait, psi = table.sample(1.0 - u_wait[sel])
            when = clock[who] + wait
            jumped = when <= end
            finished = who[~jumped]
            active[finished] = False
            who, psi, when, uc = who[jumped], psi[jumped], when[jumped], u_chan[sel][jumped]
            if who.size == 0:
                continue
            haz = table.hazards(psi)
            cdf = np.cumsum(haz, axis=1)
            cdf /= cdf[:, -1:]
            pick = np.minimum((uc[:, None] > cdf).sum(axis=1), len(channels) - 1)
            counted = when > burn
            counts[who] += np.where(counted, nu[pick], 0)
            clock[who] = when
            state[who] = target[pick]
    return counts


def trajectory_cumulants(kind, params: EngineParams, horizon: float | None = None,
                         n_traj: int = 10_000, seed: int = 0, workers: int = 1) -> Cumulants:
    """Monte Carlo estimate of the current cumulants by quantum-jump unraveling.

    Each trajectory is a sequence of exact waiting times drawn from the
    survival function of the non-Hermitian no-jump evolution; every jump
    lands on a fixed ket, so one survival table per ket suffices.  Net
    cold-bath emissions are counted over ``horizon`` after a burn-in of
    twenty relaxation times.  Trajectories are processed in blocks of
    ``BLOCK`` seeded by ``(seed, block)``, so results do not depend on
    ``workers``.
    """
    kind = ModelKind.parse(kind)
    if not isinstance(params, EngineParams):
        params = EngineParams(**params)
    if n_traj < 2:
        raise InvalidParams("n_traj", f"need at least 2 trajectories, got {n_traj}")
    gap = spectral_gap(kind, params)
    relax = 1.0 / gap if gap > 0 else math.inf
    if horizon is None:
        horizon = 100.0 * relax
    if not relax <= horizon / 10:
        raise InsufficientHorizon(f"relaxation time {relax:.3g} exceeds horizon/10 = {horizon / 10:.3g}")

    heff, kets, channels = _jump_channels(kind, params)
    tables = [_WaitingTable(heff, k, [c.bra for c in channels], [c.rate for c in channels])
              for k in kets]
    start = np.full(len(kets), 1.0 / len(kets))
    burn = 20.0 * relax

    sizes = [BLOCK] * (n_traj // BLOCK) + ([n_traj % BLOCK] if n_traj % BLOCK else [])

    def run(b):
        rng = np.random.default_rng([seed, b])
        return _simulate_block(tables, channels, start, burn, horizon, sizes[b], rng)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(b) for b in range(len(sizes))]
    counts = np.concatenate(parts).astype(float)

    n = counts.size
    mean = counts.mean()
    dev = counts - mean
    m2 = (dev**2).sum() / (n - 1)
    m4 = (dev**4).mean()
    var_se = math.sqrt(max(m4 - m2**2 * (n - 3) / (n - 1), 0.0) / n)
    return Cumulants(mean / horizon, m2 / horizon, Method.TRAJECTORY,
                     {"horizon": horizon, "n_traj": n, "seed": seed, "burn_in": burn,
                      "current_se": math.sqrt(m2 / n) / horizon, "variance_se": var_se / horizon})


# ---------------------------------------------------------------------------

def cumulants(kind, params: EngineParams, method="charpoly", **options) -> Cumulants:
    method = Method.parse(method)
    if method is Method.EIG_FD:
        return cumulants_eig_fd(kind, params, **options)
    if method is Method.CHARPOLY:
        return cumulants_charpoly(kind, params, **options)
    if method is Method.RESOLVENT:
        return cumulants_resolvent(kind, params)
    return trajectory_cumulants(kind, params, **options)


def cumulants_stack(kind, params, method="resolvent", step=DEFAULT_STEP):
    """Real ``(current, variance)`` arrays for a batch of parameter points.

    The resolvent route is vectorized; the precise eigenvalue and
    characteristic-polynomial routes run point by point.
    """
    method = Method.parse(method)
    if method is Method.RESOLVENT:
        cur, var = resolvent_stack(kind, params)
        return cur.real, var.real
    if method is Method.TRAJECTORY:
        raise InvalidParams("method", "trajectory estimates are not available in batch form")
    arrays = _as_arrays(params)
    shape = np.broadcast_shapes(*(v.shape for v in arrays.values()))
    flat = {k: np.broadcast_to(v, shape).ravel() for k, v in arrays.items()}
    cur, var = np.empty(flat["lam"].size), np.empty(flat["lam"].size)
    route = cumulants_eig_fd if method is Method.EIG_FD else cumulants_charpoly
    for i in range(cur.size):
        point = EngineParams(**{k: float(v[i]) for k, v in flat.items()})
        res = route(kind, point, step)
        cur[i], var[i] = res.current, res.variance
    return cur.reshape(shape), var.reshape(shape)


def current_model1_closed_form(params: EngineParams) -> float:
    from .closed_forms import current_model1

    return current_model1(params)
