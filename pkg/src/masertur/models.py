"""Vectorized Lindblad generators for the three maser heat-engine variants.

Every generator is assembled from the Lindblad dissipators on the full
Hilbert space and then restricted to the invariant block that holds the
populations and the coherences driven by the field.  The restriction is
exact: the dropped coherences never feed back into the kept block.

Units are natural (hbar = k_B = 1).  Counted jumps into the cold bath are
dressed with ``exp(-1j * chi * nu)`` where ``nu = +1`` for emission into the
bath and ``nu = -1`` for absorption from it.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import DegenerateKernel, InvalidParams

KERNEL_TOL = 1e-8
PARAM_NAMES = ("gamma_h", "gamma_c", "lam", "n_h", "n_c", "p")


class ModelKind(str, Enum):
    THREE_LEVEL_I = "I"
    THREE_LEVEL_II = "II"
    FOUR_LEVEL_NIC = "NIC"

    @classmethod
    def parse(cls, value: "str | ModelKind") -> "ModelKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {
            "i": cls.THREE_LEVEL_I, "1": cls.THREE_LEVEL_I, "threelevel_i": cls.THREE_LEVEL_I,
            "threeleveli": cls.THREE_LEVEL_I,
            "ii": cls.THREE_LEVEL_II, "2": cls.THREE_LEVEL_II, "threelevel_ii": cls.THREE_LEVEL_II,
            "threelevelii": cls.THREE_LEVEL_II,
            "nic": cls.FOUR_LEVEL_NIC, "fourlevelnic": cls.FOUR_LEVEL_NIC,
            "four_level_nic": cls.FOUR_LEVEL_NIC, "4": cls.FOUR_LEVEL_NIC,
        }
        try:
            return aliases[key]
        except KeyError:
            raise InvalidParams("model", f"unknown model kind {value!r} (use I, II or NIC)") from None

    @property
    def dim(self) -> int:
        return 10 if self is ModelKind.FOUR_LEVEL_NIC else 5


def _check_finite(name, value):
    if not math.isfinite(value):
        raise InvalidParams(name, f"must be finite, got {value!r}")


@dataclass(frozen=True)
class EngineParams:
    """Full input of every computation.

    ``lam`` is the matter-field coupling (``lambda`` in serialized form).
    ``p`` is the noise-induced coherence parameter and is only read by the
    four-level model.
    """

    gamma_h: float
    gamma_c: float
    lam: float
    n_h: float
    n_c: float
    p: float = 0.0

    def __post_init__(self):
        for name in PARAM_NAMES:
            value = getattr(self, name)
            try:
                value = float(value)
            except (TypeError, ValueError):
                raise InvalidParams(name, f"not a number: {value!r}") from None
            _check_finite(name, value)
            object.__setattr__(self, name, value)
        if self.gamma_h <= 0:
            raise InvalidParams("gamma_h", f"must be > 0, got {self.gamma_h}")
        if self.gamma_c <= 0:
            raise InvalidParams("gamma_c", f"must be > 0, got {self.gamma_c}")
        if self.lam < 0:
            raise InvalidParams("lambda", f"must be >= 0, got {self.lam}")
        if self.n_h < 0:
            raise InvalidParams("n_h", f"must be >= 0, got {self.n_h}")
        if self.n_c < 0:
            raise InvalidParams("n_c", f"must be >= 0, got {self.n_c}")
        if not -1.0 <= self.p <= 1.0:
            raise InvalidParams("p", f"must lie in [-1, 1], got {self.p}")

    def replace(self, **changes) -> "EngineParams":
        values = asdict(self)
        values.update(changes)
        return EngineParams(**values)

    def scaled_rates(self, k: float) -> "EngineParams":
        """Multiply both bath couplings and the field coupling by ``k``."""
        return self.replace(gamma_h=k * self.gamma_h, gamma_c=k * self.gamma_c, lam=k * self.lam)

    def scaled_occupations(self, s: float) -> "EngineParams":
        return self.replace(n_h=s * self.n_h, n_c=s * self.n_c)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return {k: d[k] for k in ("gamma_h", "gamma_c", "lambda", "n_h", "n_c", "p")}


@dataclass(frozen=True)
class LevelFrequencies:
    omega_h: float
    omega_c: float

    def __post_init__(self):
        _check_finite("omega_h", self.omega_h)
        _check_finite("omega_c", self.omega_c)
        if self.omega_c <= 0:
            raise InvalidParams("omega_c", f"must be > 0, got {self.omega_c}")
        if self.omega_h <= self.omega_c:
            raise InvalidParams("omega_h", f"must exceed omega_c={self.omega_c}, got {self.omega_h}")

    @property
    def quantum(self) -> float:
        """Work delivered per photon cycled through the engine."""
        return self.omega_h - self.omega_c


def occupation(omega: float, T: float) -> float:
    """Bose-Einstein occupation ``1/(exp(omega/T) - 1)``."""
    _check_finite("omega", omega)
    _check_finite("T", T)
    if omega <= 0:
        raise InvalidParams("omega", f"must be > 0, got {omega}")
    if T <= 0:
        raise InvalidParams("T", f"must be > 0, got {T}")
    x = omega / T
    if x > 700.0:
        return 0.0
    return 1.0 / math.expm1(x)


# ---------------------------------------------------------------------------
# Superoperator building blocks (column-stacking vectorization)

def _proj(n, i, j):
    m = np.zeros((n, n), dtype=complex)
    m[i, j] = 1.0
    return m


def _spre(a):
    return np.kron(np.eye(a.shape[0]), a)


def _spost(b):
    return np.kron(b.T, np.eye(b.shape[0]))


def _jump(li, lj):
    """Superoperator of ``rho -> li rho lj^dag``."""
    return np.kron(lj.conj(), li)


def _anticomm(li, lj):
    """Superoperator of ``rho -> -1/2 {lj^dag li, rho}``."""
    k = lj.conj().T @ li
    return -0.5 * (_spre(k) + _spost(k))


def _commutator(h):
    return -1j * (_spre(h) - _spost(h))


class _Term(NamedTuple):
    name: str
    rate: str  # key into the coefficient table
    nu: int  # counted increment; 0 means not counted
    unit: np.ndarray


# (hilbert dimension, level labels, kept basis as (bra-index, ket-index) pairs)
_LEVELS = {
    ModelKind.THREE_LEVEL_I: ("g", "0", "1"),
    ModelKind.THREE_LEVEL_II: ("g", "0", "1"),
    ModelKind.FOUR_LEVEL_NIC: ("g", "0", "1", "2"),
}
_BASIS = {
    ModelKind.THREE_LEVEL_I: ("gg", "00", "11", "10", "01"),
    ModelKind.THREE_LEVEL_II: ("gg", "00", "11", "g0", "0g"),
    ModelKind.FOUR_LEVEL_NIC: ("gg", "00", "11", "22", "12", "21", "10", "01", "20", "02"),
}


def basis_labels(kind: ModelKind) -> tuple:
    return tuple(f"rho_{b}" for b in _BASIS[ModelKind.parse(kind)])


def _channels(kind):
    """Jump operators and coherent drive on the full Hilbert space."""
    levels = _LEVELS[kind]
    n = len(levels)
    at = {lab: i for i, lab in enumerate(levels)}

    def op(a, b):
        return _proj(n, at[a], at[b])

    if kind is ModelKind.THREE_LEVEL_I:
        drive = op("1", "0") + op("0", "1")
        hot = [op("g", "1")]
        cold = op("g", "0")
    elif kind is ModelKind.THREE_LEVEL_II:
        drive = op("0", "g") + op("g", "0")
        hot = [op("g", "1")]
        cold = op("0", "1")
    else:
        drive = op("1", "0") + op("2", "0") + op("0", "1") + op("0", "2")
        hot = [op("g", "1"), op("g", "2")]
        cold = op("g", "0")
    return n, drive, hot, cold


@lru_cache(maxsize=None)
def _terms(kind: ModelKind):
    n, drive, hot, cold = _channels(kind)
    terms = [_Term("drive", "lam", 0, _commutator(drive))]
    for a in hot:
        terms.append(_Term("hot_emission", "hot_em", 0, _jump(a, a) + _anticomm(a, a)))
        b = a.conj().T
        terms.append(_Term("hot_absorption", "hot_abs", 0, _jump(b, b) + _anticomm(b, b)))
    if len(hot) == 2:
        a1, a2 = hot
        cross_em = (_jump(a1, a2) + _anticomm(a1, a2)) + (_jump(a2, a1) + _anticomm(a2, a1))
        b1, b2 = a1.conj().T, a2.conj().T
        cross_abs = (_jump(b1, b2) + _anticomm(b1, b2)) + (_jump(b2, b1) + _anticomm(b2, b1))
        terms.append(_Term("hot_cross_emission", "cross_em", 0, cross_em))
        terms.append(_Term("hot_cross_absorption", "cross_abs", 0, cross_abs))
    up = cold.conj().T
    terms.append(_Term("cold_emission_jump", "cold_em", +1, _jump(cold, cold)))
    terms.append(_Term("cold_emission_decay", "cold_em", 0, _anticomm(cold, cold)))
    terms.append(_Term("cold_absorption_jump", "cold_abs", -1, _jump(up, up)))
    terms.append(_Term("cold_absorption_decay", "cold_abs", 0, _anticomm(up, up)))

    levels = _LEVELS[kind]
    at = {lab: i for i, lab in enumerate(levels)}
    keep = [at[b[1]] * n + at[b[0]] for b in _BASIS[kind]]
    drop = [k for k in range(n * n) if k not in keep]
    restricted = []
    for t in terms:
        if np.abs(t.unit[np.ix_(drop, keep)]).max() > 0:
            raise AssertionError(f"{kind}: kept block not invariant under {t.name}")
        u = np.ascontiguousarray(t.unit[np.ix_(keep, keep)])
        restricted.append(t._replace(unit=u))
    return tuple(restricted)


def population_mask(kind: ModelKind) -> np.ndarray:
    """Left functional whose action on the state vector gives the trace."""
    return np.array([b[0] == b[1] for b in _BASIS[ModelKind.parse(kind)]], dtype=float)


def _as_arrays(params) -> dict:
    if isinstance(params, EngineParams):
        return {k: np.asarray(getattr(params, k), dtype=float) for k in PARAM_NAMES}
    out = {}
    for k in PARAM_NAMES:
        v = params.get(k)
        if v is None and k == "lam":
            v = params.get("lambda")
        if v is None and k == "p":
            v = 0.0
        out[k] = np.asarray(v, dtype=float)
    return out


def _rates(kind, a, spontaneous=True):
    em = 1.0 if spontaneous else 0.0
    rates = {
        "lam": a["lam"],
        "hot_em": a["gamma_h"] * (a["n_h"] + em),
        "hot_abs": a["gamma_h"] * a["n_h"],
        "cold_em": a["gamma_c"] * (a["n_c"] + em),
        "cold_abs": a["gamma_c"] * a["n_c"],
    }
    if kind is ModelKind.FOUR_LEVEL_NIC:
        rates["cross_em"] = a["p"] * rates["hot_em"]
        rates["cross_abs"] = a["p"] * rates["hot_abs"]
    return rates


def _coefficient_matrix(kind, params, spontaneous=True):
    a = _as_arrays(params)
    shape = np.broadcast_shapes(*(v.shape for v in a.values()))
    rates = _rates(kind, a, spontaneous)
    return np.stack([np.broadcast_to(rates[t.rate], shape) for t in _terms(kind)], axis=-1)


def generator_stack(kind, params, chi=0.0, *, spontaneous=True) -> np.ndarray:
    """Tilted generators for a batch of parameter points.

    ``params`` is an :class:`EngineParams` or a mapping of broadcastable
    arrays keyed by :data:`PARAM_NAMES`.  Returns an array of shape
    ``batch + (dim, dim)``.  ``chi`` may itself be an array broadcastable
    against the batch.
    """
    kind = ModelKind.parse(kind)
    terms = _terms(kind)
    coef = _coefficient_matrix(kind, params, spontaneous).astype(complex)
    nu = np.array([t.nu for t in terms])
    chi = np.asarray(chi, dtype=float)
    phase = np.exp(-1j * chi[..., None] * nu)
    units = np.stack([t.unit for t in terms])
    return np.einsum("...t,tij->...ij", coef * phase, units)


def counting_derivatives(kind, params, order: int) -> np.ndarray:
    """``(i d/dchi)**order`` of the tilted generator at ``chi = 0``."""
    kind = ModelKind.parse(kind)
    terms = _terms(kind)
    coef = _coefficient_matrix(kind, params).astype(complex)
    nu = np.array([t.nu for t in terms], dtype=float)
    units = np.stack([t.unit for t in terms])
    return np.einsum("...t,tij->...ij", coef * nu**order, units)


def counting_split(kind, params) -> tuple:
    """Split the generator as ``rest + exp(-i chi) emission + exp(i chi) absorption``.

    ``emission`` and ``absorption`` are real and hold only the counted cold
    jump entries; ``rest`` carries everything that does not depend on chi.
    """
    kind = ModelKind.parse(kind)
    terms = _terms(kind)
    coef = _coefficient_matrix(kind, params).astype(complex)
    units = np.stack([t.unit for t in terms])
    nu = np.array([t.nu for t in terms])
    parts = [np.einsum("...t,tij->...ij", coef * (nu == v), units) for v in (0, 1, -1)]
    return parts[0], parts[1].real.copy(), parts[2].real.copy()


def coherence_coupling(kind, params) -> np.ndarray:
    """Derivative of the generator with respect to ``p`` (zero for three-level kinds).

    ``p`` enters only through the hot-bath cross terms, linearly, so the
    generator equals ``counting_split(params with p=0)`` plus ``p`` times this.
    """
    kind = ModelKind.parse(kind)
    terms = _terms(kind)
    a = _as_arrays(params)
    rates = _rates(kind, a)
    shape = np.broadcast_shapes(*(v.shape for v in a.values()))
    per_p = {"cross_em": rates["hot_em"], "cross_abs": rates["hot_abs"]}
    coef = np.stack([np.broadcast_to(per_p.get(t.rate, 0.0), shape) for t in terms], axis=-1)
    units = np.stack([t.unit for t in terms])
    return np.einsum("...t,tij->...ij", coef.astype(complex), units)


@dataclass(frozen=True)
class TiltedLiouvillian:
    kind: ModelKind
    chi: float
    entries: np.ndarray = field(repr=False)
    basis: tuple = ()

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def to_json(self) -> str:
        rows = [[[float(z.real), float(z.imag)] for z in row] for row in self.entries]
        return json.dumps({"kind": self.kind.value, "chi": self.chi, "basis": list(self.basis),
                           "entries": rows})


def build_tilted_liouvillian(kind, params: EngineParams, chi: float = 0.0, *,
                             spontaneous: bool = True) -> TiltedLiouvillian:
    """Generator of one engine dressed with the cold-bath counting field.

    ``spontaneous=False`` replaces every ``Gamma (n + 1)`` rate with
    ``Gamma n``, which is the high-temperature form of the dynamics.
    """
    kind = ModelKind.parse(kind)
    if not isinstance(params, EngineParams):
        params = EngineParams(**params)
    chi = float(chi)
    _check_finite("chi", chi)
    m = generator_stack(kind, params, chi, spontaneous=spontaneous)
    return TiltedLiouvillian(kind, chi, m, basis_labels(kind))


@dataclass(frozen=True)
class DensityVector:
    kind: ModelKind
    components: np.ndarray = field(repr=False)
    basis: tuple = ()

    @property
    def populations(self) -> np.ndarray:
        return self.components[population_mask(self.kind) > 0].real

    def __getitem__(self, label: str) -> complex:
        if not label.startswith("rho_"):
            label = "rho_" + label
        return self.components[self.basis.index(label)]

    def violations(self, tol: float = 1e-10) -> list:
        """Physicality checks that fail for this vector (empty when fine)."""
        bad = []
        pops = self.populations
        if np.any(pops < -tol) or np.any(pops > 1 + tol):
            bad.append("population outside [0, 1]")
        if abs(pops.sum() - 1.0) > tol:
            bad.append("populations do not sum to 1")
        labels = [b[4:] for b in self.basis]
        for i, lab in enumerate(labels):
            if lab[0] == lab[1]:
                continue
            j = labels.index(lab[::-1])
            if abs(self.components[i] - np.conj(self.components[j])) > tol:
                bad.append(f"rho_{lab} is not the conjugate of rho_{lab[::-1]}")
            a, b = self[lab[0] * 2].real, self[lab[1] * 2].real
            if abs(self.components[i]) ** 2 > a * b + tol:
                bad.append(f"|rho_{lab}|^2 exceeds the population product")
        return bad

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind.value, "basis": list(self.basis),
                           "components": [[float(z.real), float(z.imag)] for z in self.components]})


def steady_state_stack(generators: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Null vectors of a stack of untilted generators, normalized to unit trace.

    The first population row is redundant (columns of a trace-preserving
    generator sum to zero over populations) and is replaced by the trace row.
    """
    m = np.array(generators, dtype=complex, copy=True)
    m[..., 0, :] = mask
    rhs = np.zeros(m.shape[:-1], dtype=complex)
    rhs[..., 0] = 1.0
    return np.linalg.solve(m, rhs[..., None])[..., 0]


def kernel_dimension(matrix: np.ndarray, tol: float = KERNEL_TOL) -> int:
    s = np.linalg.svd(matrix, compute_uv=False)
    return int(np.sum(s <= tol * max(s[0], 1e-300)))


def steady_state(kind, params: EngineParams) -> DensityVector:
    """Unique stationary state of the untilted generator."""
    kind = ModelKind.parse(kind)
    l0 = generator_stack(kind, params, 0.0)
    nullity = kernel_dimension(l0)
    if nullity > 1:
        raise DegenerateKernel(f"{kind.value}: stationary subspace has dimension {nullity}")
    rho = steady_state_stack(l0, population_mask(kind))
    rho = _symmetrize(kind, rho)
    return DensityVector(kind, rho, basis_labels(kind))


def _symmetrize(kind, rho):
    """Enforce the exact conjugate structure removed by roundoff."""
    labels = _BASIS[kind]
    out = rho.copy()
    for i, lab in enumerate(labels):
        if lab[0] == lab[1]:
            out[..., i] = rho[..., i].real
        else:
            j = labels.index(lab[::-1])
            out[..., i] = 0.5 * (rho[..., i] + np.conj(rho[..., j]))
    return out


def cold_current_stack(kind, params, rho: np.ndarray, *, stationary: bool = True) -> np.ndarray:
    """Net emission rate into the cold bath for states ``rho``.

    The cold-dissipator flux is a difference of nearly equal population
    fluxes when the current is small compared to the bath rates.  For
    stationary states the balance of level ``0`` moves it onto the drive
    coherences, which carries no cancellation; ``stationary=False`` reads
    the dissipator flux directly and is valid for any state.
    """
    kind = ModelKind.parse(kind)
    d1 = counting_derivatives(kind, params, 1)
    mask = population_mask(kind)
    flux = np.einsum("j,...jk->...k", mask, d1)
    if stationary:
        l0 = generator_stack(kind, params, 0.0)
        row = _BASIS[kind].index("00")
        sign = np.sign(flux[..., row].real * l0[..., row, row].real)
        flux = flux - sign[..., None] * l0[..., row, :]
        # population entries cancel exactly; drop the rounding residue
        flux = np.where(mask.astype(bool), 0.0, flux)
    return np.einsum("...k,...k->...", flux, rho).real


def cold_current_from_state(kind, params: EngineParams, state: DensityVector) -> float:
    return float(cold_current_stack(kind, params, state.components))


def params_to_arrays(points: Sequence[EngineParams]) -> dict:
    return {k: np.array([getattr(q, k) for q in points], dtype=float) for k in PARAM_NAMES}


def validate_arrays(a: Mapping[str, np.ndarray]) -> np.ndarray:
    """Boolean mask of rows satisfying the :class:`EngineParams` invariants."""
    ok = np.ones(np.broadcast_shapes(*(np.shape(v) for v in a.values())), dtype=bool)
    ok &= np.asarray(a["gamma_h"]) > 0
    ok &= np.asarray(a["gamma_c"]) > 0
    ok &= np.asarray(a["lam"]) >= 0
    ok &= np.asarray(a["n_h"]) >= 0
    ok &= np.asarray(a["n_c"]) >= 0
    ok &= np.abs(np.asarray(a["p"])) <= 1
    for v in a.values():
        ok &= np.isfinite(v)
    return ok
