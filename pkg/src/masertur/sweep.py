"""Randomized and gridded parameter exploration.

Random draws follow a counter-based scheme: sample ``i`` of seed ``s`` uses
words ``8i .. 8i+7`` of the Philox stream keyed by ``s``.  Any index range
can therefore be generated independently, results do not depend on how the
work is split, and a larger sample set always contains the smaller one.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._io import csv_line, dumps, metadata_lines
from .errors import InvalidParams, MaserTurError
from .fcs import Method, cumulants_stack
from .models import PARAM_NAMES, EngineParams, ModelKind, validate_arrays
from .observables import CSV_COLUMNS, EPS_CURRENT, q_from_cumulants, tur_q

log = logging.getLogger(__name__)

WORDS_PER_SAMPLE = 8
CHUNK = 20_000
MAX_EXEMPLARS = 5

# default sampling box for histograms; p has its own law, see SweepSpec.
FIG3_RANGES = {
    "gamma_h": (1e-4, 5.0),
    "gamma_c": (1e-4, 5.0),
    "lam": (1e-4, 1.0),
    "n_h": (0.0, 10.0),
    "n_c": (0.0, 10.0),
}
NIC_P_RANGE = (-0.999, 0.999)


@dataclass(frozen=True)
class SweepSpec:
    """What to sample.  Parameters absent from ``ranges`` and ``fixed`` default to
    the histogram sampling box ``FIG3_RANGES``, with ``p`` uniform on ``NIC_P_RANGE`` for the four-level model
    and 0 otherwise."""

    kind: ModelKind
    count: int
    seed: int = 0
    ranges: dict = field(default_factory=dict)
    fixed: dict = field(default_factory=dict)
    bin_width: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind.parse(self.kind))
        if int(self.count) != self.count or self.count < 0:
            raise InvalidParams("count", f"must be a non-negative integer, got {self.count}")
        if not self.bin_width > 0:
            raise InvalidParams("bin_width", f"must be > 0, got {self.bin_width}")
        if not 0 <= self.seed < 2**64:
            raise InvalidParams("seed", f"must lie in [0, 2**64), got {self.seed}")
        ranges = {}
        for name in PARAM_NAMES:
            key = "lambda" if name == "lam" else name
            if name in self.fixed or key in self.fixed:
                continue
            lo, hi = self.ranges.get(name, self.ranges.get(key, self.default_range(name)))
            if not lo <= hi:
                raise InvalidParams(key, f"empty range [{lo}, {hi}]")
            ranges[name] = (float(lo), float(hi))
        probe = {k: np.array([v[0], v[1]]) for k, v in ranges.items()}
        probe.update({("lam" if k == "lambda" else k): np.array([float(v)] * 2)
                      for k, v in self.fixed.items()})
        for name in PARAM_NAMES:
            probe.setdefault(name, np.zeros(2))
        if not validate_arrays(probe).all():
            raise InvalidParams("ranges", "range endpoints outside the admissible parameter set")
        object.__setattr__(self, "ranges", ranges)
        object.__setattr__(self, "fixed", {("lam" if k == "lambda" else k): float(v)
                                           for k, v in self.fixed.items()})

    def default_range(self, name):
        if name == "p":
            return NIC_P_RANGE if self.kind is ModelKind.FOUR_LEVEL_NIC else (0.0, 0.0)
        return FIG3_RANGES[name]

    def as_dict(self) -> dict:
        return {"kind": self.kind.value, "count": self.count, "seed": self.seed,
                "ranges": {("lambda" if k == "lam" else k): list(v) for k, v in self.ranges.items()},
                "fixed": {("lambda" if k == "lam" else k): v for k, v in self.fixed.items()},
                "bin_width": self.bin_width}


def sample_params(spec: SweepSpec, start: int = 0, stop: int | None = None) -> dict:
    """Parameter arrays for samples ``start .. stop-1`` (default: all)."""
    stop = spec.count if stop is None else min(stop, spec.count)
    n = max(stop - start, 0)
    bits = np.random.Philox(key=spec.seed)
    bits.advance(start * WORDS_PER_SAMPLE // 4)
    raw = bits.random_raw(n * WORDS_PER_SAMPLE).reshape(n, WORDS_PER_SAMPLE)
    u = (raw >> np.uint64(11)).astype(float) * 2.0**-53
    out = {}
    for j, name in enumerate(PARAM_NAMES):
        if name in spec.fixed:
            out[name] = np.full(n, spec.fixed[name])
        else:
            lo, hi = spec.ranges[name]
            out[name] = lo + (hi - lo) * u[:, j]
    return out


def iter_params(spec: SweepSpec):
    """The same draws as :func:`sample_params`, one :class:`EngineParams` at a time."""
    for start in range(0, spec.count, CHUNK):
        block = sample_params(spec, start, start + CHUNK)
        for i in range(len(block["lam"])):
            yield EngineParams(**{k: float(v[i]) for k, v in block.items()})


@dataclass
class Histogram:
    bin_width: float
    origin: float
    first_bin: int  # index of counts[0]; bin k covers [origin + k w, origin + (k+1) w)
    counts: np.ndarray
    total: int
    requested: int
    min_value: float
    max_value: float
    violation_fraction: float
    exclusions: dict
    argmin: dict | None = None
    exemplars: list = field(default_factory=list)

    def edges(self) -> np.ndarray:
        k = self.first_bin + np.arange(len(self.counts) + 1)
        return self.origin + k * self.bin_width

    def below(self, threshold: float = 2.0) -> "Histogram":
        """Sub-histogram of bins lying entirely below ``threshold``."""
        edges = self.edges()
        keep = edges[1:] <= threshold + 1e-12
        counts = self.counts[keep]
        return Histogram(self.bin_width, self.origin, self.first_bin, counts, int(counts.sum()),
                         self.requested, self.min_value, min(self.max_value, threshold),
                         1.0 if counts.sum() else 0.0, {})

    def mass_within(self, lo: float, hi: float) -> float:
        """Share of samples in bins fully contained in ``[lo, hi]``."""
        edges = self.edges()
        inside = (edges[:-1] >= lo - 1e-12) & (edges[1:] <= hi + 1e-12)
        return float(self.counts[inside].sum()) / self.total if self.total else 0.0

    def to_csv(self, meta: dict | None = None) -> str:
        edges = self.edges()
        lines = [metadata_lines({**(meta or {}), **self._summary()}), "bin_left,bin_right,count\n"]
        lines += [csv_line((edges[i], edges[i + 1], int(c)))
                  for i, c in enumerate(self.counts) if c]
        return "".join(lines)

    def to_json(self, meta: dict | None = None) -> str:
        edges = self.edges()
        bins = [{"left": float(edges[i]), "right": float(edges[i + 1]), "count": int(c)}
                for i, c in enumerate(self.counts) if c]
        return dumps({"metadata": {**(meta or {}), **self._summary()}, "bins": bins})

    def _summary(self):
        return {"bin_width": self.bin_width, "origin": self.origin, "total": self.total,
                "requested": self.requested, "min_value": self.min_value,
                "max_value": self.max_value, "violation_fraction": self.violation_fraction,
                "exclusions": self.exclusions, "argmin": self.argmin}


def _q_chunk(kind, block, method):
    """q values and exclusion reasons for one block of samples."""
    n = len(block["lam"])
    reasons = np.full(n, "", dtype=object)
    ok = validate_arrays(block)
    reasons[~ok] = "invalid"
    reasons[ok & ((block["n_h"] <= 0) | (block["n_c"] <= 0))] = "zero_occupation"
    reasons[(reasons == "") & (block["n_h"] == block["n_c"])] = "threshold"
    try:
        with np.errstate(all="ignore"):
            cur, var = cumulants_stack(kind, block, method)
    except (np.linalg.LinAlgError, MaserTurError):
        # isolate the offending points instead of dropping the whole block
        cur, var = np.full(n, np.nan), np.full(n, np.nan)
        for i in range(n):
            point = {k: v[i:i + 1] for k, v in block.items()}
            try:
                with np.errstate(all="ignore"):
                    c, v = cumulants_stack(kind, point, method)
                cur[i], var[i] = c[0], v[0]
            except (np.linalg.LinAlgError, MaserTurError):
                if reasons[i] == "":
                    reasons[i] = "solver_failure"
    q = q_from_cumulants(cur, var, block["n_h"], block["n_c"])
    free = reasons == ""
    reasons[free & (np.abs(cur) <= EPS_CURRENT)] = "zero_current"
    reasons[(reasons == "") & ~(var > 0)] = "nonpositive_variance"
    reasons[(reasons == "") & ~np.isfinite(q)] = "non_finite"
    return q, reasons


def _histogram_part(args):
    spec, start, stop, method = args
    block = sample_params(spec, start, stop)
    q, reasons = _q_chunk(spec.kind, block, method)
    good = reasons == ""
    idx = np.floor(q[good] / spec.bin_width).astype(np.int64)
    bins, counts = np.unique(idx, return_counts=True)
    excl = {}
    exemplars = []
    for r in np.unique(reasons[~good]):
        where = np.flatnonzero(reasons == r)
        excl[str(r)] = int(where.size)
        for i in where[:MAX_EXEMPLARS]:
            exemplars.append({"index": int(start + i), "reason": str(r),
                              **{k: float(v[i]) for k, v in block.items()}})
    arg = None
    if good.any():
        i = int(np.flatnonzero(good)[np.argmin(q[good])])
        arg = {"index": int(start + i), "q": float(q[i]),
               **{k: float(v[i]) for k, v in block.items()}}
    mx = float(q[good].max()) if good.any() else -math.inf
    below = int((q[good] < 2.0).sum())
    return dict(zip(bins.tolist(), counts.tolist())), int(good.sum()), arg, mx, below, excl, exemplars


def q_histogram(spec: SweepSpec, method="resolvent", workers: int = 1,
                chunk: int = CHUNK) -> Histogram:
    """Histogram of the TUR ratio over ``spec.count`` random draws.

    Per-point failures are counted by reason and never abort the sweep; the
    bin merge is order independent, so ``workers`` does not change the result.
    """
    method = Method.parse(method)
    jobs = [(spec, s, min(s + chunk, spec.count), method) for s in range(0, spec.count, chunk)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_histogram_part, jobs))
    else:
        parts = [_histogram_part(j) for j in jobs]

    merged, total, below, mx = {}, 0, 0, -math.inf
    best, excl, exemplars = None, {}, []
    for bins, n, arg, part_max, part_below, part_excl, part_ex in parts:
        for b, c in bins.items():
            merged[b] = merged.get(b, 0) + c
        total += n
        below += part_below
        mx = max(mx, part_max)
        if arg is not None and (best is None or (arg["q"], arg["index"]) < (best["q"], best["index"])):
            best = arg
        for r, c in part_excl.items():
            excl[r] = excl.get(r, 0) + c
        exemplars.extend(part_ex)
    for ex in exemplars[:MAX_EXEMPLARS]:
        log.info("excluded sample %(index)d (%(reason)s)", ex)
    if merged:
        lo, hi = min(merged), max(merged)
        counts = np.zeros(hi - lo + 1, dtype=np.int64)
        for b, c in merged.items():
            counts[b - lo] = c
    else:
        lo, counts = 0, np.zeros(0, dtype=np.int64)
    return Histogram(spec.bin_width, 0.0, lo, counts, total, spec.count,
                     best["q"] if best else math.nan, mx if total else math.nan,
                     below / total if total else 0.0, dict(sorted(excl.items())), best,
                     exemplars[:MAX_EXEMPLARS])


# ---------------------------------------------------------------------------
# curves

CURVE_COLUMNS = ("x", "status") + CSV_COLUMNS


@dataclass
class Curve:
    label: str  # "lambda" or "p"
    xs: np.ndarray
    reports: list  # TurReport or None per abscissa
    failures: dict = field(default_factory=dict)  # index -> message

    @property
    def q(self) -> np.ndarray:
        return np.array([r.q if r is not None else np.nan for r in self.reports])

    @property
    def reliability(self) -> np.ndarray:
        return np.array([r.reliability if r is not None else np.nan for r in self.reports])

    def to_csv(self, meta: dict | None = None) -> str:
        lines = [metadata_lines({"abscissa": self.label, **(meta or {})}),
                 ",".join(CURVE_COLUMNS) + "\n"]
        for i, (x, rep) in enumerate(zip(self.xs, self.reports)):
            if rep is None:
                lines.append(csv_line([x, "degenerate"] + [""] * len(CSV_COLUMNS)))
            else:
                d = rep.as_dict()
                lines.append(csv_line([x, "ok"] + [d[c] for c in CSV_COLUMNS]))
        return "".join(lines)

    def reliability_csv(self, meta: dict | None = None) -> str:
        lines = [metadata_lines({"abscissa": self.label, **(meta or {})}), "x,reliability\n"]
        lines += [csv_line((x, r)) for x, r in zip(self.xs, self.reliability)]
        return "".join(lines)

    def to_json(self, meta: dict | None = None) -> str:
        points = []
        for i, (x, rep) in enumerate(zip(self.xs, self.reports)):
            entry = {"x": float(x)}
            if rep is None:
                entry["status"] = "degenerate"
                entry["message"] = self.failures.get(i, "")
            else:
                entry.update({"status": "ok", **rep.as_dict()})
            points.append(entry)
        return dumps({"metadata": {"abscissa": self.label, **(meta or {})}, "points": points})


def _curve(kind, base: EngineParams, name, grid, method):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or (grid.size > 1 and np.any(np.diff(grid) <= 0)):
        raise InvalidParams(name, "grid must be strictly increasing")
    reports, failures = [], {}
    for i, x in enumerate(grid):
        try:
            reports.append(tur_q(kind, base.replace(**{"lam" if name == "lambda" else name: float(x)}),
                                 method))
        except MaserTurError as exc:
            reports.append(None)
            failures[i] = str(exc)
    return Curve(name, grid, reports, failures)


def lambda_curve(kind, base: EngineParams, grid, method="charpoly") -> Curve:
    return _curve(ModelKind.parse(kind), base, "lambda", grid, method)


def p_curve(base: EngineParams, grid, method="charpoly") -> Curve:
    return _curve(ModelKind.FOUR_LEVEL_NIC, base, "p", grid, method)


def scaling_check(kind, params: EngineParams, ks=(0.1, 0.5, 2.0, 10.0), method="charpoly") -> float:
    """Largest ``|q(k Gh, k Gc, k lam) - q|`` over ``ks``."""
    ref = tur_q(kind, params, method).q
    return max((abs(tur_q(kind, params.scaled_rates(k), method).q - ref) for k in ks), default=0.0)
