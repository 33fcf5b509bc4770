"""Command-line front end: single points, figure datasets, sweeps and the self-check suite.

Exit codes: 0 success, 1 invalid input, 2 degenerate physics, 3 numeric
failure (including failed self-checks).
"""

from __future__ import annotations

import argparse
import datetime
import logging
import os
import shlex
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._io import csv_line, dumps, metadata_lines
from .errors import DegenerateKernel, DegenerateOperation, InvalidParams, MaserTurError
from .fcs import Method
from .models import EngineParams, LevelFrequencies, ModelKind
from .observables import CSV_COLUMNS, TurReport, tur_q
from .sweep import FIG3_RANGES, NIC_P_RANGE, SweepSpec, lambda_curve, p_curve, q_histogram

log = logging.getLogger(__name__)

EXIT_OK, EXIT_INVALID, EXIT_DEGENERATE, EXIT_NUMERIC = 0, 1, 2, 3
OUT_ENV = "MASERTUR_OUT"
DEFAULT_SEED = 20240501
DEFAULT_SAMPLES = 1_000_000
FIGURES = ("fig2", "fig3", "fig4", "fig5")

# parameter sets quoted with each figure
FIG2_BASE = EngineParams(gamma_h=0.1, gamma_c=2.0, lam=0.2, n_h=5.0, n_c=0.027)
FIG4_BASE = EngineParams(gamma_h=0.3, gamma_c=0.03, lam=0.3, n_h=6.0, n_c=3.0)
FIG4_P = (-0.945, 0.0, 0.7)
FIG5_BASE = EngineParams(gamma_h=0.6, gamma_c=0.4, lam=0.5, n_h=5.0, n_c=2.0)
FIG5_LAMBDAS = (1.0, 0.5, 0.15)
LAMBDA_SPAN = (0.005, 1.0)

FLAG_OF_FIELD = {"gamma_h": "--gamma-h", "gamma_c": "--gamma-c", "lam": "--lambda", "n_h": "--nh",
                 "n_c": "--nc", "p": "--p", "omega_h": "--omega-h", "omega_c": "--omega-c"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument errors are invalid input (exit 1), not argparse's default 2."""

    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    command: str
    kind: ModelKind | None = None
    params: dict = field(default_factory=dict)
    figure: str | None = None
    out: Path | None = None
    fmt: str = "csv"
    seed: int = DEFAULT_SEED
    method: Method | None = None
    workers: int = 1
    samples: int = DEFAULT_SAMPLES
    points: int | None = None
    vary: str | None = None
    span: tuple | None = None
    with_trajectory: bool = False
    freqs: LevelFrequencies | None = None
    argv: list = field(default_factory=list)


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value file; command-line flags override it")
    p.add_argument("--out", help=f"output path (default: ${OUT_ENV} or the current directory)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--method", choices=[m.value for m in Method],
                   help="counting-statistics route (default: charpoly; resolvent for histograms)")
    p.add_argument("-v", "--verbose", action="store_true")


def _physics(p: argparse.ArgumentParser, required: bool):
    p.add_argument("--model", required=required, help="I, II or NIC")
    p.add_argument("--gamma-h", type=float, required=required)
    p.add_argument("--gamma-c", type=float, required=required)
    p.add_argument("--lambda", dest="lam", type=float, required=required)
    p.add_argument("--nh", type=float, required=required)
    p.add_argument("--nc", type=float, required=required)
    p.add_argument("--p", type=float, default=0.0, help="noise-induced coherence, four-level model only")


def _sampling(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--samples", type=_positive_int, default=DEFAULT_SAMPLES)
    p.add_argument("--workers", type=_positive_int, default=os.cpu_count() or 1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="masertur", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ev = sub.add_parser("eval", help="TUR report at one parameter point")
    _physics(ev, required=True)
    ev.add_argument("--omega-h", type=float, help="hot transition frequency (adds power columns)")
    ev.add_argument("--omega-c", type=float, help="cold transition frequency")
    _common(ev)

    fig = sub.add_parser("figure", help="datasets behind one figure")
    fig.add_argument("figure", choices=FIGURES)
    fig.add_argument("--points", type=_positive_int, help="grid size of curve figures")
    _sampling(fig)
    _common(fig)

    sw = sub.add_parser("sweep", help="q along a lambda or p grid")
    _physics(sw, required=True)
    sw.add_argument("--vary", choices=("lambda", "p"), default="lambda")
    sw.add_argument("--start", type=float, required=True)
    sw.add_argument("--stop", type=float, required=True)
    sw.add_argument("--points", type=_positive_int, default=100)
    _common(sw)

    hist = sub.add_parser("histogram", help="q histogram over the default random ranges")
    hist.add_argument("--model", required=True)
    hist.add_argument("--bin-width", type=float, default=0.01)
    _sampling(hist)
    _common(hist)

    val = sub.add_parser("validate", help="self-check suite and closed-form discrepancy report")
    val.add_argument("--with-trajectory", action="store_true", help="add the Monte Carlo check")
    _common(val)
    return parser


# ---------------------------------------------------------------------------
# configuration

def read_config(path) -> list:
    """Turn ``key=value`` lines into flag tokens; ``#`` starts a comment."""
    tokens = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"--config: cannot read {path}: {exc.strerror}") from None
    for number, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"--config: line {number} is not key=value: {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("_", "-")
        if key in ("command", "figure"):
            tokens.append((key, value))
        elif value.lower() in ("true", "yes", "on"):
            tokens.append((None, f"--{key}"))
        elif value.lower() in ("false", "no", "off"):
            continue
        else:
            tokens.append((None, f"--{key}={value}"))
    return tokens


def _expand_config(argv: list) -> list:
    """Place config-file flags before the command-line flags so the latter win."""
    path = None
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif tok.startswith("--config="):
            path = tok.split("=", 1)[1]
    if path is None:
        return argv
    entries = read_config(path)
    flags = [t for k, t in entries if k is None]
    named = dict((k, t) for k, t in entries if k is not None)
    commands = ("eval", "figure", "sweep", "histogram", "validate")
    argv = list(argv)
    if not argv or argv[0] not in commands:
        if "command" not in named:
            return argv
        argv.insert(0, named["command"])
    head = [argv[0]]
    rest = argv[1:]
    if argv[0] == "figure" and (not rest or rest[0] not in FIGURES) and "figure" in named:
        head.append(named["figure"])
    return head + flags + rest


def _kind(text) -> ModelKind:
    try:
        return ModelKind.parse(text)
    except (InvalidParams, ValueError) as exc:
        raise InvalidParams("model", str(exc).split(": ", 1)[-1]) from None


def make_config(argv: list) -> RunConfig:
    ns = build_parser().parse_args(_expand_config(argv))
    cfg = RunConfig(command=ns.command, fmt=ns.format, argv=list(argv))
    cfg.method = Method.parse(ns.method) if ns.method else None
    if getattr(ns, "model", None) is not None:
        cfg.kind = _kind(ns.model)
    if hasattr(ns, "gamma_h"):
        cfg.params = {"gamma_h": ns.gamma_h, "gamma_c": ns.gamma_c, "lam": ns.lam,
                      "n_h": ns.nh, "n_c": ns.nc, "p": ns.p}
    out = ns.out or os.environ.get(OUT_ENV)
    cfg.out = Path(out) if out else None
    for name in ("seed", "samples", "workers", "points", "with_trajectory", "figure"):
        if hasattr(ns, name):
            setattr(cfg, name, getattr(ns, name))
    if ns.command == "sweep":
        cfg.vary, cfg.span = ns.vary, (ns.start, ns.stop)
    if ns.command == "histogram":
        cfg.params = {"bin_width": ns.bin_width}
    if ns.command == "eval" and (ns.omega_h is not None or ns.omega_c is not None):
        if ns.omega_h is None or ns.omega_c is None:
            raise InvalidParams("omega_h" if ns.omega_h is None else "omega_c",
                                "both level frequencies are needed for power output")
        cfg.freqs = LevelFrequencies(ns.omega_h, ns.omega_c)
    return cfg


# ---------------------------------------------------------------------------
# output

def _timestamp() -> str:
    """Build time from ``SOURCE_DATE_EPOCH`` so reruns stay byte-identical."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is None:
        return "unrecorded (set SOURCE_DATE_EPOCH to stamp outputs)"
    stamp = datetime.datetime.fromtimestamp(int(epoch), tz=datetime.timezone.utc)
    return stamp.strftime("%Y-%m-%dT%H:%M:%SZ")


def _meta(cfg: RunConfig, **extra) -> dict:
    meta = {"version": __version__, "command": "masertur " + shlex.join(cfg.argv), "seed": cfg.seed,
            "timestamp": _timestamp()}
    meta.update(extra)
    return meta


def _out_dir(cfg: RunConfig) -> Path:
    path = cfg.out or Path(".")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write(path: Path, text: str):
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    log.info("wrote %s", path)


def _report_text(report: TurReport, fmt: str, meta: dict) -> str:
    if fmt == "json":
        return dumps({"metadata": meta, "report": report.as_dict()})
    columns = CSV_COLUMNS + (("power", "power_variance") if report.power is not None else ())
    d = report.as_dict()
    return metadata_lines(meta) + ",".join(columns) + "\n" + csv_line(d[c] for c in columns)


def _curve_text(curve, fmt, meta, reliability=False):
    if fmt == "json":
        return curve.to_json(meta)
    return curve.reliability_csv(meta) if reliability else curve.to_csv(meta)


def _ext(cfg):
    return "." + cfg.fmt


def _base_meta(base: EngineParams) -> dict:
    return base.as_dict()


def _fig2(cfg, out):
    method = cfg.method or Method.CHARPOLY
    grid = np.linspace(*LAMBDA_SPAN, cfg.points or 200)
    written = []
    for kind in (ModelKind.THREE_LEVEL_I, ModelKind.THREE_LEVEL_II):
        curve = lambda_curve(kind, FIG2_BASE, grid, method)
        meta = _meta(cfg, figure="fig2", kind=kind.value, method=method.value,
                     fixed=_base_meta(FIG2_BASE), grid={"lambda": list(LAMBDA_SPAN), "points": grid.size})
        for rel, name in ((False, "q"), (True, "reliability")):
            path = out / f"fig2_model_{kind.value}_{name}{_ext(cfg)}"
            _write(path, _curve_text(curve, cfg.fmt, {**meta, "quantity": name}, rel))
            written.append(path)
    return written


def _fig3(cfg, out):
    method = cfg.method or Method.RESOLVENT
    written = []
    for kind in ModelKind:
        spec = SweepSpec(kind, cfg.samples, cfg.seed)
        hist = q_histogram(spec, method, workers=cfg.workers)
        ranges = {("lambda" if k == "lam" else k): list(v) for k, v in FIG3_RANGES.items()}
        if kind is ModelKind.FOUR_LEVEL_NIC:
            ranges["p"] = list(NIC_P_RANGE)
        meta = _meta(cfg, figure="fig3", kind=kind.value, method=method.value, samples=cfg.samples,
                     ranges=ranges, sampling="uniform, Philox counter stream per sample")
        path = out / f"fig3_model_{kind.value}{_ext(cfg)}"
        _write(path, hist.to_json(meta) if cfg.fmt == "json" else hist.to_csv(meta))
        written.append(path)
    return written


def _fig4(cfg, out):
    method = cfg.method or Method.CHARPOLY
    grid = np.linspace(*LAMBDA_SPAN, cfg.points or 200)
    grid_meta = {"lambda": list(LAMBDA_SPAN), "points": grid.size}
    written = []
    ref = lambda_curve(ModelKind.THREE_LEVEL_I, FIG4_BASE, grid, method)
    path = out / f"fig4_model_I_reference{_ext(cfg)}"
    _write(path, _curve_text(ref, cfg.fmt, _meta(cfg, figure="fig4", kind="I", method=method.value,
                                                 fixed=_base_meta(FIG4_BASE), grid=grid_meta)))
    written.append(path)
    for p in FIG4_P:
        base = FIG4_BASE.replace(p=p)
        curve = lambda_curve(ModelKind.FOUR_LEVEL_NIC, base, grid, method)
        path = out / f"fig4_nic_p_{p:g}{_ext(cfg)}"
        _write(path, _curve_text(curve, cfg.fmt, _meta(cfg, figure="fig4", kind="NIC", method=method.value,
                                                       fixed=_base_meta(base), grid=grid_meta)))
        written.append(path)
    return written


def _fig5(cfg, out):
    method = cfg.method or Method.CHARPOLY
    grid = np.linspace(-1.0, 1.0, cfg.points or 201)
    written = []
    for lam in FIG5_LAMBDAS:
        base = FIG5_BASE.replace(lam=lam)
        curve = p_curve(base, grid, method)
        meta = _meta(cfg, figure="fig5", kind="NIC", method=method.value, fixed=_base_meta(base),
                     grid={"p": [-1.0, 1.0], "points": grid.size},
                     endpoints="p=-1 is the one-sided limit; p=+1 has a dark state and is degenerate")
        path = out / f"fig5_lambda_{lam:g}{_ext(cfg)}"
        _write(path, _curve_text(curve, cfg.fmt, meta))
        written.append(path)
    return written


# ---------------------------------------------------------------------------
# commands

def cmd_eval(cfg: RunConfig) -> int:
    params = EngineParams(**cfg.params)
    method = cfg.method or Method.CHARPOLY
    report = tur_q(cfg.kind, params, method, freqs=cfg.freqs)
    text = _report_text(report, cfg.fmt, _meta(cfg, kind=cfg.kind.value, method=report.method.value))
    if cfg.out is None:
        sys.stdout.write(text)
    else:
        target = cfg.out
        if target.is_dir():
            target = target / f"eval{_ext(cfg)}"
        target.parent.mkdir(parents=True, exist_ok=True)
        _write(target, text)
    return EXIT_OK


def cmd_figure(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    written = {"fig2": _fig2, "fig3": _fig3, "fig4": _fig4, "fig5": _fig5}[cfg.figure](cfg, out)
    for path in written:
        print(path)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    base = EngineParams(**cfg.params)
    grid = np.linspace(cfg.span[0], cfg.span[1], cfg.points)
    method = cfg.method or Method.CHARPOLY
    if cfg.vary == "p":
        if cfg.kind is not ModelKind.FOUR_LEVEL_NIC:
            raise InvalidParams("vary", "p sweeps need --model NIC")
        curve = p_curve(base, grid, method)
    else:
        curve = lambda_curve(cfg.kind, base, grid, method)
    meta = _meta(cfg, kind=cfg.kind.value, method=method.value, fixed=_base_meta(base))
    path = _out_dir(cfg) / f"sweep_{cfg.kind.value}_{cfg.vary}{_ext(cfg)}"
    _write(path, _curve_text(curve, cfg.fmt, meta))
    print(path)
    return EXIT_OK


def cmd_histogram(cfg: RunConfig) -> int:
    method = cfg.method or Method.RESOLVENT
    spec = SweepSpec(cfg.kind, cfg.samples, cfg.seed, bin_width=cfg.params["bin_width"])
    hist = q_histogram(spec, method, workers=cfg.workers)
    meta = _meta(cfg, kind=cfg.kind.value, method=method.value, samples=cfg.samples)
    path = _out_dir(cfg) / f"histogram_{cfg.kind.value}{_ext(cfg)}"
    _write(path, hist.to_json(meta) if cfg.fmt == "json" else hist.to_csv(meta))
    print(path)
    print(f"min q = {hist.min_value:.6f}, share below 2 = {hist.violation_fraction:.4f}, "
          f"excluded = {sum(hist.exclusions.values())}")
    return EXIT_OK


def cmd_validate(cfg: RunConfig) -> int:
    from .validate import discrepancy_report, report_csv, results_json, run_checks

    checks = run_checks(cfg.with_trajectory, progress=lambda c: print(c.line(), flush=True))
    rows = discrepancy_report()
    out = _out_dir(cfg)
    meta = _meta(cfg)
    if cfg.fmt == "json":
        path = out / "validate.json"
        _write(path, results_json(checks, rows, meta))
    else:
        path = out / "validate_checks.csv"
        _write(path, metadata_lines(meta) + "check,status,quarantined,detail\n" + "".join(
            csv_line((c.name, "PASS" if c.passed else "FAIL", c.quarantined, c.detail)) for c in checks))
        _write(out / "discrepancy_report.csv", metadata_lines(meta) + report_csv(rows))
    failed = [c.name for c in checks if not c.passed and not c.quarantined]
    if failed:
        print("failed checks: " + ", ".join(failed), file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


COMMANDS = {"eval": cmd_eval, "figure": cmd_figure, "sweep": cmd_sweep,
            "histogram": cmd_histogram, "validate": cmd_validate}


def _flag(field_name) -> str:
    return FLAG_OF_FIELD.get(field_name, "--" + str(field_name).replace("_", "-"))


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        cfg = make_config(argv)
        logging.basicConfig(level=logging.INFO if "-v" in argv or "--verbose" in argv else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[cfg.command](cfg)
    except UsageError as exc:
        print(f"masertur: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except InvalidParams as exc:
        detail = str(exc).split(": ", 1)[-1]
        print(f"masertur: error: invalid {_flag(exc.field)}: {detail}", file=sys.stderr)
        return EXIT_INVALID
    except (DegenerateOperation, DegenerateKernel) as exc:
        print(f"masertur: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except MaserTurError as exc:
        print(f"masertur: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"masertur: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
