"""Number formatting and metadata blocks shared by every writer."""

from __future__ import annotations

import json
import math

from . import __version__


def fmt(x) -> str:
    """Round-trippable text for one value: 17 significant digits for floats."""
    if isinstance(x, bool) or x is None:
        return "" if x is None else str(x).lower()
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    try:
        return format(float(x), ".17g")
    except (TypeError, ValueError):
        return str(x)


def _field(v) -> str:
    text = fmt(v)
    if any(ch in text for ch in ',"\n'):
        return '"' + text.replace('"', '""') + '"'
    return text


def csv_line(values) -> str:
    return ",".join(_field(v) for v in values) + "\n"


def metadata_lines(meta: dict) -> str:
    """``# key: value`` header lines; keys keep insertion order."""
    out = []
    for key, value in {"version": __version__, **meta}.items():
        if isinstance(value, (dict, list, tuple)):
            value = json.dumps(value, sort_keys=True, default=_json_default)
        out.append(f"# {key}: {value}\n")
    return "".join(out)


def _json_default(obj):
    if hasattr(obj, "value"):
        return obj.value
    if hasattr(obj, "item"):
        return obj.item()
    if hasattr(obj, "as_dict"):
        return obj.as_dict()
    raise TypeError(f"not serializable: {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, default=_json_default, allow_nan=True) + "\n"
