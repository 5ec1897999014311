"""Structured text documents (JSON syntax) with exact float round-trips."""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

from .errors import ParseError


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite value {x!r}")
    s = format(x, ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def _scalar(v) -> str:
    if isinstance(v, bool) or v is None:
        return json.dumps(v)
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return _fmt_float(v)
    if isinstance(v, str):
        return json.dumps(v)
    raise TypeError(f"unsupported value {type(v).__name__}")


def _is_flat(v) -> bool:
    # lists of scalars or of short scalar lists (coordinates) go on one line
    if not isinstance(v, (list, tuple)):
        return False
    return all(
        not isinstance(x, (dict, list, tuple))
        or (isinstance(x, (list, tuple)) and all(not isinstance(y, (dict, list, tuple)) for y in x))
        for x in v
    )


def dumps(obj: Any, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  {json.dumps(str(k))}: {dumps(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if _is_flat(obj):
            return "[" + ", ".join(dumps(x, indent) for x in obj) + "]"
        items = [f"{pad}  {dumps(x, indent + 1)}" for x in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    return _scalar(obj)


def write_document(path, obj) -> None:
    Path(path).write_text(dumps(obj) + "\n", encoding="utf-8")


def read_document(path) -> Any:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


# field accessors that report where a document went wrong


def field(doc, key: str, where: str):
    if not isinstance(doc, dict):
        raise ParseError(f"{where}: expected an object")
    if key not in doc:
        raise ParseError(f"{where}.{key}: missing field")
    return doc[key]


def number(doc, key: str, where: str) -> float:
    v = field(doc, key, where)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ParseError(f"{where}.{key}: expected a finite number, got {v!r}")
    return float(v)


def integer(doc, key: str, where: str) -> int:
    v = field(doc, key, where)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ParseError(f"{where}.{key}: expected an integer, got {v!r}")
    return v


def points(doc, key: str, where: str) -> list[tuple[float, float]]:
    v = field(doc, key, where)
    if not isinstance(v, list):
        raise ParseError(f"{where}.{key}: expected a list of [x, y] pairs")
    out = []
    for i, p in enumerate(v):
        if (
            not isinstance(p, list)
            or len(p) != 2
            or not all(isinstance(c, (int, float)) and not isinstance(c, bool) and math.isfinite(c) for c in p)
        ):
            raise ParseError(f"{where}.{key}[{i}]: expected [x, y], got {p!r}")
        out.append((float(p[0]), float(p[1])))
    return out
