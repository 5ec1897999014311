"""Run configuration: dataclass sections loaded from a structured text file."""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field

from . import textio
from .errors import ParseError
from .featuremaps import CorruptionConfig
from .inference import EnergyConfig
from .losses import LossConfig
from .scene import GeneratorConfig

SECTIONS = ("generator", "corruption", "energy", "loss")


@dataclass(frozen=True)
class RunConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    corruption: CorruptionConfig = field(default_factory=CorruptionConfig)
    energy: EnergyConfig = field(default_factory=EnergyConfig)
    loss: LossConfig = field(default_factory=LossConfig)


def section_from_doc(base, doc, where: str):
    """``base`` (a section dataclass) with the settings in ``doc`` applied on top."""
    if not isinstance(doc, dict):
        raise ParseError(f"{where}: expected an object")
    known = {f.name for f in dataclasses.fields(base)}
    kwargs = {}
    for key, value in doc.items():
        if key not in known:
            raise ParseError(f"{where}.{key}: unknown setting")
        kwargs[key] = tuple(value) if isinstance(value, list) else value
    try:
        return dataclasses.replace(base, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: {exc}") from None


def load_config(path, base: RunConfig = RunConfig()) -> RunConfig:
    """Read a config file; sections and settings it omits keep the values in ``base``."""
    doc = textio.read_document(path)
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be an object")
    unknown = set(doc) - set(SECTIONS) - {"version"}
    if unknown:
        raise ParseError(f"{path}: unknown sections {sorted(unknown)}")
    kwargs = {name: section_from_doc(getattr(base, name), doc[name], name) for name in SECTIONS if name in doc}
    return dataclasses.replace(base, **kwargs)


def load_corruption(path, base: CorruptionConfig = CorruptionConfig()) -> CorruptionConfig:
    """A corruption file holds either a bare section or a full config with a ``corruption`` key."""
    doc = textio.read_document(path)
    if isinstance(doc, dict) and "corruption" in doc:
        doc = doc["corruption"]
    return section_from_doc(base, doc, "corruption")


def to_doc(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: to_doc(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple, frozenset)):
        items = sorted(obj) if isinstance(obj, frozenset) else obj
        return [to_doc(x) for x in items]
    return obj


def digest(obj) -> str:
    return hashlib.sha256(textio.dumps(to_doc(obj)).encode()).hexdigest()[:16]
