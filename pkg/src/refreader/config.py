"""Run configuration: one JSON file, strict keys, ``section.key=value`` overrides."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    pass


@dataclass
class WikihopSection:
    count: int = 2000
    hops: int = 2
    train_fraction: float = 0.8
    anonymize: bool = True
    pool: int = 24
    distractor_paragraphs: int = 2
    distractors: int = 3


@dataclass
class EncoderSection:
    num_layers: int = 2
    model_dim: int = 32
    num_heads: int = 4
    ffn_dim: int = 64
    max_positions: int = 64
    dropout_p: float = 0.1


@dataclass
class HeadSection:
    hidden_dim: int = 32


@dataclass
class ReaderTrainSection:
    epochs: int = 5
    lr: float = 5e-4
    warmup_fraction: float = 0.08
    weight_decay: float = 0.0
    mode: str = "faithful"
    reanonymize: bool = True


@dataclass
class MemprofileSection:
    paragraphs: list[int] = field(default_factory=lambda: [1, 2, 4, 8])
    paragraph_length: int = 40
    candidates: int = 4


@dataclass
class ReWorldSection:
    charts: int = 4
    processes: int = 4
    structures: int = 5
    properties_per_chart: int = 2
    positive_rate: float = 0.25
    sentences_per_pair: float = 50.0
    signal_rate: float = 1.0
    unrelated: int = 200


@dataclass
class CnnSection:
    L: int = 40
    D_max: int = 30
    K: int = 4
    h: int = 2
    d_w: int = 16
    d_p: int = 4
    d_c: int = 16
    dropout_p: float = 0.2
    l2: float = 1e-4
    lr: float = 1e-3


@dataclass
class ReTrainSection:
    epochs: int = 3
    batch_size: int = 32
    embedding_file: str | None = None


@dataclass
class ChartSection:
    properties: list[str] = field(default_factory=lambda: ["toughness", "creep_strength"])
    n: int = 4
    m: int = 6
    all_structures: bool = False


@dataclass
class RunConfig:
    seed: int = 0
    workdir: str = "run"
    wikihop: WikihopSection = field(default_factory=WikihopSection)
    encoder: EncoderSection = field(default_factory=EncoderSection)
    head: HeadSection = field(default_factory=HeadSection)
    reader_train: ReaderTrainSection = field(default_factory=ReaderTrainSection)
    memprofile: MemprofileSection = field(default_factory=MemprofileSection)
    re_world: ReWorldSection = field(default_factory=ReWorldSection)
    cnn: CnnSection = field(default_factory=CnnSection)
    re_train: ReTrainSection = field(default_factory=ReTrainSection)
    chart: ChartSection = field(default_factory=ChartSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _coerce(value: Any, annotation: str, where: str):
    ann = annotation.replace(" ", "")
    if ann == "bool":
        if isinstance(value, str):
            if value.lower() in ("true", "1", "yes"):
                return True
            if value.lower() in ("false", "0", "no"):
                return False
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{where}: expected a boolean, got {value!r}")
    if ann == "int":
        if isinstance(value, bool):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        try:
            out = int(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}: expected an integer, got {value!r}") from None
        if isinstance(value, float) and out != value:
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return out
    if ann == "float":
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}: expected a number, got {value!r}") from None
    if ann == "str":
        return str(value)
    if ann == "str|None":
        return None if value in (None, "", "null", "none") else str(value)
    if ann.startswith("list["):
        inner = ann[5:-1]
        if isinstance(value, str):
            value = [v for v in value.split(",") if v]
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return [_coerce(v, inner, where) for v in value]
    raise ConfigError(f"{where}: unsupported type {annotation}")


def _build(cls, doc: dict, where: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - set(fields))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for name, value in doc.items():
        f = fields[name]
        sub = f"{where}.{name}" if where else name
        if dataclasses.is_dataclass(f.default_factory() if f.default_factory is not dataclasses.MISSING else None):
            kwargs[name] = _build(type(f.default_factory()), value, sub)
        else:
            kwargs[name] = _coerce(value, f.type if isinstance(f.type, str) else f.type.__name__, sub)
    return cls(**kwargs)


def from_dict(doc: dict) -> RunConfig:
    return _build(RunConfig, doc, "")


def load(path: str | None, overrides: list[str] = ()) -> RunConfig:
    doc: dict = {}
    if path:
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from None
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        parts = key.split(".")
        target = doc
        for part in parts[:-1]:
            target = target.setdefault(part, {})
        target[parts[-1]] = value
    try:
        return from_dict(doc)
    except ConfigError as exc:
        raise ConfigError(f"{path or '<defaults>'}: {exc}") from None
