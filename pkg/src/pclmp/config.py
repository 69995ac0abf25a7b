"""Run configuration: strict JSON loading, validation and ablation presets."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Optional, Tuple

from .data import SynthConfig
from .errors import InvalidConfig
from .losses import HyperParams

SCHEMA_VERSION = 1

# Table-2 style component rows
ABLATIONS = {
    "baseline": dict(enable_hpcl=False, enable_dpcl=False, enable_pcl_schedule=False),
    "hpcl": dict(enable_hpcl=True, enable_dpcl=False, enable_pcl_schedule=False),
    "dpcl": dict(enable_hpcl=False, enable_dpcl=True, enable_pcl_schedule=False),
    "unscheduled": dict(enable_hpcl=True, enable_dpcl=True, enable_pcl_schedule=False),
    "pclmp": dict(enable_hpcl=True, enable_dpcl=True, enable_pcl_schedule=True),
}


@dataclass(frozen=True)
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    epochs: int = 100
    synth: Optional[SynthConfig] = field(default_factory=SynthConfig)
    input_path: Optional[str] = None
    input_format: Optional[str] = None
    hyper: HyperParams = field(default_factory=HyperParams)
    embed_dims: Tuple[int, ...] = (128, 64)
    enable_hpcl: bool = True
    enable_dpcl: bool = True
    enable_pcl_schedule: bool = True
    enable_crossmodal_loss: bool = False
    crossmodal_weight: float = 0.5
    keep_cpcl: bool = False
    verbose: bool = False

    def validate(self) -> "RunConfig":
        if self.schema_version != SCHEMA_VERSION:
            raise InvalidConfig(f"schema_version: expected {SCHEMA_VERSION}, got {self.schema_version!r}")
        if (self.synth is None) == (self.input_path is None):
            raise InvalidConfig("exactly one of synth / input_path must be given")
        if self.synth is not None:
            self.synth.validate()
        if self.epochs < 0:
            raise InvalidConfig(f"epochs: must be >= 0, got {self.epochs}")
        if not self.embed_dims or any(d < 1 for d in self.embed_dims):
            raise InvalidConfig(f"embed_dims: positive layer widths required, got {self.embed_dims!r}")
        if self.crossmodal_weight < 0:
            raise InvalidConfig(f"crossmodal_weight: must be >= 0, got {self.crossmodal_weight}")
        return self

    def replace(self, **changes) -> "RunConfig":
        hyper = {k: changes.pop(k) for k in list(changes) if k in HyperParams.field_names()}
        own = {f.name for f in dataclasses.fields(self)}
        synth = {k: changes.pop(k) for k in list(changes) if k in _SYNTH_FIELDS and k not in own}
        cfg = dataclasses.replace(self, **changes)
        if hyper:
            cfg = dataclasses.replace(cfg, hyper=_build(HyperParams, {**dataclasses.asdict(cfg.hyper), **hyper}, "hyper"))
        if synth:
            cfg = dataclasses.replace(cfg, synth=dataclasses.replace(cfg.synth or SynthConfig(), **synth))
        return cfg.validate()

    def with_ablation(self, name: str) -> "RunConfig":
        if name not in ABLATIONS:
            raise InvalidConfig(f"ablate: unknown preset {name!r} (choose from {', '.join(ABLATIONS)})")
        return self.replace(**ABLATIONS[name])

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["embed_dims"] = list(self.embed_dims)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise InvalidConfig("config must be a JSON object")
        unknown = sorted(set(raw) - {f.name for f in dataclasses.fields(cls)})
        if unknown:
            raise InvalidConfig(f"unknown config keys: {', '.join(unknown)}")
        if "schema_version" not in raw:
            raise InvalidConfig("schema_version: missing")
        kw = dict(raw)
        if "hyper" in kw:
            kw["hyper"] = _build(HyperParams, kw["hyper"], "hyper")
        if "synth" in kw and kw["synth"] is not None:
            kw["synth"] = _build(SynthConfig, kw["synth"], "synth")
        if "input_path" in kw and kw["input_path"] is not None and "synth" not in raw:
            kw["synth"] = None
        if "embed_dims" in kw:
            kw["embed_dims"] = tuple(kw["embed_dims"])
        return cls(**kw).validate()

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"{path}: invalid JSON: {exc}") from None
        return cls.from_dict(raw)


_SYNTH_FIELDS = {f.name for f in dataclasses.fields(SynthConfig)}


def _build(kind, raw, section: str):
    if not isinstance(raw, dict):
        raise InvalidConfig(f"{section}: expected an object")
    names = {f.name for f in dataclasses.fields(kind)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise InvalidConfig(f"unknown {section} keys: {', '.join(unknown)}")
    try:
        return kind(**raw)
    except InvalidConfig as exc:
        raise InvalidConfig(f"{section}: {exc}") from None
