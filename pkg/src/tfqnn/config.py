"""Experiment configuration: YAML documents validated with pydantic.

Validation errors are reported with the line of the offending key, e.g.::

    config.yaml:12: train.batch_size: Input should be greater than or equal to 1
"""

from __future__ import annotations

import math
import re
from importlib import resources
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import yaml
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError

_PI_EXPR = re.compile(r"^\s*([+-]?)\s*(\d+(?:\.\d*)?|\.\d+)?\s*\*?\s*pi\s*(?:/\s*(\d+(?:\.\d*)?))?\s*$")


def parse_real(value):
    """Accept plain numbers and multiples of pi written as ``"-4pi"``, ``"pi/2"``, ``"2*pi"``."""
    if isinstance(value, str):
        m = _PI_EXPR.match(value.lower())
        if m:
            sign = -1.0 if m.group(1) == "-" else 1.0
            coef = float(m.group(2)) if m.group(2) else 1.0
            den = float(m.group(3)) if m.group(3) else 1.0
            return sign * coef * math.pi / den
        try:
            return float(value)
        except ValueError:
            raise ValueError(f"cannot read {value!r} as a number or multiple of pi") from None
    return value


Real = Annotated[float, BeforeValidator(parse_real)]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelConfig(_Strict):
    num_qubits: int = Field(4, ge=1, le=14)
    num_layers: int = Field(4, ge=0)
    feature_map: Literal["simple", "tower", "exponential", "trainable"] = "simple"
    trainable: bool = False
    rotations: tuple[Literal["X", "Y", "Z"], ...] = ("Y", "Z")
    entangler: Literal["cx_ring", "analog_zz_ring", "none"] = "cx_ring"
    layout: Literal["single", "reupload", "serial"] = "single"
    registers: Literal["shared", "split"] = "shared"
    phi_scale: Real = 1.0

    @property
    def is_trainable(self) -> bool:
        return self.trainable or self.feature_map == "trainable"

    def build_kwargs(self) -> dict:
        return {
            "feature_map": self.feature_map,
            "trainable": self.trainable,
            "rotations": tuple(self.rotations),
            "entangler": self.entangler,
            "layout": self.layout,
            "registers": self.registers,
            "phi_scale": self.phi_scale,
        }


class TrainSection(_Strict):
    iterations: int = Field(ge=0)
    batch_size: int = Field(ge=1)
    learning_rate: Real = Field(gt=0)
    seeds: tuple[int, ...] = Field(min_length=1)


class DatasetConfig(_Strict):
    frequencies: tuple[Real, ...] = Field(min_length=1)
    domain: tuple[Real, Real] = (-4 * math.pi, 4 * math.pi)
    num_points: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _check(self):
        if any(f <= 0 for f in self.frequencies):
            raise ValueError("frequencies must be positive")
        if self.domain[1] <= self.domain[0]:
            raise ValueError("domain must satisfy hi > lo")
        return self


class AnalysisConfig(_Strict):
    """DFT of the trained prediction on a (possibly longer) evaluation grid."""

    domain: Optional[tuple[Real, Real]] = None
    num_points: Optional[int] = Field(None, ge=2)
    pad_factor: int = Field(8, ge=1)
    rel_height: Real = Field(0.05, gt=0, le=1)


class SweepConfig(_Strict):
    counts: tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7)
    lo: Real = 1.0
    hi: Real = 3.0
    single: Real = 1.0
    domain: tuple[Real, Real] = (-4 * math.pi, 4 * math.pi)
    feature_maps: tuple[Literal["simple", "tower", "exponential", "trainable"], ...] = (
        "simple", "tower", "exponential", "trainable",
    )
    workers: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check(self):
        if any(c < 1 for c in self.counts):
            raise ValueError("counts must be >= 1")
        if self.hi <= self.lo:
            raise ValueError("hi must exceed lo")
        return self


class SpectrumConfig(_Strict):
    feature_map: Literal["simple", "tower", "exponential", "trainable"] = "simple"
    num_qubits: int = Field(3, ge=1, le=14)
    theta_f: Optional[tuple[Real, ...]] = None
    mode: Literal["qnn_gaps", "kernel_eigenvalues"] = "qnn_gaps"
    dedup_tol: Real = Field(1e-9, gt=0)
    # optional empirical check: DFT of an untrained single-block QNN
    dft_layers: int = Field(0, ge=0)
    dft_seed: int = 0
    dft_domain: tuple[Real, Real] = (-4 * math.pi, 4 * math.pi)


class GridAxis(_Strict):
    lo: Real
    hi: Real
    num: int = Field(ge=1)


class FlowConfig(_Strict):
    source: Literal["taylor_green", "file"] = "taylor_green"
    path: Optional[str] = None
    reynolds: Real = Field(10.0, gt=0)
    x: GridAxis = GridAxis(lo=0.5, hi=3.0, num=20)
    y: GridAxis = GridAxis(lo=0.25, hi=1.75, num=20)
    t: GridAxis = GridAxis(lo=0.0, hi=1.0, num=5)
    data_stride: tuple[int, int] = (10, 10)

    @model_validator(mode="after")
    def _check(self):
        if self.source == "file" and not self.path:
            raise ValueError("flow.path is required when source is 'file'")
        if min(self.data_stride) < 1:
            raise ValueError("data_stride entries must be >= 1")
        return self


class _Base(_Strict):
    name: Optional[str] = None


class FitCosineConfig(_Base):
    experiment: Literal["fit_cosine"]
    model: ModelConfig = ModelConfig()
    train: TrainSection
    dataset: DatasetConfig
    analysis: AnalysisConfig = AnalysisConfig()


class RichnessSweepConfig(_Base):
    experiment: Literal["richness_sweep"]
    model: ModelConfig = ModelConfig()
    train: TrainSection
    sweep: SweepConfig = SweepConfig()


class SpectrumExperimentConfig(_Base):
    experiment: Literal["spectrum"]
    spectrum: SpectrumConfig = SpectrumConfig()


class SolveNseConfig(_Base):
    experiment: Literal["solve_nse"]
    model: ModelConfig = ModelConfig(num_qubits=4, num_layers=4, registers="split")
    pressure_model: Optional[ModelConfig] = None
    train: TrainSection
    flow: FlowConfig = FlowConfig()

    @property
    def p_model(self) -> ModelConfig:
        return self.pressure_model or self.model


ExperimentConfig = Annotated[
    Union[FitCosineConfig, RichnessSweepConfig, SpectrumExperimentConfig, SolveNseConfig],
    Field(discriminator="experiment"),
]


class _Root(BaseModel):
    config: ExperimentConfig


# ---------------------------------------------------------------------------
# loading


def _node_line(root, loc) -> Optional[int]:
    """1-based line of the YAML node addressed by a pydantic error location."""
    node = root
    line = None if node is None else node.start_mark.line + 1
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                if k.value == key:
                    node = v
                    line = k.start_mark.line + 1
                    break
            else:
                return line
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            return line
    return line


def parse_config(text: str, source: str = "<config>"):
    """Validate a YAML document; raise :class:`ConfigError` with a line-anchored message."""
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark is not None else source
        raise ConfigError(f"{where}: YAML parse error: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}:1: expected a mapping at the top level")
    try:
        return _Root(config=data).config
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            loc = tuple(err["loc"][1:])
            if loc and loc[0] in _TAGS:
                loc = loc[1:]
            line = _node_line(root, loc)
            field = ".".join(str(p) for p in loc) or "<root>"
            lines.append(f"{source}:{line or 1}: {field}: {err['msg']}")
        raise ConfigError("\n".join(lines)) from None


_TAGS = {"fit_cosine", "richness_sweep", "spectrum", "solve_nse"}


PRESET_PREFIX = "preset:"


def preset_names() -> list[str]:
    return sorted(p.stem for p in resources.files("tfqnn.presets").iterdir() if p.name.endswith(".yaml"))


def load_config(path):
    """Load a YAML config file, or a packaged preset given as ``preset:<name>``."""
    if str(path).startswith(PRESET_PREFIX):
        name = str(path)[len(PRESET_PREFIX):]
        res = resources.files("tfqnn.presets") / f"{name}.yaml"
        if not res.is_file():
            raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
        return parse_config(res.read_text(), f"preset:{name}")
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    return parse_config(text, str(path))


def dump_config(cfg) -> str:
    """Full validated config as YAML; re-parses to an equal object."""
    data = cfg.model_dump(mode="json")
    return yaml.safe_dump(data, sort_keys=False)
