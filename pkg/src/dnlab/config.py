"""Experiment configuration: JSON schema, validation and line-anchored errors."""
from __future__ import annotations

import json
import math
import re
from pathlib import Path
from typing import Literal, Union

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, ValidationError, field_validator, model_validator

from .domain import DEFAULT_GRADING, PRESETS
from .errors import ConfigError

COMMANDS = ("flat-check", "coercivity", "convex", "lp", "sharp", "muskat")
SEEDED_COMMANDS = ("coercivity", "convex", "lp", "sharp")
MANIFEST_KEY = "manifest_version"

Depth = Union[Literal["inf"], float]


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Resolution(Strict):
    nx: int = Field(256, ge=8)
    nz: int = Field(128, ge=4)
    depth: float = Field(8.0, ge=4)  # half-space truncation depth
    grading: float | None = Field(DEFAULT_GRADING, gt=0)
    period: float = Field(2 * math.pi, gt=0)

    @field_validator("nx")
    @classmethod
    def _power_of_two(cls, v):
        if v & (v - 1):
            raise ValueError("nx must be a power of two")
        return v


class BoundarySpec(Strict):
    preset: str = "flat"
    params: dict[str, Union[float, list[float]]] = Field(default_factory=dict)
    csv: str | None = None

    @field_validator("preset")
    @classmethod
    def _known(cls, v):
        if v not in PRESETS:
            raise ValueError(f"unknown preset {v!r}; choose from {', '.join(PRESETS)}")
        return v


class FlatCheck(Strict):
    depths: list[Depth] = Field(default_factory=lambda: [1.0, 2.0, "inf"])
    modes: list[int] = Field(default_factory=lambda: list(range(1, 9)))
    tol: float = Field(1e-4, gt=0)
    min_order: float = 1.9
    refinements: int = Field(2, ge=1)

    @field_validator("modes")
    @classmethod
    def _positive(cls, v):
        if not v or min(v) < 1:
            raise ValueError("modes must be positive integers")
        return v


class Sweep(Strict):
    boundaries: int = Field(100, ge=1)
    draws_per_boundary: int = Field(1, ge=1)
    kinds: list[Literal["strip", "halfspace"]] = Field(default_factory=lambda: ["halfspace", "strip"])
    max_slope: float = Field(1.0, ge=0)
    min_thickness: float = Field(0.5, gt=0)
    max_thickness: float = Field(2.0, gt=0)
    data_kmax: int = Field(16, ge=1)

    @model_validator(mode="after")
    def _thickness(self):
        if self.max_thickness < self.min_thickness:
            raise ValueError("max_thickness must be >= min_thickness")
        return self


class Convex(Sweep):
    phi: Literal["square", "power"] = "power"
    p: float = Field(4.0, ge=2)


class Lp(Strict):
    ps: list[float] = Field(default_factory=lambda: [2.0, 4.0])
    draws: int = Field(1000, ge=2)
    stability_tol: float = Field(0.05, gt=0)
    certify_boundaries: int = Field(20, ge=0)
    sweep: Sweep = Field(default_factory=Sweep)

    @field_validator("ps")
    @classmethod
    def _p(cls, v):
        if not v or min(v) < 2:
            raise ValueError("every p must be >= 2")
        return v


class SharpCase(Strict):
    kind: Literal["strip", "halfspace"]
    depth: float = Field(gt=0)
    top: BoundarySpec = Field(default_factory=BoundarySpec)
    nz: int | None = Field(None, ge=4)
    expected: float | None = None
    tol: float | None = Field(None, gt=0)

    @model_validator(mode="after")
    def _truncation(self):
        if self.kind == "halfspace" and self.depth < 4:
            raise ValueError("half-space truncation depth must be >= 4")
        return self


def _default_sharp_cases():
    return [
        SharpCase(kind="strip", depth=1.0, expected=math.tanh(1.0), tol=1e-3),
        SharpCase(kind="strip", depth=2.0, expected=math.tanh(2.0), tol=1e-3),
        SharpCase(kind="halfspace", depth=8.0, nz=1024, expected=1.0, tol=1e-6),
    ]


class Sharp(Strict):
    cases: list[SharpCase] = Field(default_factory=_default_sharp_cases)
    solver_tol: float = Field(1e-8, gt=0)
    maxiter: int = Field(200, ge=1)


class Muskat(Strict):
    f0: BoundarySpec = Field(
        default_factory=lambda: BoundarySpec(preset="multi-mode", params={"modes": [1, 3], "amplitudes": [0.3, 0.1]})
    )
    T: float = Field(5.0, ge=0)
    sample_dt: float = Field(0.05, gt=0)
    dt_max: float = Field(5e-3, gt=0)
    cfl: float = Field(0.5, gt=0)
    scheme: Literal["imex", "rk4"] = "imex"
    alphas: list[float] = Field(default_factory=lambda: [0.25, 0.5, 0.75])
    snapshot_every: int = Field(0, ge=0)
    depth_check: bool = True
    fit_window: tuple[float, float] | None = None
    min_r2: float = 0.99
    tail_tol: float = Field(0.01, gt=0)
    checks: list[Literal["max_principle", "mean", "decay", "integrability"]] = Field(
        default_factory=lambda: ["max_principle", "mean", "decay", "integrability"]
    )

    @field_validator("alphas")
    @classmethod
    def _alphas(cls, v):
        if any(not 0 < a < 1 for a in v):
            raise ValueError("Hoelder exponents must lie in (0, 1)")
        return v


class ExperimentConfig(Strict):
    command: Literal["flat-check", "coercivity", "convex", "lp", "sharp", "muskat"]
    seed: int | None = Field(None, ge=0)
    threads: int = Field(1, ge=1)
    out: str = "out"
    figures: bool = True
    resolution: Resolution = Field(default_factory=Resolution)
    flat_check: FlatCheck = Field(default_factory=FlatCheck)
    coercivity: Sweep = Field(default_factory=Sweep)
    convex: Convex = Field(default_factory=Convex)
    lp: Lp = Field(default_factory=Lp)
    sharp: Sharp = Field(default_factory=Sharp)
    muskat: Muskat = Field(default_factory=Muskat)
    _source: str = PrivateAttr("<flags>")
    _text: str = PrivateAttr("")
    _prefix: tuple = PrivateAttr(())

    @model_validator(mode="after")
    def _seed_required(self):
        needs = self.command in SEEDED_COMMANDS or (
            self.command == "muskat" and self.muskat.f0.preset == "random-lip" and "seed" not in self.muskat.f0.params
        )
        if needs and self.seed is None:
            raise ValueError(f"'{self.command}' needs an explicit seed (--seed N)")
        return self

    def resolved(self) -> dict:
        """Plain-JSON view with every default filled in."""
        return self.model_dump(mode="json")

    def error(self, loc: tuple, msg: str) -> ConfigError:
        """Error for the setting at ``loc``, anchored to the line of the
        nearest enclosing key in the source text."""
        where = ".".join(str(p) for p in loc)
        return ConfigError(f"{self._source}:{_line_of(self._text, self._prefix + tuple(loc))}: {where}: {msg}")


def _line_of(text: str, loc: tuple) -> int:
    """Line of the deepest key in ``loc`` found by walking the JSON text."""
    pos = 0
    line_pos = None
    for part in loc:
        if not isinstance(part, str):
            continue
        m = re.compile(r'"%s"\s*:' % re.escape(part)).search(text, pos)
        if m is None:
            break
        pos = m.start()
        line_pos = pos
    if line_pos is None:
        return 1
    return text.count("\n", 0, line_pos) + 1


def _format_validation(err: ValidationError, text: str, source: str, prefix: tuple = ()) -> str:
    lines = []
    for e in err.errors():
        loc = tuple(e["loc"])
        where = ".".join(str(p) for p in loc) or "<root>"
        lines.append(f"{source}:{_line_of(text, prefix + loc)}: {where}: {e['msg']}")
    return "\n".join(lines)


def parse_config(text: str, source: str = "<config>", overrides: dict | None = None) -> ExperimentConfig:
    """Validate JSON ``text`` (a config or a manifest) merged with ``overrides``.

    Errors raise :class:`ConfigError` whose message starts with
    ``source:line:``.
    """
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: invalid JSON: {exc.msg} (column {exc.colno})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}:1: top level must be a JSON object")
    prefix = ()
    if MANIFEST_KEY in data:
        data = data.get("config")
        if not isinstance(data, dict):
            raise ConfigError(f"{source}:1: manifest has no 'config' object")
        prefix = ("config",)
    data = _merge(data, overrides or {})
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc, text, source, prefix)) from None
    cfg._source, cfg._text, cfg._prefix = source, text, prefix
    return cfg


def read_config_text(path: str | Path) -> str:
    """Read a config file once; empty files are rejected."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}:0: cannot read config: {exc.strerror}") from None
    if not text.strip():
        raise ConfigError(f"{path}:1: config file is empty")
    return text


def load_config(path: str | Path | None, overrides: dict | None = None) -> ExperimentConfig:
    if path is None:
        return parse_config("", "<flags>", overrides)
    return parse_config(read_config_text(path), str(path), overrides)


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out
