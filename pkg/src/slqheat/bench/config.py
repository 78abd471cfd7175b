"""Experiment configuration: INI files with sections, flattened and overridable from the CLI."""

from __future__ import annotations

import configparser
import dataclasses
import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Initial = Callable[[np.ndarray], np.ndarray]
Intensity = Callable[[float, np.ndarray], np.ndarray]

_SELECTOR = re.compile(r"^\s*([a-z_]+)\s*(?:\(\s*([^)]*)\s*\))?\s*$")
BUILTINS = ("zero", "sine_mode", "smooth_bump", "time_modulated_sine")


@dataclass
class ExperimentConfig:
    experiment: str = "riccati-rate"
    a: float = 0.0
    b: float = 1.0
    n_elements: list[int] = field(default_factory=lambda: [16])
    n_elements_ref: int = 256
    N: list[int] = field(default_factory=lambda: [16, 32, 64, 128, 256])
    N_ref: int = 4096
    T: float = 1.0
    beta: float = 1.0
    alpha: float = 1.0
    x0: str = "sine_mode(1)"
    sigma: str = "zero"
    scheme: str = "V2"
    M: int = 1000
    seed: int = 0
    kappa: float | None = None
    max_iters: int = 500
    tol: float = 1e-10
    R: int | None = None
    regression_M: int = 1000
    workers: int = 1
    out: str = "out.csv"

    def __post_init__(self):
        if not self.n_elements or not self.N:
            raise ValueError("n_elements and N lists must be non-empty")
        parse_initial(self.x0, self.a, self.b)
        parse_intensity(self.sigma, self.a, self.b, self.T)

    def dump(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name} = {'' if v is None else v}")
        return "\n".join(lines) + "\n"


def _int_list(text: str) -> list[int]:
    return [int(t) for t in re.split(r"[,\s]+", text.strip()) if t]


def _optional(cast):
    def conv(text):
        text = str(text).strip()
        return None if text.lower() in ("", "none") else cast(text)
    return conv


_CASTS = {
    "n_elements": _int_list,
    "N": _int_list,
    "kappa": _optional(float),
    "R": _optional(int),
}


def field_cast(name: str):
    if name in _CASTS:
        return _CASTS[name]
    ftype = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}[name]
    return {"int": int, "float": float, "str": str}[ftype]


def config_keys() -> list[str]:
    return [f.name for f in dataclasses.fields(ExperimentConfig)]


def read_ini(path: str) -> dict[str, str]:
    """All keys of all sections, flattened; later sections win on repeats."""
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keep "N" distinct from "n"
    with open(path) as fh:
        parser.read_file(fh)
    flat = dict(parser.defaults())
    for section in parser.sections():
        for key, value in parser.items(section):
            flat[key] = value
    unknown = sorted(set(flat) - set(config_keys()))
    if unknown:
        raise ValueError(f"unknown configuration keys: {', '.join(unknown)}")
    return flat


def build_config(values: dict[str, object]) -> ExperimentConfig:
    kwargs = {}
    for key, raw in values.items():
        if raw is None:
            continue
        kwargs[key] = raw if not isinstance(raw, str) else field_cast(key)(raw)
    return ExperimentConfig(**kwargs)


def _selector(text: str) -> tuple[str, list[str]]:
    m = _SELECTOR.match(text)
    if not m or m.group(1) not in BUILTINS:
        raise ValueError(f"unknown built-in {text!r}; choose from {', '.join(BUILTINS)}")
    args = [s.strip() for s in (m.group(2) or "").split(",") if s.strip()]
    return m.group(1), args


def parse_initial(text: str, a: float, b: float) -> Initial:
    name, args = _selector(text)
    L = b - a
    if name == "zero":
        return lambda x: np.zeros_like(x)
    if name == "sine_mode":
        k = int(args[0]) if args else 1
        return lambda x: np.sin(k * math.pi * (x - a) / L)
    if name == "smooth_bump":
        return lambda x: 16.0 * ((x - a) / L) ** 2 * (1.0 - (x - a) / L) ** 2
    if name == "time_modulated_sine":
        return lambda x: np.sin(math.pi * (x - a) / L)
    raise AssertionError(name)


def parse_intensity(text: str, a: float, b: float, T: float) -> Intensity:
    """Noise intensities; the spatial built-ins are taken constant in time."""
    name, _ = _selector(text)
    if name == "time_modulated_sine":
        L = b - a
        return lambda t, x: (1.0 + math.cos(math.pi * t / T)) * np.sin(math.pi * (x - a) / L)
    shape = parse_initial(text, a, b)
    return lambda t, x: shape(x)
