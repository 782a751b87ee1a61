"""Experiment configuration: ``[section]`` headers with ``key = value`` lines.

Errors carry the line number of the offending entry.  The weight exponent
a = 1 - 2 gamma is always derived and may not be given.
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        self.line = line
        self.path = path
        where = f"{path or '<config>'}:{line}: " if line else f"{path or '<config>'}: "
        super().__init__(where + message)


BUILTINS = ("example-x1sq", "sine", "bump")

SCHEMA = {
    "run": {"threads": int},
    "problem": {"n": int, "gamma": float, "chart": str, "data": str, "bottom": str, "top": str},
    "grid": {"h": float, "L": float, "Y": float, "doubled": bool, "periodic": bool},
    "frequency": {"r_max": float, "gamma0": float, "J": int, "eps0": float, "eps": float, "tol": float,
                  "corpus": int, "seed": int, "degree": int},
    "stratify": {"field": str, "m": int, "k": list, "mu": float, "j": int, "window": float, "tau_harm": float,
                 "eps": float, "h": float},
    "output": {"directory": str, "formats": list},
}


@dataclass
class ExperimentConfig:
    n: int = 1
    gamma: float = 0.5
    chart: str = "flat"
    data: str = "builtin:example-x1sq"
    data_path: Optional[Path] = None
    bottom: str = "dirichlet"
    top: str = "neumann"
    h: float = 1 / 32
    L: float = 1.0
    Y: float = 1.0
    doubled: bool = False
    periodic: bool = False
    r_max: float = 0.5
    gamma0: float = 0.5
    J: Optional[int] = None
    eps0: float = 0.05
    eps: float = 0.05
    tol: float = 1e-3
    corpus: int = 10
    seed: int = 1
    degree: int = 4
    strat_field: str = "member:2"
    field_path: Optional[Path] = None
    m: int = 3
    k: list = field(default_factory=lambda: [0, 1])
    mu: float = 0.25
    j: int = 4
    window: float = 0.5
    tau_harm: float = 1e-3
    strat_eps: float = 0.1
    strat_h: float = 1 / 48
    directory: str = "out"
    formats: list = field(default_factory=lambda: ["csv"])
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    source: Optional[str] = None

    @property
    def a(self) -> float:
        return 1.0 - 2.0 * self.gamma

    @property
    def builtin(self) -> Optional[str]:
        return self.data.split(":", 1)[1] if self.data.startswith("builtin:") else None


def _line_index(text: str) -> dict:
    """(section, key) -> 1-based line number, plus (section, None) for headers."""
    out = {}
    section = None
    for no, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
            out[(section, None)] = no
            continue
        for sep in ("=", ":"):
            if sep in s:
                out[(section, s.split(sep, 1)[0].strip())] = no
                break
    return out


def _convert(kind, raw: str):
    if kind is bool:
        v = raw.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind is list:
        return [t for t in raw.replace(",", " ").split()]
    if kind is float and "/" in raw:
        num, den = raw.split("/", 1)
        return float(num) / float(den)
    return kind(raw.strip())


def parse_config(text: str, path: Optional[str] = None, base_dir: Optional[Path] = None) -> ExperimentConfig:
    lines = _line_index(text)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=path or "<config>")
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("entries must follow a [section] header", exc.lineno, path) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r}", exc.lineno, path) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno, path) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("unparsable line", lineno, path) from None

    cfg = ExperimentConfig(source=path)
    base = Path(base_dir) if base_dir is not None else (Path(path).parent if path else Path.cwd())
    renames = {("stratify", "eps"): "strat_eps", ("stratify", "h"): "strat_h", ("stratify", "field"): "strat_field"}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", lines.get((section, None)), path)
        for key, raw in cp.items(section):
            line = lines.get((section, key))
            if key == "a":
                raise ConfigError("the weight exponent a is derived from gamma (a = 1 - 2 gamma) and cannot be set",
                                  line, path)
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]", line, path)
            try:
                value = _convert(SCHEMA[section][key], raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}", line, path) from None
            setattr(cfg, renames.get((section, key), key), value)

    def fail(section, key, msg):
        raise ConfigError(msg, lines.get((section, key)), path)

    if not (0.0 < cfg.gamma < 1.0):
        fail("problem", "gamma", f"gamma must lie in (0, 1), got {cfg.gamma}")
    if cfg.n < 1:
        fail("problem", "n", "n must be >= 1")
    if cfg.h <= 0:
        fail("grid", "h", "h must be positive")
    if cfg.bottom not in ("dirichlet", "even"):
        fail("problem", "bottom", f"unknown bottom condition {cfg.bottom!r}")
    if cfg.top not in ("neumann", "dirichlet"):
        fail("problem", "top", f"unknown top condition {cfg.top!r}")
    chart = cfg.chart.split()
    if not chart or chart[0] not in ("flat", "conformal", "sphere"):
        fail("problem", "chart", f"unknown chart {cfg.chart!r} (flat | conformal <eps> | sphere)")
    if chart[0] == "conformal":
        try:
            float(chart[1])
        except (IndexError, ValueError):
            fail("problem", "chart", "conformal chart needs a numeric perturbation size")
    kind, _, rest = cfg.data.partition(":")
    if kind == "builtin":
        if rest not in BUILTINS:
            fail("problem", "data", f"unknown builtin {rest!r} (choose from {', '.join(BUILTINS)})")
    elif kind in ("poly", "samples"):
        cfg.data_path = _readable(base, rest, lines.get(("problem", "data")), path)
    else:
        fail("problem", "data", "data must be builtin:<name>, poly:<path> or samples:<path>")
    fkind, _, frest = cfg.strat_field.partition(":")
    if fkind == "member":
        try:
            if int(frest) < 1:
                raise ValueError
        except ValueError:
            fail("stratify", "field", "member field needs a positive degree")
    elif fkind == "poly":
        cfg.field_path = _readable(base, frest, lines.get(("stratify", "field")), path)
    else:
        fail("stratify", "field", "field must be member:<degree> or poly:<path>")
    try:
        cfg.k = [int(v) for v in cfg.k]
    except ValueError:
        fail("stratify", "k", "k must be a list of integers")
    if not (0 < cfg.mu < 1):
        fail("stratify", "mu", "mu must lie in (0, 1)")
    if cfg.threads < 1:
        fail("run", "threads", "threads must be >= 1")
    return cfg


def _readable(base: Path, rel: str, line, path) -> Path:
    p = (base / rel.strip()).resolve()
    if not p.is_file() or not os.access(p, os.R_OK):
        raise ConfigError(f"file not found or unreadable: {p}", line, path)
    return p


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config ({exc.strerror})", None, str(path)) from None
    return parse_config(text, str(p), p.parent)
