"""Study configuration and its ``key = value`` file format."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class StudyConfig:
    n_side: int = 64
    dt_snap: float = 1e-2
    t_snap_end: float = 1.0
    dt_rom: float = 1e-3
    T: float = 1.0
    nu: float = 1e-3
    steepness: float = 500.0
    N: int = 5
    r: int = 99
    delta: float = 6.25e-2
    scheme: str = "adlrom"
    delta_list: tuple = (6.5e-1, 5.0e-1, 2.5e-1, 1.8e-1, 1.25e-1, 6.25e-2)
    r_list: tuple = (10, 20, 30, 40, 50)
    ad_r_list: tuple = (99, 100)
    ad_delta_min: float = 1e-2
    ad_delta_max: float = 1e-1
    ad_count: int = 6
    ad_spacing: str = "log"
    rank_cutoff: float = 1e-10
    newton_rel_tol: float = 1e-12
    newton_abs_tol: float = 1e-14
    newton_max_iters: int = 25

    def __post_init__(self):
        problems = []
        if self.n_side < 2:
            problems.append("n_side must be >= 2")
        for name in ("dt_snap", "t_snap_end", "dt_rom", "T", "nu", "steepness",
                     "ad_delta_min", "ad_delta_max", "rank_cutoff",
                     "newton_rel_tol", "newton_abs_tol"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be positive")
        if self.N < 0:
            problems.append("N must be >= 0")
        if self.r < 1:
            problems.append("r must be >= 1")
        if self.delta < 0:
            problems.append("delta must be >= 0")
        if any(d < 0 for d in self.delta_list):
            problems.append("delta_list entries must be >= 0")
        if any(r < 1 for r in (*self.r_list, *self.ad_r_list)):
            problems.append("r_list / ad_r_list entries must be >= 1")
        if self.scheme not in ("grom", "lrom", "adlrom"):
            problems.append("scheme must be one of grom, lrom, adlrom")
        if self.ad_spacing not in ("log", "linear"):
            problems.append("ad_spacing must be 'log' or 'linear'")
        if self.ad_count < 2:
            problems.append("ad_count must be >= 2")
        if self.newton_max_iters < 1:
            problems.append("newton_max_iters must be >= 1")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def n_snapshots(self) -> int:
        return int(round(self.t_snap_end / self.dt_snap)) + 1

    def basis_key(self) -> str:
        """Hash of everything the snapshot set and POD basis depend on."""
        keys = ("n_side", "dt_snap", "t_snap_end", "steepness", "rank_cutoff")
        payload = json.dumps({k: getattr(self, k) for k in keys}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def forcing_key(self) -> str:
        payload = json.dumps({"basis": self.basis_key(), "dt": self.dt_rom, "T": self.T,
                              "nu": self.nu}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v)
                for f in dataclasses.fields(self)}

    def replace(self, **changes) -> StudyConfig:
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in dataclasses.fields(StudyConfig)}


def _convert(name: str, raw: str, lineno: int):
    default = _FIELDS[name].default
    try:
        if isinstance(default, tuple):
            kind = type(default[0])
            return tuple(kind(float(x)) if kind is int else kind(x)
                         for x in raw.replace(",", " ").split())
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            val = float(raw)
            if val != int(val):
                raise ValueError
            return int(val)
        if isinstance(default, float):
            return float(raw)
        return raw.strip().strip('"').strip("'")
    except ValueError:
        raise ConfigError(f"line {lineno}: cannot parse value {raw!r} for {name}") from None


def parse_config(text: str) -> StudyConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _convert(key, raw, lineno)
    return StudyConfig(**values)


def load_config(path) -> StudyConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text())
