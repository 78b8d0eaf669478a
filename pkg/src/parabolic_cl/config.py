"""Experiment files: sectioned ``key = value`` text parsed with configparser.

Example::

    [experiment]
    output_dir = results/default
    seeds = 0, 1, 2, 3, 4
    method = pcl, er, sgd

    [stream]
    n_tasks = 5

    [pcl]
    sigma_x = 0.03

Unknown sections or keys are rejected. Relative paths are resolved against
the directory containing the file.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .bridge import BridgeSpec
from .errors import ConfigError, ParameterError
from .loss import DriftDescriptor, PclConfig
from .streams import StreamConfig
from .trainer import RunConfig

ABLATIONS = {
    "default": {},
    "one_bb": {"pcl.shared_noise": True},
    "bb_tempering": {"pcl.variance": "tempering"},
    "eu_endpoints": {"pcl.pairing": "euclidean_sorted"},
    "max_loss": {"train.buffer_filter": "max_loss"},
    "min_loss": {"train.buffer_filter": "min_loss"},
    "middle_loss": {"train.buffer_filter": "middle_loss"},
}

SCHEMA = {
    "experiment": {"output_dir": str, "seeds": "ints", "method": "strs"},
    "stream": {f.name: f.type for f in fields(StreamConfig) if f.name != "seed"},
    "train": {"hidden": "ints", "lr": float, "buffer_capacity": int, "buffer_batch": int,
              "buffer_filter": str, "eval_every": int},
    "pcl": {"k": int, "sigma_x": float, "sigma_y": float, "T": float, "pairing": str,
            "variance": str, "include_endpoints": bool, "n_paths": int, "shared_noise": bool,
            "drift_kind": str, "drift_center": "floats", "drift_scale": float},
    "ablate": {"variants": "strs", "pairing": "strs", "variance": "strs", "buffer_filter": "strs"},
    "verify": {"n_paths": int, "dt": float, "seed": int},
}

_TYPES = {"int": int, "float": float, "str": str, "bool": bool}


def _convert(raw: str, kind, where: str):
    if isinstance(kind, str) and kind in _TYPES:
        kind = _TYPES[kind]
    try:
        if kind == "ints":
            return tuple(int(v) for v in raw.replace(",", " ").split())
        if kind == "floats":
            return tuple(float(v) for v in raw.replace(",", " ").split())
        if kind == "strs":
            return tuple(v.strip() for v in raw.split(",") if v.strip())
        if kind is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return kind(raw.strip())
    except ValueError as e:
        raise ConfigError(f"{where}: {e}") from None


@dataclass
class Experiment:
    path: Path | None
    values: dict = field(default_factory=dict)  # {"section.key": value}
    text: str = ""

    def get(self, key, default=None):
        return self.values.get(key, default)

    @property
    def base_dir(self) -> Path:
        return self.path.parent if self.path else Path.cwd()

    @property
    def output_dir(self) -> Path:
        return self.resolve(self.get("experiment.output_dir", "results"))

    @property
    def seeds(self) -> tuple:
        return self.get("experiment.seeds", (0,))

    @property
    def methods(self) -> tuple:
        return self.get("experiment.method", ("pcl",))

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def with_overrides(self, overrides: dict) -> "Experiment":
        vals = dict(self.values)
        vals.update(overrides)
        return Experiment(self.path, vals, self.text)

    def run_config(self, method: str, seed: int, extra: dict | None = None) -> RunConfig:
        v = dict(self.values)
        if extra:
            v.update(extra)
        sect = lambda s: {k.split(".", 1)[1]: val for k, val in v.items() if k.startswith(s + ".")}
        try:
            skw = sect("stream")
            if skw.get("generator") == "csv_file" and skw.get("csv_path"):
                skw["csv_path"] = str(self.resolve(skw["csv_path"]))
            stream = StreamConfig(**skw, seed=seed)
            p = sect("pcl")
            spec = BridgeSpec(**{k: p.pop(k) for k in ("k", "sigma_x", "sigma_y", "T") if k in p})
            drift = DriftDescriptor(p.pop("drift_kind", "none"), p.pop("drift_center", ()),
                                    p.pop("drift_scale", 1.0))
            pcl = PclConfig(bridge=spec, drift=drift, **p)
            tkw = sect("train")
            if "hidden" in tkw:
                tkw["hidden"] = tuple(tkw["hidden"])
            return RunConfig(method=method, stream=stream, pcl=pcl, seed=seed, **tkw)
        except (ParameterError, ValueError, TypeError) as e:
            raise ConfigError(str(e)) from None

    def ablation_grid(self) -> list[tuple[str, dict]]:
        """Named variants, or the cartesian product of listed strategy values."""
        names = self.get("ablate.variants")
        if names:
            out = []
            for n in names:
                if n not in ABLATIONS:
                    raise ConfigError(f"[ablate] variants: unknown variant {n!r}")
                out.append((n, ABLATIONS[n]))
            return out
        pairing = self.get("ablate.pairing", (self.get("pcl.pairing", "random_shuffle"),))
        variance = self.get("ablate.variance", (self.get("pcl.variance", "constant"),))
        filt = self.get("ablate.buffer_filter", (self.get("train.buffer_filter", "none"),))
        grid = []
        for p in pairing:
            for va in variance:
                for f in filt:
                    grid.append((f"{p}-{va}-{f}",
                                 {"pcl.pairing": p, "pcl.variance": va, "train.buffer_filter": f}))
        return grid


def parse_text(text: str, path: Path | None = None) -> Experiment:
    where = str(path) if path else "<config>"
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=where)
    except configparser.Error as e:
        raise ConfigError(str(e)) from None
    values = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{where}: unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{where}: unknown key {key!r} in [{section}] (line {_line_of(text, section, key)})")
            values[f"{section}.{key}"] = _convert(raw, SCHEMA[section][key], f"{where}: [{section}] {key}")
    return Experiment(path, values, text)


def _line_of(text: str, section: str, key: str):
    current = None
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
        elif current == section and s.split("=", 1)[0].strip() == key:
            return i
    return "?"


def load(path) -> Experiment:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: no such file")
    return parse_text(path.read_text(), path.resolve())


def parse_overrides(items) -> dict:
    """``section.key=value`` strings into typed override values."""
    out = {}
    for item in items or ():
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        key, raw = item.split("=", 1)
        section, name = key.strip().split(".", 1)
        if section not in SCHEMA or name not in SCHEMA[section]:
            raise ConfigError(f"override {item!r}: unknown key {key!r}")
        out[f"{section}.{name}"] = _convert(raw, SCHEMA[section][name], f"override {key}")
    return out
