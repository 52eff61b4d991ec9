"""Flat ``key = value`` experiment configuration with typed validation."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

MODELS = ("cgrl-gcn", "cgrl-gat", "erm-gcn", "erm-gat")
LOSSES = ("sup", "rec", "intra", "inter")

# Hyperparameter grids used for the feature-shift regime.
GRIDS = {
    "lr": (0.001, 0.01),
    "weight_decay": (1e-5, 5e-5),
    "dropout": (0.0, 0.2, 0.4),
    "hidden": (32, 64, 128),
    "layers": (2, 3, 4),
    "K": (2, 3),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "cgrl-gcn"
    losses: tuple[str, ...] = LOSSES
    lambda1: float = 1.0
    lambda2: float = 1.0
    tau: float = 1.0
    margin: float = 0.5
    K: int = 2
    layers: int = 2
    hidden: int = 32
    lr: float = 0.01
    weight_decay: float = 5e-5
    dropout: float = 0.4
    epochs: int = 500
    runs: int = 5
    seeds: tuple[int, ...] = ()
    pairs_per_epoch: int = 4096
    reweight: str = "softmax"
    gumbel: bool = True
    recompute_reweight: bool = False
    select_on: str = "id-val"
    mi_window: int = 100
    benchmark: str = "default"
    bench_seed: int = 0
    out: str = "runs"
    custom: bool = False

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        bad = set(self.losses) - set(LOSSES)
        if bad:
            raise ConfigError(f"unknown loss names {sorted(bad)}")
        if not self.losses:
            raise ConfigError("losses_enabled is empty; nothing to optimize")
        if self.model.startswith("erm") and set(self.losses) != {"sup"}:
            raise ConfigError("ERM baselines train on the supervised loss only")
        for name in ("lambda1", "lambda2"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if not 0 <= self.margin < 1:
            raise ConfigError("margin must lie in [0, 1)")
        if self.epochs < 1 or self.runs < 1:
            raise ConfigError("epochs and runs must be >= 1")
        if self.K < 1 or self.layers < 0 or self.hidden < 1:
            raise ConfigError("K >= 1, layers >= 0, hidden >= 1 required")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.reweight not in ("softmax", "uniform"):
            raise ConfigError("reweight must be 'softmax' or 'uniform'")
        if self.select_on not in ("id-val", "ood-val"):
            raise ConfigError("select_on must be 'id-val' or 'ood-val'")
        if self.seeds and len(self.seeds) != self.runs:
            raise ConfigError(f"{len(self.seeds)} seeds given for {self.runs} runs")
        if not self.custom:
            for key, grid in GRIDS.items():
                value = getattr(self, key)
                if key == "K" and self.model.startswith("erm"):
                    continue
                if value not in grid:
                    raise ConfigError(f"{key}={value} is outside the grid {grid}; set custom = true")

    @property
    def is_erm(self) -> bool:
        return self.model.startswith("erm")

    @property
    def variant(self) -> str:
        return self.model.split("-")[1]

    @property
    def run_seeds(self) -> tuple[int, ...]:
        return self.seeds or tuple(range(self.runs))

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)

    def to_text(self) -> str:
        return "".join(f"{k} = {_format(v)}\n" for k, v in asdict(self).items())

    def hash(self, exclude=("out",)) -> str:
        d = {k: v for k, v in asdict(self).items() if k not in exclude}
        text = "".join(f"{k}={_format(v)};" for k, v in sorted(d.items()))
        return hashlib.sha256(text.encode()).hexdigest()[:10]


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return str(v)


def _parse_bool(s: str) -> bool:
    s = s.lower()
    if s in ("true", "yes", "1", "on"):
        return True
    if s in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


_ALIASES = {"losses_enabled": "losses", "lambda_1": "lambda1", "lambda_2": "lambda2",
            "branches": "K", "k": "K"}


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """Parse ``key = value`` lines ('#' comments allowed) into a validated config."""
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    defaults = ExperimentConfig.__dataclass_fields__
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key)
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        raw[key] = value
    raw.update({k: _format(v) for k, v in overrides.items()})
    values = {}
    for key, value in raw.items():
        kind = str(types[key])
        try:
            if kind == "bool":
                values[key] = _parse_bool(value)
            elif kind == "int":
                values[key] = int(value)
            elif kind == "float":
                values[key] = float(value)
            elif kind.startswith("tuple[int"):
                values[key] = tuple(int(x) for x in value.split(",") if x.strip())
            elif kind.startswith("tuple[str"):
                values[key] = tuple(x.strip() for x in value.split(",") if x.strip())
            else:
                values[key] = value
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None
    model = values.get("model", defaults["model"].default)
    if str(model).startswith("erm") and "losses" not in values:
        values["losses"] = ("sup",)
    return ExperimentConfig(**values)


def load_config(path, **overrides) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    cfg = parse_config(path.read_text(), **overrides)
    if cfg.benchmark != "default" and not Path(cfg.benchmark).is_dir():
        candidate = path.parent / cfg.benchmark
        if not candidate.is_dir():
            raise ConfigError(f"benchmark bundle {cfg.benchmark!r} not found")
        cfg = cfg.with_(benchmark=str(candidate))
    return cfg
