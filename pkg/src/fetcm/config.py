"""Flat ``key = value`` run configuration.

Every key belongs to exactly one of :class:`ModelConfig`, :class:`TrainConfig`
or :class:`DataOptions`. Unknown keys abort parsing. ``#`` starts a comment.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Any

from .model import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class DataOptions:
    # sessions file split 8:1:1 when explicit splits are not given
    data_path: str = ""
    split_ratios: str = "0.8,0.1,0.1"
    train_path: str = ""
    valid_path: str = ""
    test_path: str = ""
    # ingest
    input_path: str = ""
    input_format: str = "canonical"
    output_path: str = ""
    # train / eval artifacts
    checkpoint_path: str = "fetcm.ckpt"
    epoch_log_path: str = "epoch_log.csv"
    report_path: str = "eval_report.csv"
    truth_path: str = ""
    baseline: bool = False
    # synth
    n_sessions: int = 1000
    queries_per_session: int = 1
    docs_per_query: int = 10
    n_query_ids: int = 200
    n_url_ids: int = 1000
    gamma: str = ""
    alpha_low: float = 0.1
    alpha_high: float = 0.9

    def ratios(self) -> tuple[float, float, float]:
        parts = [float(x) for x in self.split_ratios.split(",")]
        if len(parts) != 3:
            raise ConfigError("split_ratios needs three comma-separated numbers")
        return tuple(parts)

    def gamma_values(self) -> list[float]:
        if not self.gamma.strip():
            k = self.docs_per_query
            return [round(1.0 - 0.9 * i / (k - 1), 10) if k > 1 else 1.0 for i in range(k)]
        return [float(x) for x in self.gamma.split(",")]


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataOptions = field(default_factory=DataOptions)

    def sections(self):
        return (self.model, self.train, self.data)


def _owners() -> dict[str, tuple[int, Any]]:
    out = {}
    for i, cls in enumerate((ModelConfig, TrainConfig, DataOptions)):
        for f in fields(cls):
            out[f.name] = (i, f.type)
    return out


KEYS = _owners()


def _coerce(key: str, raw: str, typ) -> Any:
    typ = typ if isinstance(typ, str) else getattr(typ, "__name__", str(typ))
    raw = raw.strip()
    try:
        if typ == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ}") from None
    return raw


def apply(cfg: RunConfig, key: str, value: str) -> None:
    if key not in KEYS:
        raise ConfigError(f"unknown config key {key!r}")
    section, typ = KEYS[key]
    setattr(cfg.sections()[section], key, _coerce(key, value, typ))


def parse_config(text: str, cfg: RunConfig | None = None) -> RunConfig:
    cfg = cfg or RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        try:
            apply(cfg, key.strip(), value)
        except ConfigError as e:
            raise ConfigError(f"line {lineno}: {e}") from None
    return cfg


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read())


def describe_keys() -> str:
    lines = []
    for section in (ModelConfig(), TrainConfig(), DataOptions()):
        for f in fields(section):
            lines.append(f"  {f.name} = {getattr(section, f.name)!r}")
    return "\n".join(lines)
