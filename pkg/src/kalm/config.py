"""Training configuration and the flat key = value config file format."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .errors import ConfigError


@dataclass
class TrainConfig:
    d_model: int = 64
    heads: int = 4
    alpha: float = 0.7
    lambda_: float = 0.5
    beta: float = 0.1
    top_k: int = 4
    tau: float = 0.1
    learning_rate: float = 1e-3
    epochs: int = 20
    batch_size: int = 32
    seed: int = 0
    noise_ratio: float = 0.0
    max_chain_edges: int = 5
    optimizer: str = "adam"

    def validate(self) -> "TrainConfig":
        if self.d_model < 1:
            raise ConfigError(f"d_model must be >= 1, got {self.d_model}")
        if self.heads < 1:
            raise ConfigError(f"heads must be >= 1, got {self.heads}")
        if self.d_model % self.heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} is not divisible by heads {self.heads}"
            )
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.lambda_ < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lambda_}")
        if self.beta < 0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")
        if self.top_k < 1:
            raise ConfigError(f"top_k must be >= 1, got {self.top_k}")
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.noise_ratio <= 1.0:
            raise ConfigError(f"noise_ratio must be in [0, 1], got {self.noise_ratio}")
        if self.max_chain_edges < 1:
            raise ConfigError(f"max_chain_edges must be >= 1, got {self.max_chain_edges}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be adam or sgd, got {self.optimizer!r}")
        return self

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            key = "lambda" if f.name == "lambda_" else f.name
            out[key] = getattr(self, f.name)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        kwargs = {}
        known = {("lambda" if f.name == "lambda_" else f.name): f.name for f in fields(cls)}
        for key, value in data.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[known[key]] = value
        return cls(**kwargs).validate()


_INT_KEYS = {"d_model", "heads", "top_k", "epochs", "batch_size", "seed", "max_chain_edges"}
_FLOAT_KEYS = {"alpha", "lambda", "beta", "tau", "learning_rate", "noise_ratio"}
_STR_KEYS = {"optimizer"}


def parse_config_lines(lines: list[str], source: str = "<config>") -> TrainConfig:
    values: dict = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, text = line.partition("=")
        key = key.strip()
        text = text.strip()
        if key in _INT_KEYS:
            try:
                values[key] = int(text)
            except ValueError:
                raise ConfigError(f"{source}:{lineno}: {key} needs an integer, got {text!r}") from None
        elif key in _FLOAT_KEYS:
            try:
                values[key] = float(text)
            except ValueError:
                raise ConfigError(f"{source}:{lineno}: {key} needs a number, got {text!r}") from None
        elif key in _STR_KEYS:
            values[key] = text
        else:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
    return TrainConfig.from_dict(values)


def load_config(path: str) -> TrainConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_lines(lines, source=path)
