"""Run configuration read from an INI-style file; command-line flags override it.

Example::

    [run]
    seed = 13

    [retrieval]
    k = 100
    k1 = 1.2
    b = 0.75

    [loss]
    lambda = 0.2
    tau = 0.05
    negatives = 7

    [augment]
    variant = AUG-QA
    negatives_per_example = 14
    placement = shuffle
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigurationError

# (section, key) -> RunConfig attribute
_KEYS = {
    ("run", "seed"): "seed",
    ("paths", "corpus"): "corpus",
    ("paths", "embeddings"): "embeddings",
    ("paths", "qa"): "qa",
    ("paths", "output"): "output",
    ("retrieval", "k"): "k",
    ("retrieval", "k1"): "k1",
    ("retrieval", "b"): "b",
    ("loss", "lambda"): "lam",
    ("loss", "tau"): "tau",
    ("loss", "negatives"): "n_negatives",
    ("augment", "variant"): "variant",
    ("augment", "negatives_per_example"): "negatives_per_example",
    ("augment", "placement"): "placement",
}


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    corpus: str | None = None
    embeddings: str | None = None
    qa: str | None = None
    output: str | None = None
    k: int = 100
    k1: float = 1.2
    b: float = 0.75
    lam: float = 0.2
    tau: float = 0.05
    n_negatives: int = 7
    variant: str = "AUG-QA"
    negatives_per_example: int = 14
    placement: str = "shuffle"
    extra: dict = field(default_factory=dict, compare=False)

    def validate(self) -> "RunConfig":
        if self.k < 1:
            raise ConfigurationError(f"k must be >= 1, got {self.k}")
        if not 0.0 < self.lam < 1.0:
            raise ConfigurationError(f"lambda must be in (0, 1), got {self.lam}")
        if self.tau <= 0:
            raise ConfigurationError(f"tau must be positive, got {self.tau}")
        if self.variant not in ("AUG-QA", "AUG-QAP"):
            raise ConfigurationError(f"unknown variant {self.variant!r}")
        if self.placement not in ("shuffle", "top"):
            raise ConfigurationError(f"unknown placement {self.placement!r}")
        for name in ("corpus", "embeddings", "qa"):
            path = getattr(self, name)
            if path is not None and not Path(path).exists():
                raise ConfigurationError(f"{name} path does not exist: {path}")
        return self

    def override(self, **values) -> "RunConfig":
        return replace(self, **{k: v for k, v in values.items() if v is not None})


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config {path}: {exc}") from None

    types = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    extra = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            attr = _KEYS.get((section, key))
            if attr is None:
                extra[f"{section}.{key}"] = raw
                continue
            kind = types[attr]
            try:
                if kind == "int":
                    values[attr] = int(raw)
                elif kind == "float":
                    values[attr] = float(raw)
                else:
                    values[attr] = raw
            except ValueError:
                raise ConfigurationError(f"{path}: [{section}] {key} = {raw!r} is not a {kind}") from None
    return RunConfig(**values, extra=extra)
