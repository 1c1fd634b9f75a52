"""Experiment configuration: plain key=value text with section headers.

The format is INI-shaped on purpose: diffable, no dependencies, and
trivially parseable from any language.  Parsing is strict — unknown
sections or keys are rejected — and every config normalizes to a
canonical text form (fixed section/key order, shortest round-trip float
formatting), so ``parse(cfg.to_text())`` reproduces ``cfg`` exactly.

``MVEC_SEED`` in the environment overrides the configured seed at command
resolution time; the parsed config itself is never mutated by it.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, fields

from .errors import ConfigError
from .losses import MarginConfig, PrefixSchedule, SUBTRACT_FROM_TARGET
from .model import TrainConfig

ENV_SEED = "MVEC_SEED"


def _parse_int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def _parse_float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError:
        raise ConfigError(f"expected comma-separated reals, got {text!r}") from None


@dataclass
class ExperimentConfig:
    # [experiment]
    seed: int = 42
    # [data] — spreads tuned once so the full-dim baseline lands at a
    # nontrivial EER (a few percent, neither zero nor chance), then frozen.
    num_speakers: int = 200
    utts_per_speaker: int = 14
    eval_per_speaker: int = 6
    frames_per_utt: int = 20
    feat_dim: int = 20
    intra_spread: float = 0.5
    channel_spread: float = 0.6
    # [schedule]
    dims: tuple[int, ...] = (4, 8, 16, 32, 64)
    weights: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0, 1.0)
    # [margin]
    scale: float = 8.0
    margin: float = 0.1
    sign: str = SUBTRACT_FROM_TARGET
    # [train]
    epochs: int = 35
    batch_size: int = 64
    learn_rate: float = 0.2
    momentum: float = 0.9
    hidden_dim: int = 128
    embed_dim: int = 64
    # [eval]
    targets_per_speaker: int = 10
    nontargets_per_speaker: int = 20
    # [bench]
    bench_dims: tuple[int, ...] = (64, 32, 16, 8, 4)
    bench_k: int = 10
    bench_queries: int = 200

    def __post_init__(self):
        self.validate()

    def validate(self):
        self.schedule()  # raises ConfigError on bad dims/weights
        self.margin_config()
        if self.dims[-1] != self.embed_dim:
            raise ConfigError(
                f"schedule must end at embed_dim {self.embed_dim}, got {self.dims}"
            )
        if any(not 1 <= m <= self.embed_dim for m in self.bench_dims):
            raise ConfigError(f"bench dims must lie in [1, {self.embed_dim}]")
        if min(self.num_speakers, self.utts_per_speaker, self.frames_per_utt,
               self.feat_dim) < 1:
            raise ConfigError("data counts must be >= 1")
        if not 1 <= self.eval_per_speaker < self.utts_per_speaker:
            raise ConfigError("eval_per_speaker must leave at least one train utterance")
        if min(self.targets_per_speaker, self.nontargets_per_speaker) < 1:
            raise ConfigError("trial counts must be >= 1")
        if min(self.bench_k, self.bench_queries) < 1:
            raise ConfigError("bench counts must be >= 1")

    def schedule(self) -> PrefixSchedule:
        return PrefixSchedule(self.dims, self.weights)

    def margin_config(self) -> MarginConfig:
        return MarginConfig(scale=self.scale, margin=self.margin, margin_sign=self.sign)

    def train_config(self, seed: int | None = None) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learn_rate=self.learn_rate,
            momentum=self.momentum,
            seed=self.seed if seed is None else seed,
            hidden_dim=self.hidden_dim,
            embed_dim=self.embed_dim,
            schedule=self.schedule(),
            margin=self.margin_config(),
        )

    def to_text(self) -> str:
        """Canonical normalized form; parsing it reproduces this config."""
        lines = []
        for section, keys in _SCHEMA.items():
            lines.append(f"[{section}]")
            for key, (attr, _, to_text) in keys.items():
                lines.append(f"{key} = {to_text(getattr(self, attr))}")
            lines.append("")
        return "\n".join(lines)


def _fmt_list(values) -> str:
    return ",".join(_fmt_scalar(v) for v in values)


def _fmt_scalar(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


# section -> key -> (attribute, from_text, to_text)
_SCHEMA: dict[str, dict[str, tuple]] = {
    "experiment": {
        "seed": ("seed", int, _fmt_scalar),
    },
    "data": {
        "num_speakers": ("num_speakers", int, _fmt_scalar),
        "utts_per_speaker": ("utts_per_speaker", int, _fmt_scalar),
        "eval_per_speaker": ("eval_per_speaker", int, _fmt_scalar),
        "frames_per_utt": ("frames_per_utt", int, _fmt_scalar),
        "feat_dim": ("feat_dim", int, _fmt_scalar),
        "intra_spread": ("intra_spread", float, _fmt_scalar),
        "channel_spread": ("channel_spread", float, _fmt_scalar),
    },
    "schedule": {
        "dims": ("dims", _parse_int_list, _fmt_list),
        "weights": ("weights", _parse_float_list, _fmt_list),
    },
    "margin": {
        "scale": ("scale", float, _fmt_scalar),
        "margin": ("margin", float, _fmt_scalar),
        "sign": ("sign", str, str),
    },
    "train": {
        "epochs": ("epochs", int, _fmt_scalar),
        "batch_size": ("batch_size", int, _fmt_scalar),
        "learn_rate": ("learn_rate", float, _fmt_scalar),
        "momentum": ("momentum", float, _fmt_scalar),
        "hidden_dim": ("hidden_dim", int, _fmt_scalar),
        "embed_dim": ("embed_dim", int, _fmt_scalar),
    },
    "eval": {
        "targets_per_speaker": ("targets_per_speaker", int, _fmt_scalar),
        "nontargets_per_speaker": ("nontargets_per_speaker", int, _fmt_scalar),
    },
    "bench": {
        "dims": ("bench_dims", _parse_int_list, _fmt_list),
        "k": ("bench_k", int, _fmt_scalar),
        "num_queries": ("bench_queries", int, _fmt_scalar),
    },
}


def parse(text: str) -> ExperimentConfig:
    """Parse config text, rejecting unknown sections and keys."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config does not parse: {exc}") from None

    values = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser[section].items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            attr, from_text, _ = _SCHEMA[section][key]
            try:
                values[attr] = from_text(raw)
            except (ValueError, TypeError):
                raise ConfigError(
                    f"bad value for {section}.{key}: {raw!r}"
                ) from None
    return ExperimentConfig(**values)


def load(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse(fh.read())


def resolve_seed(cfg: ExperimentConfig) -> int:
    """Config seed unless MVEC_SEED overrides it."""
    raw = os.environ.get(ENV_SEED)
    if raw is None or raw == "":
        return cfg.seed
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{ENV_SEED} must be an integer, got {raw!r}") from None


def _check_schema_covers_fields():
    attrs = {attr for keys in _SCHEMA.values() for attr, _, _ in keys.values()}
    missing = {f.name for f in fields(ExperimentConfig)} - attrs
    if missing:  # pragma: no cover - import-time self check
        raise AssertionError(f"config schema misses fields: {missing}")


_check_schema_covers_fields()
