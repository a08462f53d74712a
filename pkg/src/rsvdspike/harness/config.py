"""Experiment configuration and result records."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Optional

from ..errors import ConfigError
from ..sketch import SKETCH_KINDS
from ..spiked import NOISE_KINDS

__all__ = ["EXPERIMENTS", "ExperimentConfig", "ExperimentRecord", "load_config"]

EXPERIMENTS = (
    "bulk_hist",
    "outlier",
    "angles",
    "finite_n",
    "universality",
    "shrinkage",
    "sketched_pca",
    "snr_curves",
    "conjecture",
)

# beta used when a configuration leaves it unset
_DEFAULT_BETA = {"shrinkage": 0.1}


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one experiment.

    Spike intensities (``spikes`` and ``sigma_grid``) are absolute unless
    ``relative_to_threshold`` is set, in which case they are multiples of the
    detection threshold at ``(gamma, beta)``. Defaults are desk scale; an
    unset ``beta`` is 0.1 for ``shrinkage`` and 0.5 otherwise.
    """

    experiment: str
    gamma: float = 1.0
    beta: Optional[float] = None
    spikes: list = field(default_factory=list)
    sigma_grid: list = field(default_factory=list)
    relative_to_threshold: bool = False
    n: int = 1000
    n_grid: list = field(default_factory=list)
    gamma_grid: list = field(default_factory=list)
    beta_grid: list = field(default_factory=list)
    trials: int = 20
    noise_kind: str = "gaussian"
    noise_kinds: list = field(default_factory=list)
    sketch_kind: str = "gaussian"
    q: int = 0
    seed: int = 0
    rank_bound: int = 6
    estimate_noise: bool = True
    bins: int = 60
    y_points: int = 200
    threads: int = 1
    output_path: Optional[str] = None
    desk_scale: bool = True

    def __post_init__(self):
        if self.beta is None:
            self.beta = _DEFAULT_BETA.get(self.experiment, 0.5)
        self.validate()

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if not (isinstance(self.trials, int) and self.trials >= 1):
            raise ConfigError("trials must be an integer >= 1")
        if not self.gamma > 0.0 or not 0.0 < self.beta <= 1.0:
            raise ConfigError("need gamma > 0 and 0 < beta <= 1")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ConfigError("n_grid must be strictly increasing")
        if any(int(x) != x or x < 2 for x in [self.n, *self.n_grid]):
            raise ConfigError("dimensions must be integers >= 2")
        if any(s <= 0.0 for s in [*self.spikes, *self.sigma_grid]):
            raise ConfigError("spike intensities must be positive")
        if any(b >= a for a, b in zip(self.spikes, self.spikes[1:])):
            raise ConfigError("spikes must be strictly decreasing")
        for k in [self.noise_kind, *self.noise_kinds]:
            if k not in NOISE_KINDS:
                raise ConfigError(f"unknown noise kind {k!r}")
        if self.sketch_kind not in SKETCH_KINDS:
            raise ConfigError(f"unknown sketch kind {self.sketch_kind!r}")
        if self.q < 0 or self.rank_bound < 1 or self.bins < 1 or self.y_points < 1 or self.threads < 1:
            raise ConfigError("q >= 0, rank_bound >= 1, bins >= 1, y_points >= 1 and threads >= 1 required")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        if "experiment" not in data:
            raise ConfigError("configuration must name an experiment")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path: str, experiment: Optional[str] = None) -> ExperimentConfig:
    """Read a JSON configuration; ``experiment`` fills in or must match the file's."""
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    if experiment is not None:
        if data.setdefault("experiment", experiment) != experiment:
            raise ConfigError(f"{path} configures {data['experiment']!r}, not {experiment!r}")
    return ExperimentConfig.from_dict(data)


@dataclass
class ExperimentRecord:
    """One experiment point: coordinates, Monte-Carlo statistics and theory.

    ``measured`` and ``stderr`` share names; ``theory`` carries the matching
    deterministic predictions.
    """

    keys: dict
    measured: dict = field(default_factory=dict)
    theory: dict = field(default_factory=dict)
    trials: int = 0
    stderr: dict = field(default_factory=dict)

    def flat(self) -> dict[str, Any]:
        out: dict[str, Any] = dict(self.keys)
        out.update({f"mc_{k}": v for k, v in self.measured.items()})
        out.update({f"th_{k}": v for k, v in self.theory.items()})
        out["trials"] = self.trials
        out.update({f"se_{k}": v for k, v in self.stderr.items()})
        return out
