"""Run configuration: nested dataclasses, loaded from YAML.

Any NetworkSpec field under ``network`` may be a list; the run expands the
Cartesian product of all list-valued fields times ``replicates``.
"""
from __future__ import annotations

import copy
import itertools
from dataclasses import asdict, dataclass, field, fields, replace

import yaml

from ..errors import ConfigError
from ..topology import NetworkSpec

NETWORK_FIELDS = tuple(f.name for f in fields(NetworkSpec) if f.name not in ("seed", "replicate", "tau_floor"))
SCHEMA_VERSION = 1


@dataclass
class StimulusConfig:
    kind: str = "lorenz"
    params: dict = field(default_factory=dict)
    oversample: int = 10


@dataclass
class TaskConfig:
    k_set: list = field(default_factory=lambda: [1, 2, 3])
    d_set: list = field(default_factory=lambda: [1, 2, 3, 4, 5, 6])
    delta_count: int = 49
    delta_range: list = field(default_factory=lambda: [-2.0, 2.0])


@dataclass
class SplitConfig:
    dt: float = 0.01
    tau_y: float = 1.0
    tau_u: float = 1.0
    trials: int = 3
    warmup: int = 1000
    train_factor: float = 20.0
    test_factor: float = 10.0


@dataclass
class LIFConfig:
    E: float = -70.0
    v_reset: float = -70.0
    v_thr: float = -69.0
    tau_ref: float = 0.002
    nu0: float = 5.0
    tau_phi_steps: float = 10.0


@dataclass
class RunConfig:
    stimulus: StimulusConfig = field(default_factory=StimulusConfig)
    network: dict = field(default_factory=lambda: {"h": [0.0, 0.1, 1.0, 10.0]})
    replicates: int = 1
    model: str = "LI"
    lif: LIFConfig = field(default_factory=LIFConfig)
    tasks: TaskConfig = field(default_factory=TaskConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    lam: float = 1e-6
    state_precision: str = "half"
    method: str = "euler"
    variance_target: float = 0.999
    similarity_window: int = 100_000
    seed: int = 0
    workers: int = 1
    out: str = "results"

    def __post_init__(self):
        self.validate()

    def validate(self):
        unknown = set(self.network) - set(NETWORK_FIELDS)
        if unknown:
            raise ConfigError(f"unknown network field(s): {sorted(unknown)}")
        if self.model not in ("LI", "LIF"):
            raise ConfigError("model must be 'LI' or 'LIF'")
        if self.state_precision not in ("half", "full"):
            raise ConfigError("state_precision must be 'half' or 'full'")
        if self.method not in ("euler", "exponential"):
            raise ConfigError("method must be 'euler' or 'exponential'")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")

    def to_dict(self):
        return asdict(self)

    def network_specs(self):
        """Expanded NetworkSpec list (list-valued fields x replicates), in a fixed order."""
        base = {k: v for k, v in self.network.items()}
        keys = [k for k in NETWORK_FIELDS if k in base]
        axes = [v if isinstance(v, (list, tuple)) else [v] for v in (base[k] for k in keys)]
        out = []
        for rep in range(self.replicates):
            for combo in itertools.product(*axes):
                kw = dict(zip(keys, combo))
                out.append(NetworkSpec(**kw, seed=self.seed, replicate=rep,
                                       tau_floor=2 * self.split.dt))
        return out

    def with_axis(self, axis, values):
        if axis not in NETWORK_FIELDS:
            raise ConfigError(f"unknown sweep axis {axis!r}")
        cfg = copy.deepcopy(self)
        cfg.network[axis] = list(values)
        return cfg


def _build(cls, d):
    d = dict(d or {})
    names = {f.name for f in fields(cls)}
    bad = set(d) - names
    if bad:
        raise ConfigError(f"unknown {cls.__name__} key(s): {sorted(bad)}")
    return cls(**d)


def from_dict(d) -> RunConfig:
    d = dict(d or {})
    sub = dict(stimulus=StimulusConfig, lif=LIFConfig, tasks=TaskConfig, split=SplitConfig)
    for k, cls in sub.items():
        if k in d:
            d[k] = _build(cls, d[k])
    return _build(RunConfig, d)


def load_config(path) -> RunConfig:
    with open(path) as f:
        return from_dict(yaml.safe_load(f))


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)


def override(cfg: RunConfig, **kw) -> RunConfig:
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(cfg, **kw)
