"""Benchmark configuration: defaults, the desk and full-scale profiles, and TOML loading."""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, fields, replace

from rnpe.denoise import HmcConfig
from rnpe.errormodel import SpikeSlabConfig
from rnpe.metrics import COVERAGE_LEVELS
from rnpe.pipeline import METHODS
from rnpe.training import TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

# values that differ between the full-scale run and the desk profile
PROFILES = {
    "full": {"pairs": 1000, "n_sims": 50_000, "samples": 100_000, "warmup": 20_000,
              "hdr_samples": 10_000, "m_prime": 1000},
    "desk": {"pairs": 100, "n_sims": 5_000, "samples": 10_000, "warmup": 2_000,
             "hdr_samples": 2_000, "m_prime": 200,
             # a tenth of the simulations gives a tenth of the batches per epoch, so the
             # epoch budget is stretched to keep the optimiser step count in range
             "train": {"max_epochs": 200, "patience": 20}},
}


@dataclass(frozen=True)
class BenchmarkConfig:
    task: str = "gaussian"
    methods: tuple[str, ...] = ("NPE", "RNPE")
    pairs: int = 100
    n_sims: int = 5_000
    samples: int = 10_000
    warmup: int = 2_000
    trajectory_length: float = 1.0
    target_accept: float = 0.95
    max_leapfrog_steps: int = 1000
    hdr_samples: int = 2_000
    m_prime: int = 200
    levels: tuple[float, ...] = COVERAGE_LEVELS
    misspecified: bool = True
    c2st: bool = False
    c2st_samples: int = 1_000
    c2st_pairs: int | None = None  # None scores every pair
    denoised_export: int = 200
    master_seed: int = 0
    workers: int = 1
    error: SpikeSlabConfig = field(default_factory=SpikeSlabConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    bnaf_block: int = 8
    spline_layers: int = 5
    spline_bins: int = 10
    task_options: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(m.upper() for m in self.methods))
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {METHODS}")
        if self.pairs < 1:
            raise ValueError("pairs must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def hmc(self, rng_seed: int = 0) -> HmcConfig:
        return HmcConfig(self.samples, self.warmup, self.trajectory_length, self.target_accept,
                         rng_seed, self.max_leapfrog_steps)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        d["levels"] = list(self.levels)
        return d

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("workers")
        return _hash(d)

    def training_hash(self) -> str:
        """Hash of everything that determines the simulation bank and trained flows."""
        keys = ("task", "n_sims", "master_seed", "error", "train", "bnaf_block",
                "spline_layers", "spline_bins", "task_options")
        d = {k: self.to_dict()[k] for k in keys}
        d["needs_q_x"] = "RNPE" in self.methods
        d["needs_nnpe"] = "NNPE" in self.methods
        return _hash(d)


def _hash(d: dict) -> str:
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode("utf-8")).hexdigest()[:16]


def _coerce(cfg: BenchmarkConfig, values: dict) -> BenchmarkConfig:
    known = {f.name for f in fields(BenchmarkConfig)}
    unknown = set(values) - known
    if unknown:
        raise KeyError(f"unknown configuration keys: {sorted(unknown)}")
    values = dict(values)
    if "error" in values and isinstance(values["error"], dict):
        values["error"] = SpikeSlabConfig(**{**asdict(cfg.error), **values["error"]})
    if "train" in values and isinstance(values["train"], dict):
        values["train"] = TrainConfig(**{**asdict(cfg.train), **values["train"]})
    for key in ("methods", "levels"):
        if key in values:
            values[key] = tuple(values[key])
    return replace(cfg, **values)


def make_config(profile: str = "desk", **overrides) -> BenchmarkConfig:
    if profile not in PROFILES:
        raise KeyError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    cfg = _coerce(BenchmarkConfig(), PROFILES[profile])
    return _coerce(cfg, {k: v for k, v in overrides.items() if v is not None})


def load_config(path=None, profile: str | None = None, **overrides) -> BenchmarkConfig:
    """Read a TOML file; a top-level ``profile`` key picks the base profile.

    Tables ``[error_model]``, ``[training]`` and ``[hmc]`` map onto the error
    model, the flow training schedule, and the chain settings; ``[task]``
    holds task-constructor options. Keyword overrides (e.g. from the CLI) win.
    """
    data: dict = {}
    if path is not None:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    profile = profile or data.pop("profile", "desk")
    data.pop("profile", None)
    flat = dict(data.pop("benchmark", {}))
    if "error_model" in data:
        flat["error"] = data.pop("error_model")
    if "training" in data:
        flat["train"] = data.pop("training")
    if "hmc" in data:
        flat.update(data.pop("hmc"))
    if "task" in data and isinstance(data["task"], dict):
        flat["task_options"] = data.pop("task")
    flat.update(data)
    cfg = make_config(profile)
    cfg = _coerce(cfg, flat)
    return _coerce(cfg, {k: v for k, v in overrides.items() if v is not None})
