"""Training phase, the three posterior methods, and posterior handles."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from rnpe import seeding
from rnpe.denoise import DenoiseResult, HmcConfig, denoise_observation
from rnpe.errormodel import SpikeSlabConfig, sample_error
from rnpe.flows.bnaf import BnafSpec
from rnpe.flows.coupling import SplineFlowSpec
from rnpe.flows.model import FlowModel
from rnpe.standardize import Standardizer, fit_standardizer
from rnpe.tasks.base import Task
from rnpe.training import TrainConfig, fit_density_estimator

METHODS = ("NPE", "NNPE", "RNPE")
BANK_FORMAT = "rnpe-bank/1"


@dataclass
class SimulationBank:
    task: str
    theta: np.ndarray
    x: np.ndarray
    seed: int
    standardizer: Standardizer

    @property
    def n(self) -> int:
        return self.theta.shape[0]

    def save(self, directory) -> None:
        """Columnar arrays in ``bank.npz`` plus a ``bank.json`` manifest."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "bank.npz", "wb") as fh:
            np.savez(fh, theta=self.theta, x=self.x)
        manifest = {
            "format": BANK_FORMAT, "task": self.task, "n": self.n, "seed": self.seed,
            "theta_dim": self.theta.shape[1], "summary_dim": self.x.shape[1],
            "standardizer": self.standardizer.to_dict(),
        }
        (directory / "bank.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))

    @classmethod
    def load(cls, directory) -> SimulationBank:
        directory = Path(directory)
        m = json.loads((directory / "bank.json").read_text())
        if m.get("format") != BANK_FORMAT:
            raise ValueError(f"unsupported bank format {m.get('format')!r}")
        with np.load(directory / "bank.npz") as npz:
            theta, x = npz["theta"], npz["x"]
        return cls(m["task"], theta, x, m["seed"], Standardizer.from_dict(m["standardizer"]))


def simulate_bank(task: Task, n: int, seed: int) -> SimulationBank:
    theta = task.sample_prior(n, seeding.stream(seed, -1, "bank.prior"))
    x = task.simulate_summaries(theta, seeding.stream(seed, -1, "bank.simulate"))
    return SimulationBank(task.name, theta, x, seed, fit_standardizer(x))


@dataclass
class TrainedArtifacts:
    bank: SimulationBank
    q_theta_given_x: FlowModel
    q_x: FlowModel | None
    q_theta_given_y: FlowModel | None
    error_config: SpikeSlabConfig
    curves: dict = field(default_factory=dict)

    @property
    def simulation_standardizer(self) -> Standardizer:
        return self.bank.standardizer

    def save(self, directory) -> None:
        directory = Path(directory)
        self.bank.save(directory / "bank")
        for name, model in self._models().items():
            if model is not None:
                model.save(directory / name)
        (directory / "error_model.json").write_text(json.dumps(self.error_config.to_dict(), sort_keys=True))

    def _models(self) -> dict:
        return {"q_theta_given_x": self.q_theta_given_x, "q_x": self.q_x,
                "q_theta_given_y": self.q_theta_given_y}

    @classmethod
    def load(cls, directory) -> TrainedArtifacts:
        directory = Path(directory)
        loaded = {}
        for name in ("q_theta_given_x", "q_x", "q_theta_given_y"):
            loaded[name] = FlowModel.load(directory / name) if (directory / name).exists() else None
        err = SpikeSlabConfig.from_dict(json.loads((directory / "error_model.json").read_text()))
        return cls(SimulationBank.load(directory / "bank"), loaded["q_theta_given_x"], loaded["q_x"],
                   loaded["q_theta_given_y"], err)


def nnpe_training_data(x, std: Standardizer, err: SpikeSlabConfig, rng) -> np.ndarray:
    """Simulations pushed through the error model in standardized space, returned raw."""
    y, _ = sample_error(std.apply(x), err, rng)
    return std.invert(y)


def train_phase(
    task: Task,
    n_sims: int = 50_000,
    seed: int = 0,
    *,
    error_config: SpikeSlabConfig | None = None,
    train_config: TrainConfig | None = None,
    methods=METHODS,
    bank: SimulationBank | None = None,
    spline_spec: SplineFlowSpec | None = None,
    bnaf_block: int = 8,
) -> TrainedArtifacts:
    """Simulate a bank and fit q(theta|x), q(x) and the NNPE flow as needed.

    q(theta|x) and q(x) share the simulation standardizer (fitted on the
    whole bank), which also defines the space of the error model.
    """
    err = error_config or SpikeSlabConfig()
    base = train_config or TrainConfig()
    bank = bank or simulate_bank(task, n_sims, seed)
    std = bank.standardizer
    spline_spec = spline_spec or SplineFlowSpec(task.theta_dim, task.summary_dim)

    def cfg(tag):
        return TrainConfig(base.batch_size, base.max_epochs, base.patience, base.validation_fraction,
                           base.learning_rate, seeding.int_seed(seed, -1, tag), base.clip_norm)

    curves = {}
    q_tx, curves["q_theta_given_x"] = fit_density_estimator(
        bank.theta, bank.x, spline_spec, cfg("train.q_theta_given_x"), context_standardizer=std)
    q_x = None
    if "RNPE" in methods:
        bnaf_cfg = cfg("train.q_x")
        q_x, curves["q_x"] = fit_density_estimator(
            bank.x, None, BnafSpec(task.summary_dim, bnaf_block), bnaf_cfg, input_standardizer=std)
    q_ty = None
    if "NNPE" in methods:
        y = nnpe_training_data(bank.x, std, err, seeding.stream(seed, -1, "nnpe.noise"))
        q_ty, curves["q_theta_given_y"] = fit_density_estimator(
            bank.theta, y, spline_spec, cfg("train.q_theta_given_y"), context_standardizer=std)
    return TrainedArtifacts(bank, q_tx, q_x, q_ty, err, curves)


# ---------------------------------------------------------------- handles


@dataclass(frozen=True)
class PosteriorHandle:
    """Samples and evaluates one method's posterior for one observation.

    NPE/NNPE condition the flow on ``context``. RNPE holds the denoised
    draws: sampling takes one theta per denoised x, density evaluation uses
    the equal-weight mixture over ``components`` (a thinned subset).
    """

    method: str
    model: FlowModel
    context: np.ndarray | None = None
    denoised: np.ndarray | None = None
    components: np.ndarray | None = None

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.method == "RNPE":
            m = self.denoised.shape[0]
            idx = (np.arange(n) * m) // n
            return self.model.sample_per_context(self.denoised[idx], rng)
        return self.model.sample(n, self.context, rng)

    def log_prob(self, theta) -> np.ndarray:
        theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
        if self.method == "RNPE":
            return self.model.mixture_log_prob(theta, self.components)
        return self.model.log_prob(theta, self.context)


def thin(draws, m_prime: int) -> np.ndarray:
    """Equally spaced subset of at most ``m_prime`` rows."""
    draws = np.asarray(draws)
    if m_prime >= draws.shape[0]:
        return draws
    idx = (np.arange(m_prime) * draws.shape[0]) // m_prime
    return draws[idx]


def npe_posterior(y_obs, q_theta_given_x: FlowModel, n: int, rng) -> tuple[PosteriorHandle, np.ndarray]:
    h = PosteriorHandle("NPE", q_theta_given_x, context=np.asarray(y_obs, dtype=np.float64))
    return h, h.sample(n, rng)


def nnpe_posterior(y_obs, q_theta_given_y: FlowModel, n: int, rng) -> tuple[PosteriorHandle, np.ndarray]:
    h = PosteriorHandle("NNPE", q_theta_given_y, context=np.asarray(y_obs, dtype=np.float64))
    return h, h.sample(n, rng)


def rnpe_posterior(
    y_obs,
    artifacts: TrainedArtifacts,
    hmc_cfg: HmcConfig,
    m_prime: int = 1000,
    rng: np.random.Generator | None = None,
    init_sim=None,
) -> tuple[PosteriorHandle, np.ndarray, DenoiseResult]:
    """Denoise ``y_obs`` then draw one theta per denoised x.

    Returns the handle, the (M, theta_dim) draws and the denoising result.
    """
    rng = rng if rng is not None else np.random.default_rng(hmc_cfg.rng_seed)
    if artifacts.q_x is None:
        raise ValueError("RNPE needs the marginal flow q(x); train with RNPE enabled")
    y_obs = np.asarray(y_obs, dtype=np.float64)
    if not np.all(np.isfinite(y_obs)):
        raise ValueError("observed summaries must be finite")
    if init_sim is None:
        init_sim = artifacts.bank.x[rng.integers(artifacts.bank.n)]
    res = denoise_observation(y_obs, artifacts.q_x, artifacts.error_config, hmc_cfg, init_sim, rng)
    theta = artifacts.q_theta_given_x.sample_per_context(res.x_draws, rng)
    handle = PosteriorHandle("RNPE", artifacts.q_theta_given_x, denoised=res.x_draws,
                             components=thin(res.x_draws, m_prime))
    return handle, theta, res
