"""Multi-seed training runs, periodic evaluation, and the plan/fly protocols.

Output layout of :func:`train_run`::

    <output_dir>/manifest.json
    <output_dir>/<seed>/checkpoint_best.json
    <output_dir>/<seed>/checkpoint_final.json
    <output_dir>/<seed>/eval.jsonl
    <output_dir>/<seed>/train.jsonl
    <output_dir>/<seed>/trajectory.csv   (plan of the best checkpoint)

Metric files hold one JSON record per line and contain no wall-clock
values, so two runs with the same configuration produce identical files.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .a2c import A2CAgent, A2cConfig, LossReport
from .astro import StateVector
from .env import ACTION_DIM, OBS_DIM, EpisodeConfig, RewardWeights, SatelliteEnv, terminal_reward
from .errors import CheckpointError, DivergenceError, IntegrationError
from .forces import DynamicsProfile
from .nn import Checkpoint, MlpParams, actor_forward, load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "step", "t_s", "x_km", "y_km", "z_km", "vx_kms", "vy_kms", "vz_kms",
    "mass_kg", "ra_km", "rp_km", "ax_cmd", "ay_cmd", "az_cmd",
)
BEST_NAME = "checkpoint_best.json"
FINAL_NAME = "checkpoint_final.json"
TRAJECTORY_NAME = "trajectory.csv"
EVAL_SEED_OFFSET = 1_000_003

Policy = Callable[[np.ndarray], np.ndarray]


def to_jsonable(obj):
    """Recursively turn dataclasses, frozensets and numpy values into JSON types.

    Non-finite floats become ``None`` so the output stays strict JSON.
    """
    if is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, (set, frozenset)):
        return sorted(to_jsonable(x) for x in obj)
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(x) for x in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, Path):
        return str(obj)
    return obj


@dataclass(frozen=True)
class RunConfig:
    """A multi-seed training run. Seeds are ``base_seed .. base_seed + n_seeds - 1``."""

    n_seeds: int = 14
    total_steps: int = 500_000
    eval_every_episodes: int = 5
    output_dir: Path = Path("runs")
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    agent: A2cConfig = field(default_factory=A2cConfig)
    base_seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        if self.n_seeds < 1 or self.total_steps < 1 or self.eval_every_episodes < 1:
            raise ValueError("n_seeds, total_steps and eval_every_episodes must be positive")
        if self.workers < 1:
            raise ValueError("workers must be positive")
        object.__setattr__(self, "output_dir", Path(self.output_dir))

    @property
    def seeds(self) -> tuple[int, ...]:
        return tuple(range(self.base_seed, self.base_seed + self.n_seeds))


@dataclass(frozen=True)
class EvalRecord:
    seed: int
    training_step: int
    episode: int
    eval_reward: float
    d_rp: float  # km
    d_ra: float  # km
    d_m: float  # kg
    mean_anomaly: float

    def recomputed_reward(self, weights: RewardWeights | None = None) -> float:
        return terminal_reward(self.d_rp, self.d_ra, self.d_m, weights or RewardWeights())

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, line: str) -> EvalRecord:
        return cls(**json.loads(line))


@dataclass
class SeedResult:
    seed: int
    status: str  # "ok" or "failed"
    best_reward: float = -math.inf
    best_step: int = -1
    episodes: int = 0
    steps: int = 0
    error: str | None = None
    wall_seconds: float = 0.0


def read_eval_records(path: str | Path) -> list[EvalRecord]:
    return [EvalRecord.from_json(line) for line in Path(path).read_text().splitlines() if line.strip()]


def greedy_policy(actor: MlpParams) -> Policy:
    """Deterministic policy: the clamped network mean."""

    def act(observation: np.ndarray) -> np.ndarray:
        return np.clip(actor_forward(actor, observation), -1.0, 1.0)

    return act


def zero_policy(observation: np.ndarray) -> np.ndarray:
    return np.zeros(ACTION_DIM)


def run_episode(env: SatelliteEnv, policy: Policy, mean_anomaly: float | None = None) -> tuple[float, dict]:
    """Play one full episode; returns the terminal reward and the final info."""
    obs = env.reset(mean_anomaly=mean_anomaly)
    done = False
    reward, info = 0.0, {}
    while not done:
        obs, reward, done, info = env.step(policy(obs))
    return reward, info


def _checkpoint_meta(config: RunConfig, seed: int, record: EvalRecord | None, step: int) -> dict:
    meta = {
        "seed": seed,
        "training_step": step,
        "episode_config": to_jsonable(config.episode),
        "agent_config": to_jsonable(config.agent),
    }
    if record is not None:
        meta.update(
            eval_reward=record.eval_reward,
            eval_mean_anomaly=record.mean_anomaly,
            eval_d_rp=record.d_rp,
            eval_d_ra=record.d_ra,
            eval_d_m=record.d_m,
            eval_step=record.training_step,
        )
    return meta


def _agent_checkpoint(agent: A2CAgent, meta: dict, with_optimizer: bool) -> Checkpoint:
    return Checkpoint(
        actor=agent.actor.copy(),
        critic=agent.critic.copy(),
        adam_actor=agent.adam_actor if with_optimizer else None,
        adam_critic=agent.adam_critic if with_optimizer else None,
        meta=meta,
    )


def train_seed(config: RunConfig, seed: int) -> SeedResult:
    """Train one learner and persist its checkpoints and metric files.

    Divergence and integration failures are caught and reported in the
    returned :class:`SeedResult`; files written up to that point are kept.
    """
    out = config.output_dir / str(seed)
    out.mkdir(parents=True, exist_ok=True)
    train_env = SatelliteEnv(replace(config.episode, seed=seed))
    eval_env = SatelliteEnv(replace(config.episode, seed=seed + EVAL_SEED_OFFSET))
    agent = A2CAgent(OBS_DIM, ACTION_DIM, config.agent, seed)
    result = SeedResult(seed=seed, status="ok")
    best: EvalRecord | None = None
    losses: list[LossReport] = []
    start = time.perf_counter()

    with open(out / "eval.jsonl", "w") as eval_file, open(out / "train.jsonl", "w") as train_file:

        def on_update(report: LossReport) -> None:
            losses.append(report)

        def on_episode_end(episode: int, step: int, reward: float, info: dict) -> None:
            nonlocal best
            result.episodes, result.steps = episode, step
            row = {
                "episode": episode,
                "training_step": step,
                "reward": reward,
                "d_rp": info["d_rp"],
                "d_ra": info["d_ra"],
                "d_m": info["d_m"],
                "policy_std": np.exp(agent.actor.log_std).tolist(),
            }
            if losses:
                row["policy_loss"] = float(np.mean([r.policy_loss for r in losses]))
                row["value_loss"] = float(np.mean([r.value_loss for r in losses]))
                row["grad_norm"] = float(np.mean([r.grad_norm for r in losses]))
                losses.clear()
            train_file.write(json.dumps(row) + "\n")
            if episode % config.eval_every_episodes:
                return
            eval_reward, eval_info = run_episode(eval_env, greedy_policy(agent.actor))
            record = EvalRecord(
                seed=seed,
                training_step=step,
                episode=episode,
                eval_reward=eval_reward,
                d_rp=eval_info["d_rp"],
                d_ra=eval_info["d_ra"],
                d_m=eval_info["d_m"],
                mean_anomaly=eval_env.mean_anomaly0,
            )
            eval_file.write(record.to_json() + "\n")
            eval_file.flush()
            if best is None or record.eval_reward > best.eval_reward:
                best = record
                result.best_reward, result.best_step = record.eval_reward, step
                meta = _checkpoint_meta(config, seed, record, step)
                save_checkpoint(out / BEST_NAME, _agent_checkpoint(agent, meta, with_optimizer=False))

        try:
            agent.learn(train_env, config.total_steps, on_episode_end, on_update)
            result.steps = config.total_steps
        except (DivergenceError, IntegrationError) as exc:
            result.status = "failed"
            result.error = f"{type(exc).__name__}: {exc}"
            log.warning("seed %d failed: %s", seed, result.error)

    meta = _checkpoint_meta(config, seed, best, result.steps)
    meta["status"] = result.status
    save_checkpoint(out / FINAL_NAME, _agent_checkpoint(agent, meta, with_optimizer=True))
    if best is not None:
        plan_cfg = replace(config.episode, profile=DynamicsProfile.training())
        write_trajectory_csv(plan_trajectory(out / BEST_NAME, plan_cfg), out / TRAJECTORY_NAME)
    result.wall_seconds = time.perf_counter() - start
    return result


def _scenario_echo(ep: EpisodeConfig) -> dict:
    return {
        "dt_s": ep.dt,
        "dt_min": ep.dt / 60.0,
        "n_steps": ep.n_steps,
        "f_max_mN": ep.satellite.f_max,
        "isp_s": ep.satellite.isp,
        "m0_kg": ep.m0,
        "orbits_per_episode": ep.orbits_per_episode(),
    }


def write_manifest(config: RunConfig, results: Iterable[SeedResult] = ()) -> Path:
    doc = {
        "format": "lowthrust-rl-run",
        "scenario": _scenario_echo(config.episode),
        "run_config": to_jsonable(config),
        "seeds": [to_jsonable(r) for r in results],
    }
    path = config.output_dir / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, default=str))
    return path


def train_run(config: RunConfig, progress: Callable[[SeedResult], None] | None = None) -> list[SeedResult]:
    """Train every seed of ``config`` and write the run manifest.

    With ``config.workers > 1`` seeds run in separate processes. Results are
    returned in seed order.
    """
    config.output_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(config)
    results: list[SeedResult] = []
    if config.workers == 1:
        for seed in config.seeds:
            results.append(train_seed(config, seed))
            if progress is not None:
                progress(results[-1])
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(train_seed, config, s) for s in config.seeds]
            for fut in futures:
                results.append(fut.result())
                if progress is not None:
                    progress(results[-1])
    write_manifest(config, results)
    return results


# -- plan / fly ---------------------------------------------------------------------


@dataclass
class TrajectoryRow:
    step: int
    t_s: float
    state: StateVector
    ra_km: float
    rp_km: float
    action: np.ndarray  # command held over the step that ends at this row


@dataclass
class Trajectory:
    rows: list[TrajectoryRow]
    reward: float
    d_rp: float
    d_ra: float
    d_m: float
    mean_anomaly: float
    truncated: bool = False

    def series(self, name: str) -> np.ndarray:
        if name == "t_s":
            return np.array([r.t_s for r in self.rows])
        if name in ("ra_km", "rp_km"):
            return np.array([getattr(r, name) for r in self.rows])
        if name == "mass_kg":
            return np.array([r.state.mass for r in self.rows])
        if name == "actions":
            return np.array([r.action for r in self.rows])
        raise KeyError(name)


def record_trajectory(env: SatelliteEnv, policy: Policy, mean_anomaly: float | None = None) -> Trajectory:
    obs = env.reset(mean_anomaly=mean_anomaly)

    def row(step: int, action: np.ndarray, ra: float, rp: float) -> TrajectoryRow:
        s = env.state
        return TrajectoryRow(step, s.epoch.seconds_since_t0, s, ra, rp, np.array(action, dtype=float))

    rows = [row(0, np.zeros(ACTION_DIM), env.initial_ra, env.initial_rp)]
    done = False
    reward, info = 0.0, {}
    while not done:
        obs, reward, done, info = env.step(policy(obs))
        rows.append(row(info["step"], info["action"], info["ra"], info["rp"]))
    return Trajectory(
        rows=rows,
        reward=reward,
        d_rp=info["d_rp"],
        d_ra=info["d_ra"],
        d_m=info["d_m"],
        mean_anomaly=env.mean_anomaly0,
        truncated=info["truncated"],
    )


def _as_checkpoint(checkpoint: Checkpoint | str | Path) -> Checkpoint:
    if isinstance(checkpoint, Checkpoint):
        return checkpoint
    return load_checkpoint(checkpoint)


def resolve_mean_anomaly(ckpt: Checkpoint, mean_anomaly: float | None) -> float | None:
    """Explicit value, else the anomaly of the checkpoint's recorded evaluation."""
    if mean_anomaly is not None:
        return mean_anomaly
    return ckpt.meta.get("eval_mean_anomaly")


def plan_trajectory(
    checkpoint: Checkpoint | str | Path,
    episode_config: EpisodeConfig | None = None,
    mean_anomaly: float | None = None,
) -> Trajectory:
    """Deterministic episode in the unperturbed training dynamics."""
    ckpt = _as_checkpoint(checkpoint)
    cfg = episode_config or EpisodeConfig()
    if cfg.profile != DynamicsProfile.training():
        raise ValueError("planning runs in the training profile")
    env = SatelliteEnv(cfg)
    return record_trajectory(env, greedy_policy(ckpt.actor), resolve_mean_anomaly(ckpt, mean_anomaly))


def fly_trajectory(
    checkpoint: Checkpoint | str | Path,
    episode_config: EpisodeConfig | None = None,
    seed: int = 0,
    mean_anomaly: float | None = None,
) -> Trajectory:
    """Closed-loop episode in the perturbed dynamics; ``seed`` drives the thruster errors."""
    ckpt = _as_checkpoint(checkpoint)
    cfg = episode_config or EpisodeConfig(profile=DynamicsProfile.evaluation())
    env = SatelliteEnv(replace(cfg, seed=seed))
    return record_trajectory(env, greedy_policy(ckpt.actor), resolve_mean_anomaly(ckpt, mean_anomaly))


def write_trajectory_csv(traj: Trajectory, path: str | Path) -> None:
    """One row per recorded epoch; floats are written with full round-trip precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in traj.rows:
            s = r.state
            writer.writerow(
                [r.step, repr(r.t_s), *map(repr, map(float, s.position)), *map(repr, map(float, s.velocity)),
                 repr(float(s.mass)), repr(float(r.ra_km)), repr(float(r.rp_km)), *map(repr, map(float, r.action))]
            )


def read_trajectory_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Columns of a trajectory CSV as float arrays keyed by header name."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path} is empty") from None
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise ValueError(f"{path} lacks columns {missing}")
        data = np.array([[float(x) for x in row] for row in reader if row])
    if data.size == 0:
        raise ValueError(f"{path} has no data rows")
    return {name: data[:, i] for i, name in enumerate(header)}


def reward_from_columns(columns: dict[str, np.ndarray], weights: RewardWeights | None = None) -> float:
    """Terminal reward from the first and last rows of a trajectory table."""
    return terminal_reward(
        columns["rp_km"][-1] - columns["rp_km"][0],
        columns["ra_km"][-1] - columns["ra_km"][0],
        columns["mass_kg"][-1] - columns["mass_kg"][0],
        weights or RewardWeights(),
    )


# -- trajectory diagnostics --------------------------------------------------------


def autocorrelation(x: np.ndarray) -> np.ndarray:
    """Normalized autocorrelation of a 1-D or (n, k) series, averaged over columns.

    Lag ``j`` uses the ``n - j`` overlapping pairs, so long lags are not
    biased toward zero.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    x = x - x.mean(axis=0)
    n = x.shape[0]
    var = np.sum(x * x, axis=0)
    active = var > 0.0
    if not np.any(active):
        return np.zeros(n)
    x = x[:, active] / np.sqrt(var[active] / n)
    return np.array([np.mean(np.sum(x[: n - j] * x[j:], axis=0) / (n - j)) for j in range(n)])


def periodicity_lag(x: np.ndarray, min_lag: int, max_lag: int) -> int:
    """Lag in ``[min_lag, max_lag]`` where the autocorrelation peaks."""
    acf = autocorrelation(x)
    if not 1 <= min_lag <= max_lag < len(acf):
        raise ValueError("lag window must lie inside the series")
    return min_lag + int(np.argmax(acf[min_lag : max_lag + 1]))


def regression_slope(t: np.ndarray, y: np.ndarray) -> float:
    return float(np.polyfit(np.asarray(t, dtype=float), np.asarray(y, dtype=float), 1)[0])


def load_policy_checkpoint(path: str | Path) -> Checkpoint:
    """Load a checkpoint for inference; the actor must match the environment's shapes."""
    ckpt = load_checkpoint(path)
    if ckpt.actor.w1.shape[1] != OBS_DIM or ckpt.actor.w2.shape[0] != ACTION_DIM:
        raise CheckpointError(
            f"actor shape {ckpt.actor.w1.shape[1]}->{ckpt.actor.w2.shape[0]} does not match "
            f"{OBS_DIM}->{ACTION_DIM}"
        )
    return ckpt
