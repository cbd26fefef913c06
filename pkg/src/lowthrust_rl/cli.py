"""``lowthrust-rl`` command line: train, plan, fly and plot-data.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure,
3 when some (but not all) training seeds failed.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import fields, replace
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .a2c import A2cConfig
from .env import EpisodeConfig, RewardWeights
from .errors import CheckpointError, DivergenceError, IntegrationError, UnboundOrbitError
from .forces import DynamicsProfile, SatelliteParams
from .harness import (
    RunConfig,
    SeedResult,
    fly_trajectory,
    load_policy_checkpoint,
    plan_trajectory,
    read_trajectory_csv,
    train_run,
    write_trajectory_csv,
)
from .propagate import IntegratorConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_PARTIAL = 0, 1, 2, 3

PLOT_SERIES = {
    "ra": ("ra_km",),
    "rp": ("rp_km",),
    "mass": ("mass_kg",),
    "actions": ("ax_cmd", "ay_cmd", "az_cmd"),
}

PRETRAINED = "pretrained_agent.json"


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


def _build(cls, table: dict, prefix: str, exclude: Sequence[str] = (), **extra):
    """Instantiate dataclass ``cls`` from a TOML table, rejecting unknown keys."""
    allowed = {f.name for f in fields(cls)} - set(exclude)
    for key in table:
        if key not in allowed:
            raise ConfigError(f"unknown configuration key '{prefix}.{key}'")
    try:
        return cls(**table, **extra)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value in [{prefix}]: {exc}") from exc


def _table(doc: dict, key: str, prefix: str = "") -> dict:
    value = doc.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(f"'{prefix}{key}' must be a table")
    return value


def parse_config(doc: dict[str, Any]) -> RunConfig:
    """Resolve a parsed TOML document into a :class:`RunConfig`.

    Omitted keys take the library defaults. Sections: ``run``, ``episode``,
    ``episode.weights``, ``satellite``, ``integrator``, ``agent``, ``profile``.
    ``profile`` may also be the string ``"training"`` or ``"evaluation"``.
    """
    sections = {"run", "episode", "satellite", "integrator", "agent", "profile"}
    for key in doc:
        if key not in sections:
            raise ConfigError(f"unknown configuration key '{key}'")

    raw_profile = doc.get("profile", {})
    if isinstance(raw_profile, str):
        presets = {"training": DynamicsProfile.training, "evaluation": DynamicsProfile.evaluation}
        if raw_profile not in presets:
            raise ConfigError(f"unknown profile preset '{raw_profile}', expected one of {sorted(presets)}")
        profile = presets[raw_profile]()
    elif isinstance(raw_profile, dict):
        table = dict(raw_profile)
        if "third_bodies" in table:
            table["third_bodies"] = frozenset(table["third_bodies"])
        profile = _build(DynamicsProfile, table, "profile")
    else:
        raise ConfigError("'profile' must be a table or a preset name")

    episode_table = dict(_table(doc, "episode"))
    weights = _build(RewardWeights, _table(episode_table, "weights", "episode."), "episode.weights")
    episode_table.pop("weights", None)
    episode = _build(
        EpisodeConfig,
        episode_table,
        "episode",
        exclude=("weights", "profile", "satellite", "integrator", "seed"),
        weights=weights,
        profile=profile,
        satellite=_build(SatelliteParams, _table(doc, "satellite"), "satellite"),
        integrator=_build(IntegratorConfig, _table(doc, "integrator"), "integrator"),
    )
    agent = _build(A2cConfig, _table(doc, "agent"), "agent")
    run_table = dict(_table(doc, "run"))
    if "total_steps" not in run_table:
        run_table["total_steps"] = agent.total_steps
    return _build(RunConfig, run_table, "run", exclude=("episode", "agent"), episode=episode, agent=agent)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return parse_config({})
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return parse_config(doc)


def pretrained_checkpoint_path() -> Path:
    """Path of the checkpoint bundled with the package."""
    return Path(str(resources.files("lowthrust_rl") / "data" / PRETRAINED))


# -- commands -----------------------------------------------------------------


def cmd_train(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    overrides = {}
    if args.seeds is not None:
        overrides["n_seeds"] = args.seeds
    if args.steps is not None:
        overrides["total_steps"] = args.steps
    if args.out is not None:
        overrides["output_dir"] = Path(args.out)
    if args.workers is not None:
        overrides["workers"] = args.workers
    try:
        config = replace(config, **overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    def progress(result: SeedResult) -> None:
        if result.status == "ok" and result.best_step < 0:
            print(f"seed {result.seed}: finished {result.episodes} episodes without an evaluation")
        elif result.status == "ok":
            print(f"seed {result.seed}: best eval reward {result.best_reward:+.4f} "
                  f"at step {result.best_step} ({result.episodes} episodes)")
        else:
            print(f"seed {result.seed}: FAILED ({result.error})")

    print(f"training {config.n_seeds} seed(s) x {config.total_steps} steps into {config.output_dir}")
    results = train_run(config, progress)
    failed = [r for r in results if r.status != "ok"]
    ok = [r for r in results if r.status == "ok"]
    evaluated = [r for r in ok if r.best_step >= 0]
    if evaluated:
        best = max(evaluated, key=lambda r: r.best_reward)
        print(f"best: seed {best.seed} reward {best.best_reward:+.4f}")
    if not failed:
        return EXIT_OK
    return EXIT_RUNTIME if not ok else EXIT_PARTIAL


def _checkpoint_arg(value: str | None) -> Path:
    return pretrained_checkpoint_path() if value is None else Path(value)


def _report(traj, out: Path) -> None:
    print(f"wrote {len(traj.rows)} rows to {out}")
    print(f"reward {traj.reward:+.6f}  d_rp {traj.d_rp:+.3f} km  d_ra {traj.d_ra:+.3f} km  "
          f"d_m {traj.d_m * 1e3:+.3f} g  M0 {traj.mean_anomaly:.6f} rad")


def cmd_plan(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    ckpt = load_policy_checkpoint(_checkpoint_arg(args.checkpoint))
    episode = replace(config.episode, profile=DynamicsProfile.training())
    traj = plan_trajectory(ckpt, episode, args.mean_anomaly)
    write_trajectory_csv(traj, args.out)
    _report(traj, args.out)
    return EXIT_OK


def cmd_fly(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    ckpt = load_policy_checkpoint(_checkpoint_arg(args.checkpoint))
    profile = config.episode.profile
    if profile == DynamicsProfile.training():
        profile = DynamicsProfile.evaluation()
    episode = replace(config.episode, profile=profile)
    traj = fly_trajectory(ckpt, episode, args.noise_seed, args.mean_anomaly)
    write_trajectory_csv(traj, args.out)
    _report(traj, args.out)
    return EXIT_OK


def cmd_plot_data(args: argparse.Namespace) -> int:
    if args.what not in PLOT_SERIES:
        raise ConfigError(f"unknown series '{args.what}', valid names: {', '.join(PLOT_SERIES)}")
    try:
        cols = read_trajectory_csv(args.input)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.input}: {exc}") from exc
    names = PLOT_SERIES[args.what]
    table = np.column_stack([cols["t_s"] / 60.0] + [cols[n] for n in names])
    header = ",".join(["t_min"] + [n.removesuffix("_cmd") for n in names])
    with open(args.out, "w") as fh:
        fh.write(header + "\n")
        for row in table:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    print(f"wrote {len(table)} rows of {args.what} to {args.out}")
    return EXIT_OK


# -- argument parsing -----------------------------------------------------------


def _finite_float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"{text} is not finite")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lowthrust-rl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train agents on the pericenter-raising task")
    p.add_argument("--config", type=Path, help="TOML configuration file")
    p.add_argument("--seeds", type=int, help="number of seeds (overrides run.n_seeds)")
    p.add_argument("--steps", type=int, help="training steps per seed (overrides run.total_steps)")
    p.add_argument("--out", type=Path, help="output directory (overrides run.output_dir)")
    p.add_argument("--workers", type=int, help="parallel worker processes")
    p.set_defaults(func=cmd_train)

    for name, func, text in (
        ("plan", cmd_plan, "deterministic episode in the unperturbed dynamics"),
        ("fly", cmd_fly, "closed-loop episode in the perturbed dynamics"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--checkpoint", help="checkpoint file (default: bundled pretrained agent)")
        p.add_argument("--out", type=Path, required=True, help="trajectory CSV to write")
        p.add_argument("--config", type=Path, help="TOML configuration file")
        p.add_argument("--mean-anomaly", type=_finite_float,
                       help="initial mean anomaly in rad (default: the checkpoint's evaluation value)")
        if name == "fly":
            p.add_argument("--noise-seed", type=int, default=0, help="seed of the thruster error draws")
        p.set_defaults(func=func)

    p = sub.add_parser("plot-data", help="extract a plotting series from a trajectory CSV")
    p.add_argument("--in", dest="input", type=Path, required=True, help="trajectory CSV")
    p.add_argument("--what", required=True, help=f"series: {', '.join(PLOT_SERIES)}")
    p.add_argument("--out", type=Path, required=True, help="output CSV")
    p.set_defaults(func=cmd_plot_data)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, IntegrationError, UnboundOrbitError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
