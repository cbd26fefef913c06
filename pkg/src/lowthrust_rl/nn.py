"""One-hidden-layer networks with hand-written backprop and Adam.

Shapes follow the (out, in) weight convention: ``w1`` is (hidden, in) and
``w2`` is (out, hidden). Inputs may be a single vector or a (batch, in)
array; everything is float64.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointError

LEAKY_SLOPE = 0.01
PARAM_NAMES = ("w1", "b1", "w2", "b2")
CHECKPOINT_FORMAT = "lowthrust-rl-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class MlpParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    log_std: np.ndarray | None = None

    def arrays(self) -> dict[str, np.ndarray]:
        out = {name: getattr(self, name) for name in PARAM_NAMES}
        if self.log_std is not None:
            out["log_std"] = self.log_std
        return out

    def copy(self) -> MlpParams:
        return MlpParams(**{k: v.copy() for k, v in self.arrays().items()})

    @property
    def n_hidden(self) -> int:
        return self.w1.shape[0]


def init_mlp(
    n_in: int, n_hidden: int, n_out: int, rng: np.random.Generator, with_log_std: bool = False
) -> MlpParams:
    """Uniform fan-in initialization, zero biases, unit policy std."""
    lim1 = math.sqrt(1.0 / n_in)
    lim2 = math.sqrt(1.0 / n_hidden)
    return MlpParams(
        w1=rng.uniform(-lim1, lim1, size=(n_hidden, n_in)),
        b1=np.zeros(n_hidden),
        w2=rng.uniform(-lim2, lim2, size=(n_out, n_hidden)),
        b2=np.zeros(n_out),
        log_std=np.zeros(n_out) if with_log_std else None,
    )


def zeros_like(params: MlpParams) -> MlpParams:
    return MlpParams(**{k: np.zeros_like(v) for k, v in params.arrays().items()})


def _hidden(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    z = x @ params.w1.T + params.b1
    return z, np.where(z > 0.0, z, LEAKY_SLOPE * z)


def actor_forward(params: MlpParams, observation: np.ndarray) -> np.ndarray:
    """Policy mean in (-1, 1)^out."""
    _, h = _hidden(params, observation)
    return np.tanh(h @ params.w2.T + params.b2)


def critic_forward(params: MlpParams, observation: np.ndarray) -> np.ndarray | float:
    """State value; a float for one observation, a (batch,) array otherwise."""
    _, h = _hidden(params, observation)
    out = (h @ params.w2.T + params.b2)[..., 0]
    return float(out) if np.ndim(out) == 0 else out


def backward(
    params: MlpParams, observation: np.ndarray, upstream: np.ndarray, output: str = "linear"
) -> dict[str, np.ndarray]:
    """Parameter gradients of ``sum(upstream * network_output)``.

    ``output`` selects the output activation: ``"tanh"`` (actor) or
    ``"linear"`` (critic). Batched inputs accumulate over the batch.
    """
    x = np.atleast_2d(observation)
    g = np.asarray(upstream, dtype=float).reshape(x.shape[0], -1)
    z, h = _hidden(params, x)
    if output == "tanh":
        y = np.tanh(h @ params.w2.T + params.b2)
        g = g * (1.0 - y * y)
    elif output != "linear":
        raise ValueError(f"unknown output activation {output!r}")
    grads = {"w2": g.T @ h, "b2": g.sum(axis=0)}
    gh = (g @ params.w2) * np.where(z > 0.0, 1.0, LEAKY_SLOPE)
    grads["w1"] = gh.T @ x
    grads["b1"] = gh.sum(axis=0)
    return grads


def global_norm(*grad_dicts: dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for d in grad_dicts for g in d.values()))


def clip_by_global_norm(max_norm: float, *grad_dicts: dict[str, np.ndarray]) -> float:
    """Scale all gradients in place so their joint norm is at most ``max_norm``."""
    norm = global_norm(*grad_dicts)
    if norm > max_norm:
        scale = max_norm / (norm + 1e-6)
        for d in grad_dicts:
            for k in d:
                d[k] = d[k] * scale
    return norm


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: MlpParams, **kwargs) -> AdamState:
        arrays = params.arrays()
        return cls(
            m={k: np.zeros_like(a) for k, a in arrays.items()},
            v={k: np.zeros_like(a) for k, a in arrays.items()},
            **kwargs,
        )


def adam_update(params: MlpParams, grads: dict[str, np.ndarray], state: AdamState) -> MlpParams:
    """Bias-corrected Adam step applied in place; parameters without a gradient
    keep their value (their moments still decay)."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, value in params.arrays().items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(value)
        m = state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        value -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


# -- checkpoints ----------------------------------------------------------------


def _encode_array(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": [float(x) for x in a.ravel(order="C")]}


def _decode_array(blob: dict) -> np.ndarray:
    try:
        return np.array(blob["data"], dtype=float).reshape(blob["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed array record: {exc}") from None


def _encode_params(params: MlpParams) -> dict:
    return {k: _encode_array(v) for k, v in params.arrays().items()}


def _decode_params(blob: dict) -> MlpParams:
    try:
        arrays = {k: _decode_array(blob[k]) for k in PARAM_NAMES}
    except KeyError as exc:
        raise CheckpointError(f"missing parameter {exc}") from None
    if "log_std" in blob:
        arrays["log_std"] = _decode_array(blob["log_std"])
    params = MlpParams(**arrays)
    h, n_in = params.w1.shape
    if params.b1.shape != (h,) or params.w2.shape[1] != h or params.b2.shape != params.w2.shape[:1]:
        raise CheckpointError("inconsistent layer shapes")
    return params


def _encode_adam(state: AdamState) -> dict:
    return {
        "lr": state.lr,
        "beta1": state.beta1,
        "beta2": state.beta2,
        "eps": state.eps,
        "step": state.step,
        "m": {k: _encode_array(v) for k, v in state.m.items()},
        "v": {k: _encode_array(v) for k, v in state.v.items()},
    }


def _decode_adam(blob: dict) -> AdamState:
    return AdamState(
        lr=blob["lr"],
        beta1=blob["beta1"],
        beta2=blob["beta2"],
        eps=blob["eps"],
        step=blob["step"],
        m={k: _decode_array(v) for k, v in blob["m"].items()},
        v={k: _decode_array(v) for k, v in blob["v"].items()},
    )


@dataclass
class Checkpoint:
    actor: MlpParams
    critic: MlpParams
    adam_actor: AdamState | None = None
    adam_critic: AdamState | None = None
    meta: dict = field(default_factory=dict)


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    """Write a JSON checkpoint; float repr round-trips every value exactly."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layout": "row-major; w1 (hidden, in), w2 (out, hidden)",
        "actor": _encode_params(ckpt.actor),
        "critic": _encode_params(ckpt.critic),
        "meta": ckpt.meta,
    }
    if ckpt.adam_actor is not None and ckpt.adam_critic is not None:
        doc["adam"] = {"actor": _encode_adam(ckpt.adam_actor), "critic": _encode_adam(ckpt.adam_critic)}
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path: str | Path) -> Checkpoint:
    p = Path(path)
    if not p.is_file():
        raise CheckpointError(f"checkpoint not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"checkpoint {p} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{p} is not a {CHECKPOINT_FORMAT} file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')!r}")
    try:
        ckpt = Checkpoint(
            actor=_decode_params(doc["actor"]),
            critic=_decode_params(doc["critic"]),
            meta=doc.get("meta", {}),
        )
        if "adam" in doc:
            ckpt.adam_actor = _decode_adam(doc["adam"]["actor"])
            ckpt.adam_critic = _decode_adam(doc["adam"]["critic"])
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"checkpoint {p} is incomplete: {exc}") from None
    if ckpt.actor.log_std is None:
        raise CheckpointError("actor has no log_std")
    return ckpt
