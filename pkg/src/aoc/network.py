"""Shared-trunk network with option-value, intra-option policy, and termination heads.

The net is a two-layer ReLU trunk feeding three linear heads: option values
(linear), per-option action policies (softmax per option), and per-option
termination probabilities (sigmoid). Forward and backward passes are written
directly in numpy; ``forward_tape`` records the activations needed to run
``backward`` later, and tapes are invalidated whenever the parameters change
(tracked by a version counter).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError

TENSOR_NAMES = ("w1", "b1", "w2", "b2", "wq", "bq", "wpi", "bpi", "wbeta", "bbeta")
TRUNK_TENSORS = ("w1", "b1", "w2", "b2")


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = z - z.max(axis=axis, keepdims=True)
    ez = np.exp(shifted)
    return ez / ez.sum(axis=axis, keepdims=True)


@dataclass
class NetworkParams:
    """Named weight tensors plus sizing info. Mutated in place by the optimizer."""

    tensors: dict[str, np.ndarray]
    num_inputs: int
    num_options: int
    num_actions: int
    hidden: tuple[int, int]
    version: int = 0

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            tensors={k: v.copy() for k, v in self.tensors.items()},
            num_inputs=self.num_inputs,
            num_options=self.num_options,
            num_actions=self.num_actions,
            hidden=self.hidden,
            version=self.version,
        )

    def bump(self) -> None:
        """Mark the parameters as changed, invalidating existing tapes."""
        self.version += 1


def init_params(
    rng: np.random.Generator,
    num_inputs: int,
    num_options: int,
    num_actions: int,
    hidden: tuple[int, int] = (60, 200),
) -> NetworkParams:
    """Initialize all tensors uniformly in +-1/sqrt(fan_in)."""
    h1, h2 = hidden

    def layer(fan_in, fan_out):
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        b = rng.uniform(-bound, bound, size=fan_out)
        return w, b

    w1, b1 = layer(num_inputs, h1)
    w2, b2 = layer(h1, h2)
    wq, bq = layer(h2, num_options)
    wpi, bpi = layer(h2, num_options * num_actions)
    wbeta, bbeta = layer(h2, num_options)
    return NetworkParams(
        tensors={
            "w1": w1, "b1": b1, "w2": w2, "b2": b2,
            "wq": wq, "bq": bq, "wpi": wpi, "bpi": bpi,
            "wbeta": wbeta, "bbeta": bbeta,
        },
        num_inputs=num_inputs,
        num_options=num_options,
        num_actions=num_actions,
        hidden=hidden,
    )


@dataclass
class HeadOutputs:
    q: np.ndarray     # (batch, options)
    pi: np.ndarray    # (batch, options, actions), rows sum to 1
    beta: np.ndarray  # (batch, options), in (0, 1)


@dataclass
class ForwardTape:
    """Activations recorded by forward_tape, consumed once by backward."""

    x: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    out: HeadOutputs
    version: int


def forward(params: NetworkParams, x: np.ndarray) -> HeadOutputs:
    return forward_tape(params, x)[0]


def forward_tape(params: NetworkParams, x: np.ndarray) -> tuple[HeadOutputs, ForwardTape]:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != params.num_inputs:
        raise UsageError(
            f"expected input of shape (batch, {params.num_inputs}), got {x.shape}"
        )
    t = params.tensors
    a1 = np.maximum(x @ t["w1"] + t["b1"], 0.0)
    a2 = np.maximum(a1 @ t["w2"] + t["b2"], 0.0)
    q = a2 @ t["wq"] + t["bq"]
    zpi = (a2 @ t["wpi"] + t["bpi"]).reshape(
        -1, params.num_options, params.num_actions
    )
    pi = softmax(zpi, axis=-1)
    beta = sigmoid(a2 @ t["wbeta"] + t["bbeta"])
    out = HeadOutputs(q=q, pi=pi, beta=beta)
    return out, ForwardTape(x=x, a1=a1, a2=a2, out=out, version=params.version)


def backward(
    params: NetworkParams,
    tape: ForwardTape,
    dq: np.ndarray | None = None,
    dpi: np.ndarray | None = None,
    dbeta: np.ndarray | None = None,
) -> tuple[dict, np.ndarray]:
    """Backpropagate head-output gradients; returns (tensor grads, input grad).

    ``dpi`` and ``dbeta`` are gradients with respect to the post-activation
    outputs; the softmax and sigmoid Jacobians are applied here.
    """
    if tape.version != params.version:
        raise UsageError("stale tape: parameters changed since forward_tape()")
    t = params.tensors
    out = tape.out
    batch = tape.x.shape[0]

    da2 = np.zeros_like(tape.a2)
    grads = {}

    if dq is None:
        grads["wq"] = np.zeros_like(t["wq"])
        grads["bq"] = np.zeros_like(t["bq"])
    else:
        grads["wq"] = tape.a2.T @ dq
        grads["bq"] = dq.sum(axis=0)
        da2 += dq @ t["wq"].T

    if dpi is None:
        grads["wpi"] = np.zeros_like(t["wpi"])
        grads["bpi"] = np.zeros_like(t["bpi"])
    else:
        # softmax Jacobian per option row: dz = p * (dpi - sum(dpi * p))
        inner = (dpi * out.pi).sum(axis=-1, keepdims=True)
        dzpi = (out.pi * (dpi - inner)).reshape(batch, -1)
        grads["wpi"] = tape.a2.T @ dzpi
        grads["bpi"] = dzpi.sum(axis=0)
        da2 += dzpi @ t["wpi"].T

    if dbeta is None:
        grads["wbeta"] = np.zeros_like(t["wbeta"])
        grads["bbeta"] = np.zeros_like(t["bbeta"])
    else:
        dzbeta = dbeta * out.beta * (1.0 - out.beta)
        grads["wbeta"] = tape.a2.T @ dzbeta
        grads["bbeta"] = dzbeta.sum(axis=0)
        da2 += dzbeta @ t["wbeta"].T

    dz2 = da2 * (tape.a2 > 0)
    grads["w2"] = tape.a1.T @ dz2
    grads["b2"] = dz2.sum(axis=0)
    da1 = dz2 @ t["w2"].T
    dz1 = da1 * (tape.a1 > 0)
    grads["w1"] = tape.x.T @ dz1
    grads["b1"] = dz1.sum(axis=0)
    dx = dz1 @ t["w1"].T
    return grads, dx


def zero_grads(params: NetworkParams) -> dict:
    return {k: np.zeros_like(v) for k, v in params.tensors.items()}


def accumulate(into: dict, grads: dict) -> None:
    for k, g in grads.items():
        into[k] += g


class RMSprop:
    """RMSprop with epsilon added outside the square root.

    The accumulator update is ``acc = alpha * acc + (1 - alpha) * g**2`` and
    the step is ``lr * g / (sqrt(acc) + eps)``. Frozen tensors are skipped
    entirely: neither the parameter nor its accumulator moves.
    """

    def __init__(self, tensors: dict, lr: float, alpha: float = 0.99, eps: float = 1e-5):
        self.lr = lr
        self.alpha = alpha
        self.eps = eps
        self.ms = {k: np.zeros_like(v) for k, v in tensors.items()}

    def step(self, tensors: dict, grads: dict, frozen: frozenset = frozenset()) -> None:
        for name, g in grads.items():
            if name in frozen:
                continue
            acc = self.ms[name]
            acc *= self.alpha
            acc += (1.0 - self.alpha) * g * g
            tensors[name] -= self.lr * g / (np.sqrt(acc) + self.eps)
