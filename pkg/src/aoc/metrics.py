"""Evaluation rollouts and the attention/usage summary statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .agent import _categorical, _egreedy
from .attention import AttentionBank
from .errors import UsageError
from .fourrooms import FourRooms, GridLayout
from .network import NetworkParams, forward


@dataclass
class EvalResult:
    lengths: np.ndarray
    returns: np.ndarray
    reached: np.ndarray
    usage: np.ndarray  # (options, states) visit counts of the executing option

    @property
    def mean_length(self) -> float:
        return float(self.lengths.mean())

    @property
    def mean_return(self) -> float:
        return float(self.returns.mean())

    @property
    def option_steps(self) -> np.ndarray:
        return self.usage.sum(axis=1)

    @property
    def usage_fractions(self) -> np.ndarray:
        steps = self.option_steps
        return steps / max(steps.sum(), 1.0)


def evaluate(
    layout: GridLayout,
    params: NetworkParams,
    bank: AttentionBank,
    *,
    goal,
    seed: int,
    episodes: int = 50,
    epsilon: float = 0.1,
    env_kwargs: dict | None = None,
    blocked_hallway: int | None = None,
) -> EvalResult:
    """Run frozen-policy episodes and record per-state option usage.

    Acting matches training: epsilon-greedy over option values, sampled
    actions, sampled terminations. Nothing is updated.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    env = FourRooms(layout, **(env_kwargs or {}), seed=rng.integers(2**63))
    if blocked_hallway is not None:
        env.block_hallway(blocked_hallway)
    n_opt = params.num_options
    h = bank.h()
    all_opts = np.arange(n_opt)

    lengths, returns, reached = [], [], []
    usage = np.zeros((n_opt, layout.n_states))
    for _ in range(episodes):
        state = env.reset(goal=goal).state
        option = None
        ep_ret, ep_len = 0.0, 0
        while True:
            x = np.zeros((n_opt, layout.n_states))
            x[all_opts, state] = h[all_opts, state]
            out = forward(params, x)
            q_diag = np.diagonal(out.q)
            if option is not None and rng.random() < out.beta[option, option]:
                option = None
            if option is None:
                option = _egreedy(rng, q_diag, epsilon)
            usage[option, state] += 1.0
            a = _categorical(rng, out.pi[option, option])
            res = env.step(a)
            ep_ret += res.reward
            ep_len += 1
            state = res.state
            if res.done or res.truncated:
                lengths.append(ep_len)
                returns.append(ep_ret)
                reached.append(res.done)
                break
    return EvalResult(
        lengths=np.array(lengths, dtype=float),
        returns=np.array(returns, dtype=float),
        reached=np.array(reached, dtype=bool),
        usage=usage,
    )


def dominant_usage(usage_fractions: np.ndarray) -> float:
    """Largest share of execution steps taken by any single option."""
    return float(np.max(usage_fractions))


def coverage(h: np.ndarray) -> np.ndarray:
    """Percent of states each option wins by largest mask value.

    Ties go to the lowest option id, so the percentages always sum to 100.
    """
    winners = np.argmax(h, axis=0)
    counts = np.bincount(winners, minlength=h.shape[0])
    return 100.0 * counts / h.shape[1]


def overlap_pct(h: np.ndarray, margin: float = 0.3, ceiling: float = 0.05) -> float:
    """Percent of states attended distinctly by a single option.

    A state counts when the gap between its largest and second-largest mask
    values exceeds ``margin`` and the second-largest is below ``ceiling``.
    Higher values mean less overlap between option masks.
    """
    if h.shape[0] < 2:
        return 100.0
    top2 = np.sort(h, axis=0)[-2:, :]
    distinct = (top2[1] - top2[0] > margin) & (top2[0] < ceiling)
    return 100.0 * float(distinct.sum()) / h.shape[1]


def usage_attention_consistency(
    usage: np.ndarray, h: np.ndarray, floor: float = 0.01
) -> float:
    """Share of execution steps spent in states the executing option ignores.

    A state is ignored by an option when its mask value is below ``floor``.
    Lower is better; 0 means options only act where they attend. Returns
    nan when there are no execution steps at all.
    """
    total = usage.sum()
    if total == 0:
        return math.nan
    return float(usage[h < floor].sum() / total)


def usage_std(usage_fractions: list) -> np.ndarray:
    """Per-option sample standard deviation of usage fractions across runs."""
    if len(usage_fractions) < 2:
        raise UsageError("need at least two runs to compute a standard deviation")
    return np.std(np.stack(usage_fractions), axis=0, ddof=1)


def trailing_mean(values, window: int = 100) -> np.ndarray:
    """Mean over the last ``window`` entries at each position (fewer at the start)."""
    v = np.asarray(values, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(1, len(v) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def first_recovery(lengths, threshold: float = 30.0, window: int = 100) -> int | None:
    """First episode count whose full trailing window has mean length below threshold.

    Returns the 1-based episode number, or None if it never happens. The
    window must be complete, so the earliest possible answer is ``window``.
    """
    v = np.asarray(lengths, dtype=float)
    if len(v) < window:
        return None
    means = trailing_mean(v, window)
    ok = np.flatnonzero(means[window - 1 :] < threshold)
    if ok.size == 0:
        return None
    return int(ok[0] + window)
