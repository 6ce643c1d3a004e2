"""Task transfer: checkpoints, trunk freezing, and task mutations.

Transfer continues training from a checkpoint on a changed task, with the
shared trunk frozen so only the heads (and, when learnable, the attention
logits) keep adapting. Two mutations are supported: moving the goal to a new
random cell, and blocking a random hallway the goal does not sit in.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .agent import TRUNK, AgentConfig, LinearSchedule
from .attention import AttentionBank
from .errors import ConfigurationError
from .fourrooms import GridLayout
from .network import NetworkParams, RMSprop

TRANSFER_KINDS = ("goal", "blocked_hallway")


def pick_new_goal(layout: GridLayout, old_goal, rng: np.random.Generator):
    """Draw a goal cell different from the old one."""
    candidates = [c for c in layout.walkable if c != tuple(old_goal)]
    return candidates[rng.integers(len(candidates))]


def pick_blocked_hallway(layout: GridLayout, goal, rng: np.random.Generator) -> int:
    """Draw a hallway to close, never the one holding the goal."""
    ids = [i for i, cell in enumerate(layout.hallways) if cell != tuple(goal)]
    if not ids:
        raise ConfigurationError("no hallway can be blocked without losing the goal")
    return int(ids[rng.integers(len(ids))])


def post_transfer_config(cfg: AgentConfig, drop_penalties: bool = False) -> AgentConfig:
    """Config for the post-transfer phase of a run.

    Exploration and entropy schedules restart pinned at their end values
    (the pre-transfer phase already annealed them). ``drop_penalties`` zeroes
    the attention loss weights so the masks adapt on value gradient alone.
    """
    changes = {
        "epsilon": LinearSchedule.constant(cfg.epsilon.end),
        "entropy": LinearSchedule.constant(cfg.entropy.end),
    }
    if drop_penalties:
        changes["w_overlap"] = 0.0
        changes["w_smooth"] = 0.0
    return replace(cfg, **changes)


def trunk_equal(a: NetworkParams, b: NetworkParams) -> bool:
    """Bitwise comparison of the shared trunk tensors."""
    return all(np.array_equal(a.tensors[k], b.tensors[k]) for k in sorted(TRUNK))


@dataclass
class Checkpoint:
    params: NetworkParams
    bank: AttentionBank
    ms: dict  # RMSprop accumulators by slot name
    frames: int
    episodes: int
    meta: dict


def save_checkpoint(
    path,
    params: NetworkParams,
    bank: AttentionBank,
    optimizer: RMSprop,
    frames: int,
    episodes: int,
    meta: dict | None = None,
) -> None:
    arrays = {f"net_{k}": v for k, v in params.tensors.items()}
    arrays.update({f"ms_{k}": v for k, v in optimizer.ms.items()})
    if bank.learnable:
        arrays["bank_logits"] = bank.logits
    else:
        arrays["bank_fixed"] = bank.fixed
    arrays["counters"] = np.array([frames, episodes], dtype=np.int64)
    arrays["sizes"] = np.array(
        [params.num_inputs, params.num_options, params.num_actions, *params.hidden],
        dtype=np.int64,
    )
    arrays["meta_json"] = np.array(json.dumps(meta or {}, sort_keys=True))
    np.savez(path, **arrays)


def load_checkpoint(path, expect_layout: GridLayout | None = None) -> Checkpoint:
    """Read a checkpoint; optionally verify it was trained on the given layout."""
    with np.load(path, allow_pickle=False) as data:
        keys = set(data.files)
        required = {"counters", "sizes", "meta_json"}
        missing = required - keys
        if missing:
            raise ConfigurationError(f"checkpoint {path} is missing keys: {sorted(missing)}")
        sizes = data["sizes"]
        tensors = {
            k[len("net_") :]: data[k].copy() for k in keys if k.startswith("net_")
        }
        if not tensors:
            raise ConfigurationError(f"checkpoint {path} holds no network tensors")
        params = NetworkParams(
            tensors=tensors,
            num_inputs=int(sizes[0]),
            num_options=int(sizes[1]),
            num_actions=int(sizes[2]),
            hidden=(int(sizes[3]), int(sizes[4])),
        )
        if "bank_logits" in keys:
            bank = AttentionBank(logits=data["bank_logits"].copy())
        elif "bank_fixed" in keys:
            bank = AttentionBank(fixed=data["bank_fixed"].copy())
        else:
            raise ConfigurationError(f"checkpoint {path} holds no attention bank")
        ms = {k[len("ms_") :]: data[k].copy() for k in keys if k.startswith("ms_")}
        counters = data["counters"]
        meta = json.loads(str(data["meta_json"]))
    if expect_layout is not None:
        text = meta.get("layout_text")
        if text is not None and text != expect_layout.text:
            raise ConfigurationError(
                f"checkpoint {path} was trained on a different layout"
            )
        if params.num_inputs != expect_layout.n_states:
            raise ConfigurationError(
                f"checkpoint input size {params.num_inputs} does not match "
                f"layout with {expect_layout.n_states} states"
            )
    return Checkpoint(
        params=params,
        bank=bank,
        ms=ms,
        frames=int(counters[0]),
        episodes=int(counters[1]),
        meta=meta,
    )
