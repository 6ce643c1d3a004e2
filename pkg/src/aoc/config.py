"""YAML run configuration: parsing, validation, canonical hashing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import yaml

from .agent import AgentConfig, LinearSchedule
from .errors import ConfigurationError

MODES = ("aoc", "oc", "hardcoded")

ENV_DEFAULTS = {
    "slip": 0.02,
    "step_cap": 2000,
    "step_reward": -1.0,
    "goal_reward": 20.0,
}

MODE_ATTENTION = {"aoc": "learnable", "oc": "identity", "hardcoded": "rooms"}


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigurationError(msg)


def _check_keys(d: dict, allowed: set, where: str) -> None:
    unknown = set(d) - allowed
    _require(not unknown, f"unknown keys in {where}: {sorted(unknown)}")


def _schedule(value, where: str) -> LinearSchedule:
    if isinstance(value, (int, float)):
        return LinearSchedule.constant(float(value))
    _require(isinstance(value, dict), f"{where} must be a number or start/end/horizon map")
    _check_keys(value, {"start", "end", "horizon"}, where)
    _require(
        {"start", "end", "horizon"} <= set(value),
        f"{where} needs start, end, and horizon",
    )
    return LinearSchedule(
        float(value["start"]), float(value["end"]), int(value["horizon"])
    )


@dataclass
class TransferSpec:
    kind: str
    drop_penalties: bool = False
    episodes: int = 10_000
    source: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "TransferSpec":
        _check_keys(d, {"kind", "drop_penalties", "episodes", "source"}, "transfer")
        _require("kind" in d, "transfer needs a kind: goal or blocked_hallway")
        kind = d["kind"]
        _require(
            kind in ("goal", "blocked_hallway"),
            f"transfer kind must be goal or blocked_hallway, got {kind!r}",
        )
        spec = cls(
            kind=kind,
            drop_penalties=bool(d.get("drop_penalties", False)),
            episodes=int(d.get("episodes", 10_000)),
            source=d.get("source"),
        )
        _require(spec.episodes > 0, "transfer episodes must be positive")
        return spec


@dataclass
class SweepSpec:
    w_overlap: list = field(default_factory=lambda: [4.0])
    w_smooth: list = field(default_factory=lambda: [2.0])
    num_options: list = field(default_factory=lambda: [4])
    episodes: int = 5_000
    seeds: list | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        _check_keys(
            d, {"w_overlap", "w_smooth", "num_options", "episodes", "seeds"}, "sweep"
        )

        def listify(key, cast, default):
            v = d.get(key, default)
            if not isinstance(v, list):
                v = [v]
            _require(len(v) > 0, f"sweep {key} must not be empty")
            return [cast(x) for x in v]

        spec = cls(
            w_overlap=listify("w_overlap", float, [4.0]),
            w_smooth=listify("w_smooth", float, [2.0]),
            num_options=listify("num_options", int, [4]),
            episodes=int(d.get("episodes", 5_000)),
            seeds=[int(s) for s in d["seeds"]] if "seeds" in d else None,
        )
        _require(spec.episodes > 0, "sweep episodes must be positive")
        _require(all(w >= 0 for w in spec.w_overlap), "sweep w_overlap must be >= 0")
        _require(all(w >= 0 for w in spec.w_smooth), "sweep w_smooth must be >= 0")
        _require(all(n >= 2 for n in spec.num_options), "sweep num_options must be >= 2")
        return spec


AGENT_KEYS = {
    "num_options",
    "gamma",
    "lr",
    "rollout",
    "workers",
    "epsilon",
    "entropy",
    "critic_coef",
    "w_overlap",
    "w_smooth",
    "attention_scale",
    "hidden",
    "bootstrap",
    "rmsprop_alpha",
    "rmsprop_eps",
}


@dataclass
class RunConfig:
    name: str
    mode: str = "aoc"
    layout: str = "fourrooms"
    goal: object = "random"
    seeds: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    episodes: int = 30_000
    env: dict = field(default_factory=lambda: dict(ENV_DEFAULTS))
    agent: AgentConfig = field(default_factory=AgentConfig)
    checkpoint_every: int = 100_000
    eval_episodes: int = 50
    eval_epsilon: float = 0.1
    out_dir: str | None = None
    transfer: TransferSpec | None = None
    sweep: SweepSpec | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        _require(isinstance(d, dict), "config root must be a mapping")
        allowed = {
            "name",
            "mode",
            "layout",
            "goal",
            "seeds",
            "episodes",
            "env",
            "agent",
            "checkpoint_every",
            "eval_episodes",
            "eval_epsilon",
            "out_dir",
            "transfer",
            "sweep",
        }
        _check_keys(d, allowed, "config")
        _require("name" in d and str(d["name"]), "config needs a non-empty name")
        mode = d.get("mode", "aoc")
        _require(mode in MODES, f"mode must be one of {MODES}, got {mode!r}")

        env = dict(ENV_DEFAULTS)
        if "env" in d:
            _check_keys(d["env"], set(ENV_DEFAULTS), "env")
            env.update(d["env"])
        env["slip"] = float(env["slip"])
        env["step_cap"] = int(env["step_cap"])
        env["step_reward"] = float(env["step_reward"])
        env["goal_reward"] = float(env["goal_reward"])

        agent_d = dict(d.get("agent", {}))
        _check_keys(agent_d, AGENT_KEYS, "agent")
        if mode != "aoc":
            for key in ("w_overlap", "w_smooth"):
                _require(
                    float(agent_d.get(key, 0.0)) == 0.0,
                    f"agent.{key} must be 0 (or omitted) in mode {mode!r}",
                )
            agent_d["w_overlap"] = 0.0
            agent_d["w_smooth"] = 0.0
        if "epsilon" in agent_d:
            agent_d["epsilon"] = _schedule(agent_d["epsilon"], "agent.epsilon")
        if "entropy" in agent_d:
            agent_d["entropy"] = _schedule(agent_d["entropy"], "agent.entropy")
        if "hidden" in agent_d:
            hidden = agent_d["hidden"]
            _require(
                isinstance(hidden, list) and len(hidden) == 2,
                "agent.hidden must be a list of two sizes",
            )
            agent_d["hidden"] = (int(hidden[0]), int(hidden[1]))
        agent_d["attention"] = MODE_ATTENTION[mode]
        agent = AgentConfig(**agent_d)

        goal = d.get("goal", "random")
        if goal != "random":
            _require(
                isinstance(goal, list) and len(goal) == 2,
                "goal must be 'random' or a [row, col] pair",
            )
            goal = (int(goal[0]), int(goal[1]))

        seeds = d.get("seeds", [1, 2, 3, 4, 5])
        _require(
            isinstance(seeds, list) and seeds and all(isinstance(s, int) for s in seeds),
            "seeds must be a non-empty list of integers",
        )
        _require(len(set(seeds)) == len(seeds), "seeds must be distinct")

        cfg = cls(
            name=str(d["name"]),
            mode=mode,
            layout=str(d.get("layout", "fourrooms")),
            goal=goal,
            seeds=list(seeds),
            episodes=int(d.get("episodes", 30_000)),
            env=env,
            agent=agent,
            checkpoint_every=int(d.get("checkpoint_every", 100_000)),
            eval_episodes=int(d.get("eval_episodes", 50)),
            eval_epsilon=float(d.get("eval_epsilon", 0.1)),
            out_dir=d.get("out_dir"),
            transfer=TransferSpec.from_dict(d["transfer"]) if "transfer" in d else None,
            sweep=SweepSpec.from_dict(d["sweep"]) if "sweep" in d else None,
        )
        _require(cfg.episodes > 0, "episodes must be positive")
        _require(cfg.checkpoint_every > 0, "checkpoint_every must be positive")
        _require(cfg.eval_episodes > 0, "eval_episodes must be positive")
        _require(0.0 <= cfg.eval_epsilon <= 1.0, "eval_epsilon must be in [0, 1]")
        return cfg

    def resolved(self) -> dict:
        """Plain-type view of the full configuration, defaults included."""
        agent = {
            "num_options": self.agent.num_options,
            "num_actions": self.agent.num_actions,
            "gamma": self.agent.gamma,
            "lr": self.agent.lr,
            "rollout": self.agent.rollout,
            "workers": self.agent.workers,
            "epsilon": vars(self.agent.epsilon).copy(),
            "entropy": vars(self.agent.entropy).copy(),
            "critic_coef": self.agent.critic_coef,
            "w_overlap": self.agent.w_overlap,
            "w_smooth": self.agent.w_smooth,
            "attention": self.agent.attention,
            "attention_scale": self.agent.attention_scale,
            "hidden": list(self.agent.hidden),
            "bootstrap": self.agent.bootstrap,
            "rmsprop_alpha": self.agent.rmsprop_alpha,
            "rmsprop_eps": self.agent.rmsprop_eps,
        }
        out = {
            "name": self.name,
            "mode": self.mode,
            "layout": self.layout,
            "goal": "random" if self.goal == "random" else list(self.goal),
            "seeds": self.seeds,
            "episodes": self.episodes,
            "env": self.env,
            "agent": agent,
            "checkpoint_every": self.checkpoint_every,
            "eval_episodes": self.eval_episodes,
            "eval_epsilon": self.eval_epsilon,
        }
        if self.transfer is not None:
            out["transfer"] = {
                "kind": self.transfer.kind,
                "drop_penalties": self.transfer.drop_penalties,
                "episodes": self.transfer.episodes,
                "source": self.transfer.source,
            }
        if self.sweep is not None:
            out["sweep"] = {
                "w_overlap": self.sweep.w_overlap,
                "w_smooth": self.sweep.w_smooth,
                "num_options": self.sweep.num_options,
                "episodes": self.sweep.episodes,
                "seeds": self.sweep.seeds,
            }
        return out

    def hash(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except yaml.YAMLError as e:
        raise ConfigurationError(f"config file {path} is not valid YAML: {e}") from None
    return RunConfig.from_dict(data)
