"""Synchronous multi-worker option-critic training with per-option attention.

Workers step their environments in lockstep. Each worker runs call-and-return
option execution: an epsilon-greedy policy over option values picks an option,
the option's softmax policy picks actions from the option's masked view of the
state, and the option runs until its termination head fires. Every ``rollout``
steps the collected transitions are turned into one RMSprop update.

Gradient routing follows the update rules: the value head regresses on
bootstrapped n-step targets, the policy heads ascend the log-likelihood scaled
by those targets (plus an entropy bonus), the termination heads descend the
advantage of continuing, and the attention logits ascend the executing
option's value probe while descending the two mask penalties. Network weights
never receive gradient through the attention path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import attention as att
from .errors import ConfigurationError, TrainingError, UsageError
from .fourrooms import FourRooms, GridLayout
from .network import (
    RMSprop,
    NetworkParams,
    accumulate,
    backward,
    forward_tape,
    init_params,
    zero_grads,
)

TRUNK = frozenset({"w1", "b1", "w2", "b2"})


@dataclass(frozen=True)
class LinearSchedule:
    """Linear interpolation from start to end over a horizon, then flat."""

    start: float
    end: float
    horizon: int

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigurationError(f"schedule horizon must be >= 1, got {self.horizon}")

    def value(self, t: int) -> float:
        if t >= self.horizon:
            return self.end
        return self.start + (self.end - self.start) * (t / self.horizon)

    @classmethod
    def constant(cls, v: float) -> "LinearSchedule":
        return cls(v, v, 1)


@dataclass
class AgentConfig:
    num_options: int = 4
    num_actions: int = 4
    gamma: float = 0.99
    lr: float = 1e-3
    rollout: int = 5
    workers: int = 5
    # schedule horizons count synchronized vector steps (frames / workers)
    epsilon: LinearSchedule = field(
        default_factory=lambda: LinearSchedule(1.0, 0.1, 100_000)
    )
    entropy: LinearSchedule = field(
        default_factory=lambda: LinearSchedule(100.0, 0.1, 100_000)
    )
    critic_coef: float = 1.0
    w_overlap: float = 4.0
    w_smooth: float = 2.0
    attention: str = "learnable"  # learnable | identity | rooms
    attention_scale: float = 0.1
    hidden: tuple = (60, 200)
    bootstrap: str = "own_mask"  # own_mask | executing_mask
    rmsprop_alpha: float = 0.99
    rmsprop_eps: float = 1e-5

    def __post_init__(self):
        if self.num_options < 2:
            raise ConfigurationError(f"need at least 2 options, got {self.num_options}")
        if self.workers < 1 or self.rollout < 1:
            raise ConfigurationError("workers and rollout must be positive")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError(f"gamma must be in [0, 1), got {self.gamma}")
        if self.lr <= 0.0:
            raise ConfigurationError(f"lr must be positive, got {self.lr}")
        if self.w_overlap < 0.0 or self.w_smooth < 0.0:
            raise ConfigurationError("attention loss weights must be non-negative")
        if self.attention not in ("learnable", "identity", "rooms"):
            raise ConfigurationError(f"unknown attention kind {self.attention!r}")
        if self.attention != "learnable" and (self.w_overlap or self.w_smooth):
            raise ConfigurationError(
                "attention losses apply only to learnable attention; "
                "set w_overlap and w_smooth to 0"
            )
        if self.bootstrap not in ("own_mask", "executing_mask"):
            raise ConfigurationError(f"unknown bootstrap kind {self.bootstrap!r}")
        if len(self.hidden) != 2 or min(self.hidden) < 1:
            raise ConfigurationError(f"hidden must be two positive sizes, got {self.hidden}")


def td_target(
    reward: float,
    done: bool,
    gamma: float,
    q_next_options: np.ndarray,
    q_next_executing: float,
    beta_next: float,
) -> float:
    """One-step option-value target.

    ``reward`` alone at terminal states; otherwise the executing option's
    next value weighted by its continuation probability plus the best
    option's value weighted by the termination probability.
    """
    if done:
        return float(reward)
    cont = (1.0 - beta_next) * q_next_executing
    switch = beta_next * float(np.max(q_next_options))
    return float(reward + gamma * (cont + switch))


@dataclass
class BlockCache:
    """One batched forward over (state, option) rows, tape kept for backward."""

    states: np.ndarray
    options: np.ndarray
    tape: object

    @property
    def rows(self) -> int:
        return len(self.states)


def make_block(
    params: NetworkParams, h: np.ndarray, states, options
) -> BlockCache:
    """Forward masked one-hot observations for the given (state, option) rows."""
    states = np.asarray(states, dtype=int)
    options = np.asarray(options, dtype=int)
    x = np.zeros((len(states), h.shape[1]))
    x[np.arange(len(states)), states] = h[options, states]
    _, tape = forward_tape(params, x)
    return BlockCache(states=states, options=options, tape=tape)


@dataclass(slots=True)
class Transition:
    worker: int
    state: int
    option: int
    action: int
    reward: float
    done: bool
    truncated: bool
    next_state: int
    src_block: int
    src_base: int  # row of (state, option 0) in the source block
    dst_block: int  # block holding (next_state, option) rows; -1 when done
    dst_base: int
    q_next_diag: np.ndarray | None  # Q(next through own mask) per option
    q_next_row: np.ndarray | None  # Q(next through executing mask), all options
    beta_next: float
    epsilon: float
    ent_coef: float
    target: float = math.nan
    advantage: float = math.nan


@dataclass
class TransitionBatch:
    blocks: list
    transitions: list
    segments: list  # visited-state index sequences for the smoothness loss
    h: np.ndarray


def fill_targets(batch: TransitionBatch, cfg: AgentConfig) -> None:
    """Compute n-step targets and termination advantages in place.

    Transitions are grouped per worker in time order and split at episode
    boundaries; each group bootstraps once from its last transition and
    propagates the return backwards. The termination advantage compares the
    executing option's next value against the epsilon-soft option value.
    """
    by_worker: dict[int, list[Transition]] = {}
    for t in batch.transitions:
        by_worker.setdefault(t.worker, []).append(t)

    for trs in by_worker.values():
        groups: list[list[Transition]] = [[]]
        for t in trs:
            groups[-1].append(t)
            if t.done or t.truncated:
                groups.append([])
        for group in groups:
            if not group:
                continue
            last = group[-1]
            if last.done:
                ret = float(last.reward)
            else:
                q_max_src = (
                    last.q_next_diag if cfg.bootstrap == "own_mask" else last.q_next_row
                )
                ret = td_target(
                    last.reward,
                    False,
                    cfg.gamma,
                    q_max_src,
                    float(last.q_next_row[last.option]),
                    last.beta_next,
                )
            last.target = ret
            for t in reversed(group[:-1]):
                ret = float(t.reward) + cfg.gamma * ret
                t.target = ret
        for t in trs:
            if t.done:
                t.advantage = 0.0
            else:
                q = t.q_next_diag
                v = (1.0 - t.epsilon) * float(np.max(q)) + t.epsilon * float(np.mean(q))
                t.advantage = float(q[t.option]) - v


def improvement_grads(
    params: NetworkParams,
    bank: att.AttentionBank,
    batch: TransitionBatch,
    cfg: AgentConfig,
    attention_paths: str = "algorithm",
) -> tuple[dict, np.ndarray | None, dict]:
    """Assemble gradients for one update from an annotated batch.

    Returns ``(network grads, attention logit grads, loss terms)`` under the
    minimization convention. With ``attention_paths="algorithm"`` the logits
    receive gradient only from the value probe and the mask penalties; with
    ``"all"`` every loss term also flows into the logits through the masked
    observations (the network grads are identical either way).
    """
    if attention_paths not in ("algorithm", "all"):
        raise UsageError(f"unknown attention_paths {attention_paths!r}")
    n_blocks = len(batch.blocks)
    dq = [None] * n_blocks
    dpi = [None] * n_blocks
    dbeta = [None] * n_blocks
    dq_probe = [None] * n_blocks

    def ensure(slot, idx, shape):
        if slot[idx] is None:
            slot[idx] = np.zeros(shape)
        return slot[idx]

    for t in batch.transitions:
        if math.isnan(t.target):
            raise UsageError("batch has unfilled targets; call fill_targets first")
        blk = batch.blocks[t.src_block]
        out = blk.tape.out
        row = t.src_base + t.option

        d = ensure(dq, t.src_block, out.q.shape)
        d[row, t.option] += cfg.critic_coef * (out.q[row, t.option] - t.target)

        p = out.pi[row, t.option]
        d = ensure(dpi, t.src_block, out.pi.shape)
        d[row, t.option, t.action] += -t.target / max(p[t.action], 1e-12)
        if t.ent_coef:
            d[row, t.option, :] += t.ent_coef * (np.log(np.maximum(p, 1e-300)) + 1.0)

        if not t.done:
            dst = batch.blocks[t.dst_block]
            d = ensure(dbeta, t.dst_block, dst.tape.out.beta.shape)
            d[t.dst_base + t.option, t.option] += t.advantage

        if bank.learnable:
            d = ensure(dq_probe, t.src_block, out.q.shape)
            d[row, t.option] += -1.0

    grads = zero_grads(params)
    dh = np.zeros_like(batch.h) if bank.learnable else None
    for i, blk in enumerate(batch.blocks):
        if dq[i] is None and dpi[i] is None and dbeta[i] is None:
            continue
        g, dx = backward(params, blk.tape, dq=dq[i], dpi=dpi[i], dbeta=dbeta[i])
        accumulate(grads, g)
        if bank.learnable and attention_paths == "all":
            rows = np.arange(blk.rows)
            np.add.at(dh, (blk.options, blk.states), dx[rows, blk.states])
    if bank.learnable:
        for i, blk in enumerate(batch.blocks):
            if dq_probe[i] is None:
                continue
            _, dx = backward(params, blk.tape, dq=dq_probe[i])
            rows = np.arange(blk.rows)
            np.add.at(dh, (blk.options, blk.states), dx[rows, blk.states])

    terms = {}
    dlogits = None
    if bank.learnable:
        if cfg.w_overlap:
            # the diversity term ticks once per synchronized vector step, on
            # the same clock as the schedules; the batch carries one
            # transition per worker per step
            overlap, d1 = att.cosine_overlap(batch.h)
            workers = len({t.worker for t in batch.transitions})
            n = len(batch.transitions) // max(1, workers)
            dh += cfg.w_overlap * n * d1
            terms["overlap"] = n * overlap
        if cfg.w_smooth:
            smooth, d2 = att.smoothness(batch.h, batch.segments)
            dh += cfg.w_smooth * d2
            terms["smooth"] = smooth
        dlogits = att.logit_grads(bank, dh)
    return grads, dlogits, terms


@dataclass
class EpisodeRecord:
    index: int
    worker: int
    ret: float
    length: int
    reached_goal: bool
    frames: int
    usage: np.ndarray  # fraction of steps each option was executing


@dataclass
class TrainResult:
    params: NetworkParams
    bank: att.AttentionBank
    optimizer: RMSprop
    frames: int
    episodes: list
    goal: tuple
    blocked_hallway: int | None


def _categorical(rng: np.random.Generator, probs: np.ndarray) -> int:
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    return min(idx, len(probs) - 1)


def _egreedy(rng: np.random.Generator, q: np.ndarray, eps: float) -> int:
    if rng.random() < eps:
        return int(rng.integers(len(q)))
    return int(np.argmax(q))


def build_bank(
    cfg: AgentConfig, layout: GridLayout, rng: np.random.Generator
) -> att.AttentionBank:
    if cfg.attention == "learnable":
        return att.learnable_bank(
            rng, cfg.num_options, layout.n_states, cfg.attention_scale
        )
    if cfg.attention == "identity":
        return att.identity_bank(cfg.num_options, layout.n_states)
    return att.room_bank(layout, cfg.num_options)


def train(
    layout: GridLayout,
    cfg: AgentConfig,
    *,
    seed: int,
    episodes: int,
    env_kwargs: dict | None = None,
    goal="random",
    blocked_hallway: int | None = None,
    params: NetworkParams | None = None,
    bank: att.AttentionBank | None = None,
    frozen: frozenset = frozenset(),
    frames_limit: int | None = None,
    checkpoint_every: int | None = None,
    on_checkpoint=None,
) -> TrainResult:
    """Run synchronous training until ``episodes`` episodes complete.

    The goal is resolved once per run: every episode of every worker chases
    the same goal cell. Workers differ only in their random streams. The
    exploration and entropy schedules advance once per synchronized vector
    step; frame counts (steps times workers) drive checkpoint cadence. Passing
    ``params``/``bank`` continues from existing weights (used for transfer);
    ``frozen`` names tensors the optimizer must not touch. ``on_checkpoint``
    fires whenever the global frame count crosses a ``checkpoint_every``
    boundary and receives the episode records completed so far. Raises
    TrainingError if gradients go non-finite.
    """
    env_kwargs = dict(env_kwargs or {})
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(3 + 2 * cfg.workers)
    goal_rng = np.random.default_rng(children[0])
    net_rng = np.random.default_rng(children[1])
    bank_rng = np.random.default_rng(children[2])
    env_seeds = children[3 : 3 + cfg.workers]
    agent_rngs = [
        np.random.default_rng(c) for c in children[3 + cfg.workers : 3 + 2 * cfg.workers]
    ]

    envs = [FourRooms(layout, **env_kwargs, seed=s) for s in env_seeds]
    if blocked_hallway is not None:
        for env in envs:
            env.block_hallway(blocked_hallway)
    if goal == "random":
        candidates = [
            c
            for c in layout.walkable
            if blocked_hallway is None or c != layout.hallways[blocked_hallway]
        ]
        goal_cell = candidates[goal_rng.integers(len(candidates))]
    else:
        goal_cell = tuple(goal)

    if params is None:
        params = init_params(
            net_rng, layout.n_states, cfg.num_options, cfg.num_actions, cfg.hidden
        )
    if bank is None:
        bank = build_bank(cfg, layout, bank_rng)
    if bank.shape != (cfg.num_options, layout.n_states):
        raise ConfigurationError(
            f"attention bank shape {bank.shape} does not match "
            f"({cfg.num_options}, {layout.n_states})"
        )
    if params.num_inputs != layout.n_states or params.num_options != cfg.num_options:
        raise ConfigurationError("network sizing does not match layout or config")
    bad = frozen - set(params.tensors)
    if bad:
        raise ConfigurationError(f"unknown frozen tensors: {sorted(bad)}")

    slots = dict(params.tensors)
    if bank.learnable:
        slots["att_logits"] = bank.logits
    optimizer = RMSprop(slots, cfg.lr, cfg.rmsprop_alpha, cfg.rmsprop_eps)

    n_opt = cfg.num_options
    W = cfg.workers
    cur_state = [0] * W
    cur_option: list[int | None] = [None] * W
    ep_ret = [0.0] * W
    ep_len = [0] * W
    ep_usage = [np.zeros(n_opt) for _ in range(W)]
    for w, env in enumerate(envs):
        cur_state[w] = env.reset(goal=goal_cell).state

    frames = 0
    completed: list[EpisodeRecord] = []
    ckpt_mark = 0

    def base_rows():
        states = np.repeat(cur_state, n_opt)
        options = np.tile(np.arange(n_opt), W)
        return states, options

    while len(completed) < episodes and (frames_limit is None or frames < frames_limit):
        h = bank.h()
        states, options = base_rows()
        blocks = [make_block(params, h, states, options)]
        transitions: list[Transition] = []
        segments: list[list[int]] = []
        open_seg = [[cur_state[w]] for w in range(W)]

        for _ in range(cfg.rollout):
            # schedules tick once per synchronized vector step, not per frame
            eps_now = cfg.epsilon.value(frames // W)
            ent_now = cfg.entropy.value(frames // W)
            cur = blocks[-1]
            cur_idx = len(blocks) - 1

            # workers without an option (fresh episodes) pick one first
            for w in range(W):
                if cur_option[w] is None:
                    qd = np.diagonal(cur.tape.out.q[w * n_opt : (w + 1) * n_opt])
                    cur_option[w] = _egreedy(agent_rngs[w], qd, eps_now)

            steps = []
            for w in range(W):
                omega = cur_option[w]
                row = w * n_opt + omega
                probs = cur.tape.out.pi[row, omega]
                a = _categorical(agent_rngs[w], probs)
                res = envs[w].step(a)
                steps.append((a, res))
                ep_ret[w] += res.reward
                ep_len[w] += 1
                ep_usage[w][omega] += 1.0
                open_seg[w].append(res.state)

            # next block: every worker's new current state, plus extra rows
            # for truncated workers whose bootstrap state is not their reset state
            next_states = []
            next_options = []
            extra_base: dict[int, int] = {}
            reset_states = {}
            for w in range(W):
                _, res = steps[w]
                if res.done or res.truncated:
                    reset_states[w] = envs[w].reset().state
                    next_states.extend([reset_states[w]] * n_opt)
                else:
                    next_states.extend([res.state] * n_opt)
                next_options.extend(range(n_opt))
            for w in range(W):
                _, res = steps[w]
                if res.truncated:
                    extra_base[w] = len(next_states)
                    next_states.extend([res.state] * n_opt)
                    next_options.extend(range(n_opt))
            nxt = make_block(params, h, next_states, next_options)
            blocks.append(nxt)
            nxt_idx = cur_idx + 1
            out = nxt.tape.out

            for w in range(W):
                a, res = steps[w]
                omega = cur_option[w]
                if res.done:
                    dst_block, dst_base = -1, -1
                    q_diag = q_row = None
                    beta_next = 0.0
                else:
                    dst_base = extra_base.get(w, w * n_opt)
                    dst_block = nxt_idx
                    grp = slice(dst_base, dst_base + n_opt)
                    q_diag = np.diagonal(out.q[grp]).copy()
                    q_row = out.q[dst_base + omega].copy()
                    beta_next = float(out.beta[dst_base + omega, omega])
                transitions.append(
                    Transition(
                        worker=w,
                        state=cur_state[w],
                        option=omega,
                        action=a,
                        reward=res.reward,
                        done=res.done,
                        truncated=res.truncated,
                        next_state=res.state,
                        src_block=cur_idx,
                        src_base=w * n_opt,
                        dst_block=dst_block,
                        dst_base=dst_base,
                        q_next_diag=q_diag,
                        q_next_row=q_row,
                        beta_next=beta_next,
                        epsilon=eps_now,
                        ent_coef=ent_now,
                    )
                )

                if res.done or res.truncated:
                    completed.append(
                        EpisodeRecord(
                            index=len(completed),
                            worker=w,
                            ret=ep_ret[w],
                            length=ep_len[w],
                            reached_goal=res.done,
                            frames=frames + W,
                            usage=ep_usage[w] / max(ep_len[w], 1),
                        )
                    )
                    ep_ret[w] = 0.0
                    ep_len[w] = 0
                    ep_usage[w] = np.zeros(n_opt)
                    segments.append(open_seg[w])
                    cur_state[w] = reset_states[w]
                    open_seg[w] = [cur_state[w]]
                    base = w * n_opt
                    qd = np.diagonal(out.q[base : base + n_opt])
                    cur_option[w] = _egreedy(agent_rngs[w], qd, eps_now)
                else:
                    cur_state[w] = res.state
                    if agent_rngs[w].random() < beta_next:
                        cur_option[w] = _egreedy(agent_rngs[w], q_diag, eps_now)

            frames += W

        for w in range(W):
            segments.append(open_seg[w])

        batch = TransitionBatch(
            blocks=blocks, transitions=transitions, segments=segments, h=h
        )
        fill_targets(batch, cfg)
        grads, dlogits, _ = improvement_grads(params, bank, batch, cfg)

        ok = all(np.isfinite(g).all() for g in grads.values())
        if ok and dlogits is not None:
            ok = bool(np.isfinite(dlogits).all())
        if not ok:
            raise TrainingError(f"non-finite gradients at frame {frames}")

        step_grads = dict(grads)
        if dlogits is not None:
            step_grads["att_logits"] = dlogits
        optimizer.step(slots, step_grads, frozen=frozen)
        params.bump()

        if checkpoint_every and on_checkpoint is not None:
            mark = frames // checkpoint_every
            if mark > ckpt_mark:
                ckpt_mark = mark
                on_checkpoint(frames, completed, params, bank, optimizer)

    return TrainResult(
        params=params,
        bank=bank,
        optimizer=optimizer,
        frames=frames,
        episodes=completed,
        goal=goal_cell,
        blocked_hallway=blocked_hallway,
    )
