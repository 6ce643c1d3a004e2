"""Run orchestration: training runs, transfer runs, sweeps, and reports.

Every run writes a self-describing directory: a manifest with the resolved
config and its hash, per-seed episode logs, periodic checkpoints with
evaluation snapshots, and summary CSVs. All files are byte-deterministic for
a given config and seed list (no timestamps, stable ordering, repr floats).
"""

from __future__ import annotations

import csv
import json
import math
import sys
from dataclasses import replace
from itertools import product
from pathlib import Path

import numpy as np

from .agent import TRUNK, train
from .config import RunConfig
from .errors import ConfigurationError, TrainingError
from .fourrooms import GridLayout, build_layout
from .metrics import (
    coverage,
    dominant_usage,
    evaluate,
    overlap_pct,
    trailing_mean,
    usage_attention_consistency,
)
from .transfer import (
    load_checkpoint,
    pick_blocked_hallway,
    pick_new_goal,
    post_transfer_config,
    save_checkpoint,
    trunk_equal,
)

_KIND_CODE = {"goal": 1001, "blocked_hallway": 1002}


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_layout_csv(path, layout: GridLayout) -> None:
    rows = []
    for r in range(layout.height):
        for c in range(layout.width):
            cell = (r, c)
            wall = int(layout.walls[r, c])
            state = -1 if wall else layout.cell_index(cell)
            hallway = layout.hallways.index(cell) if cell in layout.hallways else -1
            rows.append([r, c, wall, state, hallway])
    write_csv(path, ["row", "col", "wall", "state", "hallway"], rows)


def write_episodes_csv(path, episodes, n_options: int) -> None:
    header = ["episode", "worker", "return", "length", "reached_goal", "frames"]
    header += [f"usage_{i}" for i in range(n_options)]
    rows = []
    for e in episodes:
        row = [e.index, e.worker, float(e.ret), e.length, int(e.reached_goal), e.frames]
        row += [float(u) for u in e.usage]
        rows.append(row)
    write_csv(path, header, rows)


def write_attention_csv(path, h: np.ndarray) -> None:
    n_opt, n_states = h.shape
    header = ["state"] + [f"option_{i}" for i in range(n_opt)]
    rows = [[s] + [float(h[o, s]) for o in range(n_opt)] for s in range(n_states)]
    write_csv(path, header, rows)


def write_usage_csv(path, usage: np.ndarray) -> None:
    n_opt, n_states = usage.shape
    header = ["state"] + [f"option_{i}" for i in range(n_opt)]
    rows = [[s] + [float(usage[o, s]) for o in range(n_opt)] for s in range(n_states)]
    write_csv(path, header, rows)


def _eval_seed(seed: int, frames: int) -> int:
    return int(np.random.SeedSequence([seed, frames]).generate_state(1)[0])


def snapshot_metrics(
    layout: GridLayout,
    params,
    bank,
    cfg: RunConfig,
    *,
    goal,
    blocked,
    seed: int,
    frames: int,
    episodes: int,
) -> tuple[dict, np.ndarray]:
    """Evaluate a checkpoint and compute the attention/usage statistics."""
    ev = evaluate(
        layout,
        params,
        bank,
        goal=goal,
        seed=_eval_seed(seed, frames),
        episodes=cfg.eval_episodes,
        epsilon=cfg.eval_epsilon,
        env_kwargs=cfg.env,
        blocked_hallway=blocked,
    )
    h = bank.h()
    cov = coverage(h)
    consistency = usage_attention_consistency(ev.usage, h)
    metrics = {
        "frames": frames,
        "episodes": episodes,
        "eval_episodes": int(len(ev.lengths)),
        "mean_length": ev.mean_length,
        "mean_return": ev.mean_return,
        "reach_rate": float(ev.reached.mean()),
        "usage_fractions": [float(u) for u in ev.usage_fractions],
        "dominant_usage": dominant_usage(ev.usage_fractions),
        "coverage": [float(c) for c in cov],
        "least_coverage": float(cov.min()),
        "most_coverage": float(cov.max()),
        "overlap_pct": overlap_pct(h),
        # not-available (no execution steps) is stored as null
        "consistency": None if math.isnan(consistency) else consistency,
    }
    return metrics, ev.usage


def _run_root(cfg: RunConfig, out_dir) -> Path:
    root = Path(out_dir or cfg.out_dir or Path("runs") / cfg.name)
    root.mkdir(parents=True, exist_ok=True)
    return root


def _seed_artifacts(cfg, layout, root, seed, result, extra_meta=None) -> dict:
    """Write one seed's episode log, checkpoints' evals, and final summary row."""
    sdir = root / f"seed_{seed}"
    ckdir = sdir / "checkpoints"
    ckdir.mkdir(parents=True, exist_ok=True)

    meta = {
        "seed": seed,
        "mode": cfg.mode,
        "goal": list(result.goal),
        "blocked_hallway": result.blocked_hallway,
        "layout_text": layout.text,
        "frames": result.frames,
        "episodes": len(result.episodes),
    }
    if extra_meta:
        meta.update(extra_meta)
    save_checkpoint(
        ckdir / "final.npz",
        result.params,
        result.bank,
        result.optimizer,
        result.frames,
        len(result.episodes),
        meta,
    )
    write_json(sdir / "seed_meta.json", meta)
    write_episodes_csv(sdir / "episodes.csv", result.episodes, cfg.agent.num_options)

    # evaluate every saved checkpoint, including the final one
    final_metrics = None
    for path in sorted(ckdir.glob("*.npz")):
        ck = load_checkpoint(path, expect_layout=layout)
        tag = "final" if path.stem == "final" else str(ck.frames)
        metrics, usage = snapshot_metrics(
            layout,
            ck.params,
            ck.bank,
            cfg,
            goal=result.goal,
            blocked=result.blocked_hallway,
            seed=seed,
            frames=ck.frames,
            episodes=ck.episodes,
        )
        write_attention_csv(sdir / f"attention_{tag}.csv", ck.bank.h())
        write_usage_csv(sdir / f"usage_{tag}.csv", usage)
        write_json(sdir / f"metrics_{tag}.json", metrics)
        if tag == "final":
            final_metrics = metrics
    return final_metrics


def _num(x) -> float:
    return math.nan if x is None else float(x)


def _summary_row(seed, result, metrics, n_options):
    row = [
        seed,
        result.goal[0],
        result.goal[1],
        -1 if result.blocked_hallway is None else result.blocked_hallway,
        result.frames,
        len(result.episodes),
        metrics["mean_length"],
        metrics["mean_return"],
        metrics["dominant_usage"],
        metrics["least_coverage"],
        metrics["most_coverage"],
        metrics["overlap_pct"],
        _num(metrics["consistency"]),
    ]
    row += metrics["usage_fractions"]
    return row


def _summary_header(n_options):
    return [
        "seed",
        "goal_row",
        "goal_col",
        "blocked",
        "frames",
        "episodes",
        "mean_length",
        "mean_return",
        "dominant_usage",
        "least_coverage",
        "most_coverage",
        "overlap_pct",
        "consistency",
    ] + [f"usage_{i}" for i in range(n_options)]


def run_train(cfg: RunConfig, out_dir=None) -> Path:
    """Train every seed of the config and write the run directory."""
    layout = build_layout(cfg.layout)
    root = _run_root(cfg, out_dir)
    write_json(
        root / "manifest.json",
        {
            "phase": "train",
            "config": cfg.resolved(),
            "config_hash": cfg.hash(),
            "layout_text": layout.text,
        },
    )
    write_layout_csv(root / "layout.csv", layout)

    rows = []
    for seed in cfg.seeds:
        sdir = root / f"seed_{seed}"
        ckdir = sdir / "checkpoints"
        ckdir.mkdir(parents=True, exist_ok=True)

        def on_checkpoint(frames, episodes, params, bank, optimizer):
            save_checkpoint(
                ckdir / f"step_{frames:010d}.npz",
                params,
                bank,
                optimizer,
                frames,
                len(episodes),
                {"seed": seed, "mode": cfg.mode, "layout_text": layout.text},
            )

        try:
            result = train(
                layout,
                cfg.agent,
                seed=seed,
                episodes=cfg.episodes,
                env_kwargs=cfg.env,
                goal=cfg.goal,
                checkpoint_every=cfg.checkpoint_every,
                on_checkpoint=on_checkpoint,
            )
        except TrainingError as err:
            write_json(root / "error.json", {"seed": seed, "error": str(err)})
            raise
        metrics = _seed_artifacts(cfg, layout, root, seed, result)
        rows.append(_summary_row(seed, result, metrics, cfg.agent.num_options))

    write_csv(root / "summary.csv", _summary_header(cfg.agent.num_options), rows)
    return root


def run_transfer(cfg: RunConfig, source=None, out_dir=None) -> Path:
    """Continue checkpoints from a source run on a mutated task, trunk frozen."""
    if cfg.transfer is None:
        raise ConfigurationError("config has no transfer section")
    source = Path(source or cfg.transfer.source or "")
    if not source.exists():
        raise ConfigurationError(f"transfer source run not found: {source}")
    layout = build_layout(cfg.layout)
    root = _run_root(cfg, out_dir)
    write_json(
        root / "manifest.json",
        {
            "phase": "transfer",
            "config": cfg.resolved(),
            "config_hash": cfg.hash(),
            "layout_text": layout.text,
            "source": str(source),
        },
    )
    write_layout_csv(root / "layout.csv", layout)

    post_cfg = post_transfer_config(cfg.agent, cfg.transfer.drop_penalties)
    rows = []
    for seed in cfg.seeds:
        ck_path = source / f"seed_{seed}" / "checkpoints" / "final.npz"
        if not ck_path.exists():
            raise ConfigurationError(f"source has no final checkpoint for seed {seed}")
        ck = load_checkpoint(ck_path, expect_layout=layout)
        if ck.params.num_options != post_cfg.num_options:
            raise ConfigurationError(
                f"checkpoint has {ck.params.num_options} options, "
                f"config wants {post_cfg.num_options}"
            )
        old_goal = tuple(ck.meta["goal"])
        t_rng = np.random.default_rng(
            np.random.SeedSequence([seed, _KIND_CODE[cfg.transfer.kind]])
        )
        if cfg.transfer.kind == "goal":
            new_goal, blocked = pick_new_goal(layout, old_goal, t_rng), None
        else:
            new_goal = old_goal
            blocked = pick_blocked_hallway(layout, old_goal, t_rng)

        pre_trunk = {k: ck.params.tensors[k].copy() for k in TRUNK}
        try:
            result = train(
                layout,
                post_cfg,
                seed=seed,
                episodes=cfg.transfer.episodes,
                env_kwargs=cfg.env,
                goal=new_goal,
                blocked_hallway=blocked,
                params=ck.params,
                bank=ck.bank,
                frozen=TRUNK,
            )
        except TrainingError as err:
            write_json(root / "error.json", {"seed": seed, "error": str(err)})
            raise
        frozen_ok = all(
            np.array_equal(pre_trunk[k], result.params.tensors[k]) for k in TRUNK
        )
        if not frozen_ok:
            raise ConfigurationError("frozen trunk tensors changed during transfer")
        metrics = _seed_artifacts(
            cfg,
            layout,
            root,
            seed,
            result,
            extra_meta={
                "transfer_kind": cfg.transfer.kind,
                "drop_penalties": cfg.transfer.drop_penalties,
                "old_goal": list(old_goal),
                "source": str(ck_path),
            },
        )
        rows.append(_summary_row(seed, result, metrics, post_cfg.num_options))

    write_csv(root / "summary.csv", _summary_header(post_cfg.num_options), rows)
    return root


def run_sweep(cfg: RunConfig, out_dir=None) -> Path:
    """Grid over attention weights and option counts; summary ranked by overlap."""
    if cfg.sweep is None:
        raise ConfigurationError("config has no sweep section")
    if cfg.mode != "aoc":
        raise ConfigurationError("sweeps require mode aoc")
    layout = build_layout(cfg.layout)
    root = _run_root(cfg, out_dir)
    write_json(
        root / "manifest.json",
        {
            "phase": "sweep",
            "config": cfg.resolved(),
            "config_hash": cfg.hash(),
            "layout_text": layout.text,
        },
    )
    seeds = cfg.sweep.seeds or cfg.seeds

    detail_rows = []
    cells = []
    for w1, w2, n_opt in product(
        cfg.sweep.w_overlap, cfg.sweep.w_smooth, cfg.sweep.num_options
    ):
        agent_cfg = replace(
            cfg.agent, w_overlap=w1, w_smooth=w2, num_options=n_opt
        )
        cell_metrics = []
        for seed in seeds:
            result = train(
                layout,
                agent_cfg,
                seed=seed,
                episodes=cfg.sweep.episodes,
                env_kwargs=cfg.env,
                goal=cfg.goal,
            )
            metrics, _ = snapshot_metrics(
                layout,
                result.params,
                result.bank,
                cfg,
                goal=result.goal,
                blocked=None,
                seed=seed,
                frames=result.frames,
                episodes=len(result.episodes),
            )
            cell_metrics.append(metrics)
            detail_rows.append(
                [w1, w2, n_opt, seed]
                + [
                    _num(metrics[k])
                    for k in (
                        "mean_length",
                        "mean_return",
                        "dominant_usage",
                        "least_coverage",
                        "most_coverage",
                        "overlap_pct",
                        "consistency",
                    )
                ]
            )

        def mean(key):
            return float(np.mean([_num(m[key]) for m in cell_metrics]))

        cells.append(
            [w1, w2, n_opt, len(seeds)]
            + [
                mean(k)
                for k in (
                    "mean_length",
                    "mean_return",
                    "dominant_usage",
                    "least_coverage",
                    "most_coverage",
                    "overlap_pct",
                    "consistency",
                )
            ]
        )

    cells.sort(key=lambda row: (-row[9], row[0], row[1], row[2]))
    header = [
        "w_overlap",
        "w_smooth",
        "num_options",
        "seeds",
        "mean_length",
        "mean_return",
        "dominant_usage",
        "least_coverage",
        "most_coverage",
        "overlap_pct",
        "consistency",
    ]
    write_csv(root / "sweep_summary.csv", header, cells)
    write_csv(
        root / "sweep_detail.csv",
        ["w_overlap", "w_smooth", "num_options", "seed"] + header[4:],
        detail_rows,
    )
    return root


def run_report(run_dir, out_dir=None) -> Path:
    """Aggregate a run directory into plot-ready CSVs."""
    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise ConfigurationError(f"{run_dir} has no manifest.json; not a run directory")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    n_options = manifest["config"]["agent"]["num_options"]
    report = Path(out_dir) if out_dir else run_dir / "report"
    report.mkdir(parents=True, exist_ok=True)

    seed_dirs = sorted(run_dir.glob("seed_*"), key=lambda p: int(p.name.split("_")[1]))
    complete = [
        d
        for d in seed_dirs
        if (d / "episodes.csv").exists() and (d / "metrics_final.json").exists()
    ]
    for d in seed_dirs:
        if d not in complete:
            print(f"warning: skipping incomplete seed directory {d}", file=sys.stderr)
    seed_dirs = complete
    if not seed_dirs:
        raise ConfigurationError(f"{run_dir} has no complete seed directories")

    # learning curve: trailing-100 smoothing per seed, then stats across seeds
    lengths, returns = [], []
    for sdir in seed_dirs:
        lens, rets = [], []
        with open(sdir / "episodes.csv", newline="") as fh:
            for rec in csv.DictReader(fh):
                lens.append(float(rec["length"]))
                rets.append(float(rec["return"]))
        lengths.append(trailing_mean(lens, 100))
        returns.append(trailing_mean(rets, 100))
    n_ep = min(len(v) for v in lengths)
    lengths = np.stack([v[:n_ep] for v in lengths])
    returns = np.stack([v[:n_ep] for v in returns])
    n_seeds = len(seed_dirs)
    ddof = 1 if n_seeds > 1 else 0
    rows = [
        [
            e + 1,
            n_seeds,
            float(lengths[:, e].mean()),
            float(lengths[:, e].std(ddof=ddof)),
            float(returns[:, e].mean()),
            float(returns[:, e].std(ddof=ddof)),
        ]
        for e in range(n_ep)
    ]
    write_csv(
        report / "learning_curve.csv",
        ["episode", "n_seeds", "length_mean", "length_std", "return_mean", "return_std"],
        rows,
    )

    # dominance curve over checkpoint frames present for every seed
    per_seed: list[dict] = []
    for sdir in seed_dirs:
        points = {}
        for path in sorted(sdir.glob("metrics_*.json")):
            if path.stem == "metrics_final":
                continue
            with open(path) as fh:
                m = json.load(fh)
            points[m["frames"]] = m["dominant_usage"]
        per_seed.append(points)
    common = sorted(set.intersection(*[set(p) for p in per_seed])) if per_seed else []
    rows = []
    for frames in common:
        vals = np.array([p[frames] for p in per_seed])
        rows.append(
            [frames, n_seeds, float(vals.mean()), float(vals.std(ddof=ddof))]
        )
    write_csv(
        report / "dominance_curve.csv",
        ["frames", "n_seeds", "dominant_mean", "dominant_std"],
        rows,
    )

    # final metrics per seed plus mean/std aggregate rows
    keys = [
        "mean_length",
        "mean_return",
        "dominant_usage",
        "least_coverage",
        "most_coverage",
        "overlap_pct",
        "consistency",
    ]
    usage_keys = [f"usage_{i}" for i in range(n_options)]
    finals = []
    for sdir in seed_dirs:
        with open(sdir / "metrics_final.json") as fh:
            finals.append(json.load(fh))
    rows = []
    for sdir, m in zip(seed_dirs, finals):
        rows.append(
            [sdir.name.split("_")[1]]
            + [_num(m[k]) for k in keys]
            + [m["usage_fractions"][i] for i in range(n_options)]
        )
    table = np.array(
        [[_num(m[k]) for k in keys] + m["usage_fractions"] for m in finals], dtype=float
    )
    rows.append(["mean"] + [float(x) for x in table.mean(axis=0)])
    rows.append(["std"] + [float(x) for x in table.std(axis=0, ddof=ddof)])
    write_csv(report / "final_metrics.csv", ["seed"] + keys + usage_keys, rows)
    return report
