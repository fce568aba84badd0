"""Command-line driver: train, certify, synthesize, simulate, compare.

Every command is a pure function of (config, input files, seed); outputs are
written with fixed float formatting and no timestamps so reruns are
byte-identical.  Wall-clock times go to the log only.

Exit codes: 0 ok, 2 configuration error, 3 input/output error,
4 training failure, 5 soundness violation found by ``compare``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .abstraction import Label, Partition
from .certifier import ValueTable, certify
from .config import ConfigError, ExperimentConfig, load_config
from .core import make_rng
from .neural import MLPArchitecture, Network, fit_regression, load_network, save_network
from .posterior import DiagGaussianPosterior, TrainingError, fit_vi, load_posterior, predictive_rmse, save_posterior
from .simulation import estimate_reach, generate_dataset, rollout, save_trajectories, scripted_action
from .svg import write_heatmap
from .synthesis import SynthesizedStrategy, improve_policy, synthesize_grid

__all__ = ["main", "EXIT_OK", "EXIT_CONFIG", "EXIT_IO", "EXIT_TRAINING", "EXIT_UNSOUND"]

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_TRAINING, EXIT_UNSOUND = 0, 2, 3, 4, 5

# RNG stream keys (the certifier uses (seed, k, cell) directly)
_S_DATA, _S_POLICY, _S_SIM = 101, 102, 103

log = logging.getLogger("bnnreach")


class InputError(RuntimeError):
    """An input file is missing, unreadable or malformed."""


class SoundnessViolation(RuntimeError):
    pass


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _load_models(cfg: ExperimentConfig, posterior_path, policy_path) -> tuple[DiagGaussianPosterior, Network]:
    try:
        post = load_posterior(posterior_path)
        policy = load_network(policy_path)
    except OSError as exc:
        raise InputError(f"cannot read model file: {exc}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"malformed model file: {exc}") from exc
    env = cfg.env()
    if post.state_dim != env.state_dim or post.control_dim != env.control_dim:
        raise ConfigError(
            f"posterior models a {post.state_dim}-D state with {post.control_dim} controls; "
            f"{env.name} needs {env.state_dim} and {env.control_dim}"
        )
    if policy.arch.n_in != env.state_dim or policy.arch.n_out != env.control_dim:
        raise ConfigError(f"policy maps {policy.arch.n_in} -> {policy.arch.n_out}, {env.name} needs {env.state_dim} -> {env.control_dim}")
    return post, policy


def _progress(name: str):
    def cb(k: int, secs: float) -> None:
        log.info("%s: step k=%d done in %.2fs", name, k, secs)

    return cb


def _summary_stats(table: ValueTable) -> list[dict]:
    return [{key: (round(v, 12) if isinstance(v, float) else v) for key, v in s.items()} for s in table.step_stats()]


def _heatmap(out: Path, name: str, partition: Partition, values, title: str) -> str | None:
    if len(partition.discretized_dims) in (1, 2):
        write_heatmap(out / name, partition, values, title)
        return name
    return None


# ----------------------------------------------------------------------------
# commands


def cmd_train(cfg: ExperimentConfig, out: Path) -> dict:
    env = cfg.env()
    rng = make_rng(cfg.seed, _S_DATA)
    data = generate_dataset(env, cfg.data.behavior, cfg.data.episodes, cfg.data.steps, rng, cfg.data_start(), cfg.data.exploration_noise)
    data.save_csv(out / "dataset.csv")
    arch = MLPArchitecture.build(env.state_dim + env.control_dim, cfg.bnn.hidden, env.state_dim, cfg.bnn.activation)
    t0 = time.perf_counter()
    res = fit_vi(data, arch, cfg.vi_config())
    log.info("VI finished in %.2fs", time.perf_counter() - t0)
    save_posterior(res.posterior, out / "posterior.json")

    # behaviour cloning of the scripted controller on states drawn from the region
    prng = make_rng(cfg.seed, _S_POLICY)
    bounds = cfg.region_spec().bounds
    X = prng.uniform(bounds.lo, bounds.hi, size=(cfg.policy.samples, env.state_dim))
    Y = scripted_action(env, X)
    parch = MLPArchitecture.build(env.state_dim, cfg.policy.hidden, env.control_dim, cfg.policy.activation)
    policy, mse = fit_regression(parch, X, Y, prng, cfg.policy.epochs, cfg.policy.lr)
    if mse and not np.isfinite(mse[-1]):
        raise TrainingError("behaviour cloning diverged")
    save_network(policy, out / "policy.json")
    summary = {
        "command": "train",
        "records": len(data),
        "elbo_initial": res.initial_elbo,
        "elbo_final": res.final_elbo,
        "elbo_curve": res.elbo_curve[:: max(1, len(res.elbo_curve) // 100)],
        "predictive_rmse": predictive_rmse(res.posterior, data),
        "posterior_stddev": {"min": float(res.posterior.stddev.min()), "max": float(res.posterior.stddev.max())},
        "cloning_mse_final": mse[-1] if mse else None,
        "cloning_mse_curve": mse[:: max(1, len(mse) // 100)],
    }
    _dump_json(out / "train_summary.json", summary)
    return summary


def cmd_certify(cfg: ExperimentConfig, out: Path, posterior_path, policy_path, threads: int) -> dict:
    post, policy = _load_models(cfg, posterior_path, policy_path)
    part = cfg.build_partition()
    ccfg = cfg.cert_config()
    t0 = time.perf_counter()
    table = certify(post, policy, part, cfg.horizon, ccfg, threads=threads, progress=_progress("certify"))
    log.info("certification finished in %.2fs", time.perf_counter() - t0)
    table.to_csv(out / "values.csv", part)
    heat = _heatmap(out, "heatmap_K0.svg", part, table.k0, "certified lower bound K0")
    summary = {
        "command": "certify",
        "config": cfg.to_dict(),
        "cert_config": ccfg.to_dict(),
        "n_cells": part.n_cells,
        "horizon": cfg.horizon,
        "safe_mean_K0": table.safe_mean(0),
        "per_step": _summary_stats(table),
        "heatmap": heat,
    }
    _dump_json(out / "certify_summary.json", summary)
    return summary


def cmd_synthesize(cfg: ExperimentConfig, out: Path, posterior_path, policy_path, threads: int) -> dict:
    post, policy = _load_models(cfg, posterior_path, policy_path)
    part = cfg.build_partition()
    ccfg = cfg.cert_config()
    base = certify(post, policy, part, cfg.horizon, ccfg, threads=threads)
    grid = cfg.action_grid()
    t0 = time.perf_counter()
    strategy, table = synthesize_grid(post, policy, part, cfg.horizon, grid, ccfg, threads=threads, progress=_progress("synthesize"))
    log.info("synthesis finished in %.2fs", time.perf_counter() - t0)
    strategy.to_csv(out / "strategy.csv")
    table.to_csv(out / "values_synth.csv", part)
    heat = _heatmap(out, "heatmap_synth_K0.svg", part, table.k0, "max-cert lower bound K0")
    summary = {
        "command": "synthesize",
        "config": cfg.to_dict(),
        "n_actions": len(grid),
        "baseline_safe_mean_K0": base.safe_mean(0),
        "synthesized_safe_mean_K0": table.safe_mean(0),
        "per_step": _summary_stats(table),
        "heatmap": heat,
    }
    if cfg.synthesis.steps > 0:
        res = improve_policy(post, policy, part, cfg.horizon, ccfg, cfg.synthesis.steps, cfg.synthesis.step_size, threads=threads)
        save_network(res.policy, out / "policy_improved.json")
        summary["improve"] = {"objectives": res.objectives, "accepted": res.accepted, "evaluations": res.evaluations}
    _dump_json(out / "synthesize_summary.json", summary)
    return summary


def _controller(cfg, post, policy, strategy_path, part):
    if strategy_path is None:
        return policy
    try:
        return SynthesizedStrategy.from_csv(strategy_path, policy, part)
    except OSError as exc:
        raise InputError(f"cannot read strategy file: {exc}") from exc
    except (ValueError, IndexError) as exc:
        raise InputError(f"malformed strategy file: {exc}") from exc


def _starts(part: Partition, cell, m: int, rng) -> np.ndarray:
    """Cell centre followed by ``m - 1`` uniform points of the cell."""
    pts = [part.centers[cell.id]]
    if m > 1:
        hi = np.nextafter(cell.box.hi, cell.box.lo)
        pts.extend(rng.uniform(cell.box.lo, hi, size=(m - 1, part.state_dim)))
    return np.array(pts)


def cmd_simulate(cfg: ExperimentConfig, out: Path, posterior_path, policy_path, strategy_path) -> dict:
    post, policy = _load_models(cfg, posterior_path, policy_path)
    part = cfg.build_partition()
    ctrl = _controller(cfg, post, policy, strategy_path, part)
    spec = part.spec
    rows = []
    for cell in part.cells:
        if cell.label != Label.SAFE:
            continue
        rng = make_rng(cfg.seed, _S_SIM, cell.id)
        x0 = part.centers[cell.id]
        est = estimate_reach(post, ctrl, spec, x0, cfg.horizon, cfg.simulate.n_traj, rng)
        rows.append((cell.id, x0, est))
    with open(out / "simulate.csv", "w") as fh:
        n = part.state_dim
        fh.write(",".join(["cell_id"] + [f"x{i}" for i in range(n)] + ["p_hat", "ci_lo", "ci_hi", "n"]) + "\n")
        for cid, x0, e in rows:
            fh.write(",".join([str(cid)] + [repr(float(v)) for v in x0] + [repr(e.p_hat), repr(e.ci_lo), repr(e.ci_hi), str(e.n)]) + "\n")
    if cfg.simulate.trajectories_dump > 0 and rows:
        rng = make_rng(cfg.seed, _S_SIM, part.n_cells)
        trajs = [rollout(post, ctrl, spec, rows[i % len(rows)][1], cfg.horizon, rng) for i in range(cfg.simulate.trajectories_dump)]
        save_trajectories(trajs, out / "trajectories.csv")
    p = np.array([r[2].p_hat for r in rows]) if rows else np.zeros(1)
    summary = {"command": "simulate", "cells": len(rows), "mean_p_hat": float(p.mean()), "n_traj": cfg.simulate.n_traj}
    _dump_json(out / "simulate_summary.json", summary)
    return summary


def cmd_compare(cfg: ExperimentConfig, out: Path, posterior_path, policy_path, strategy_path, threads: int, all_cells: bool = False) -> dict:
    """Certified ``K_0`` against Monte-Carlo estimates from sampled starts in each cell.

    The worst (smallest) estimate over the cell's starts is reported; a cell
    whose bound exceeds that estimate's upper 95% limit is a soundness violation.
    By default only cells with a positive bound are simulated (a zero bound
    cannot be violated).
    """
    post, policy = _load_models(cfg, posterior_path, policy_path)
    part = cfg.build_partition()
    ctrl = _controller(cfg, post, policy, strategy_path, part)
    if strategy_path is None:
        K0 = certify(post, policy, part, cfg.horizon, cfg.cert_config(), threads=threads).k0
    elif ctrl.horizon > 0:
        K0 = ctrl.values[0]
    else:
        K0 = (part.labels == int(Label.GOAL)).astype(float)
    spec = part.spec
    rows, violations = [], []
    for cell in part.cells:
        if cell.label == Label.UNSAFE:
            continue
        cert = float(K0[cell.id])
        if cell.label == Label.SAFE and cert <= 0.0 and not all_cells:
            rows.append((cell.id, cell.label, cert, None))
            continue
        rng = make_rng(cfg.seed, _S_SIM, cell.id)
        worst = None
        for x0 in _starts(part, cell, cfg.simulate.starts_per_cell, rng):
            est = estimate_reach(post, ctrl, spec, x0, cfg.horizon, cfg.simulate.n_traj, rng)
            if worst is None or est.p_hat < worst.p_hat:
                worst = est
        rows.append((cell.id, cell.label, cert, worst))
        if cert > worst.ci_hi:
            violations.append(cell.id)
    with open(out / "compare.csv", "w") as fh:
        fh.write("cell_id,label,cert_K0,p_hat,ci_lo,ci_hi,violation\n")
        for cid, lab, cert, e in rows:
            if e is None:
                fh.write(f"{cid},{lab},{cert!r},,,,0\n")
            else:
                fh.write(f"{cid},{lab},{cert!r},{e.p_hat!r},{e.ci_lo!r},{e.ci_hi!r},{int(cert > e.ci_hi)}\n")
    simulated = [r for r in rows if r[3] is not None and r[1] == Label.SAFE]
    summary = {
        "command": "compare",
        "controller": "strategy" if strategy_path is not None else "policy",
        "cells_simulated": len(simulated),
        "mean_cert_K0_safe": float(np.mean([r[2] for r in rows if r[1] == Label.SAFE])) if rows else 0.0,
        "mean_p_hat_simulated": float(np.mean([r[3].p_hat for r in simulated])) if simulated else None,
        "violations": violations,
    }
    _dump_json(out / "compare_summary.json", summary)
    if violations:
        raise SoundnessViolation(f"certified bound above the Monte-Carlo confidence limit in cells {violations}")
    return summary


# ----------------------------------------------------------------------------
# argument handling


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bnnreach", description="Reach-avoid certification for BNN dynamics under neural control.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("train", "certify", "synthesize", "simulate", "compare"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="YAML experiment config")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--threads", type=int, default=1, help="worker threads for per-cell work")
        sp.add_argument("--out", default=None, help="output directory (default: config 'out')")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name != "train":
            sp.add_argument("--posterior", default=None, help="posterior file (default: OUT/posterior.json)")
            sp.add_argument("--policy", default=None, help="policy file (default: OUT/policy.json)")
        if name in ("simulate", "compare"):
            sp.add_argument("--strategy", default=None, help="synthesized strategy file to use instead of the policy")
        if name == "compare":
            sp.add_argument("--all-cells", action="store_true", help="also simulate cells whose bound is 0")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, {"seed": args.seed})
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        out = Path(args.out if args.out is not None else cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        post_path = getattr(args, "posterior", None) or out / "posterior.json"
        pol_path = getattr(args, "policy", None) or out / "policy.json"
        t0 = time.perf_counter()
        if args.command == "train":
            summary = cmd_train(cfg, out)
        elif args.command == "certify":
            summary = cmd_certify(cfg, out, post_path, pol_path, args.threads)
        elif args.command == "synthesize":
            summary = cmd_synthesize(cfg, out, post_path, pol_path, args.threads)
        elif args.command == "simulate":
            summary = cmd_simulate(cfg, out, post_path, pol_path, args.strategy)
        else:
            summary = cmd_compare(cfg, out, post_path, pol_path, args.strategy, args.threads, args.all_cells)
        brief = {k: v for k, v in summary.items() if k not in ("config", "per_step", "elbo_curve", "cloning_mse_curve", "cert_config")}
        print(json.dumps(brief, sort_keys=True))
        print(f"wall-clock: {time.perf_counter() - t0:.2f}s", file=sys.stderr)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputError, FileNotFoundError, OSError) as exc:
        print(f"input/output error: {exc}", file=sys.stderr)
        return EXIT_IO
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except SoundnessViolation as exc:
        print(f"SOUNDNESS VIOLATION: {exc}", file=sys.stderr)
        return EXIT_UNSOUND


if __name__ == "__main__":
    sys.exit(main())
