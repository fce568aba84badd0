"""Repair a controller that pushes away from the goal.

Compares the baseline certificate with grid synthesis and with the
derivative-free policy improvement on the clamped chain:

    python3 scripts/synthesis_demo.py
"""

import argparse

import numpy as np

from bnnreach.certifier import CertConfig, certify
from bnnreach.scenarios import chain_wrong_sign
from bnnreach.synthesis import ActionGrid, improve_policy, synthesize_grid


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n-s", type=int, default=5)
    ap.add_argument("--improve-n-s", type=int, default=2, help="weight samples per objective evaluation")
    ap.add_argument("--steps", type=int, default=30)
    ap.add_argument("--step-size", type=float, default=0.1)
    args = ap.parse_args()

    sc = chain_wrong_sign()
    cfg = CertConfig(n_s=args.n_s, rho_w=5e-6, eta=0.999, thresholds="adaptive")
    base = certify(sc.posterior, sc.policy, sc.partition, sc.horizon, cfg)
    strat, syn = synthesize_grid(sc.posterior, sc.policy, sc.partition, sc.horizon, ActionGrid(np.array([[-0.3], [0.0], [0.3]])), cfg)
    print(f"baseline    safe mean K0 = {base.safe_mean(0):.4f}")
    print(f"grid synth  safe mean K0 = {syn.safe_mean(0):.4f}")
    print("first-step actions per cell:", " ".join(f"{a:+.1f}" for a in strat.actions[0][:, 0]))
    icfg = CertConfig(n_s=args.improve_n_s, rho_w=5e-6, eta=0.999, thresholds="adaptive")
    res = improve_policy(sc.posterior, sc.policy, sc.partition, sc.horizon, icfg, steps=args.steps, step_size=args.step_size)
    print(f"improved    objective {res.initial:.4f} -> {res.final:.4f} in {args.steps} steps")
    print("improved policy weights:", np.round(res.policy.weights, 4))


if __name__ == "__main__":
    main()
