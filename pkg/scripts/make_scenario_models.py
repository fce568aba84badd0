"""Write the hand-built near-deterministic chain models as posterior/policy files.

    python3 scripts/make_scenario_models.py clamp runs/chain1d_clamp
    python3 scripts/make_scenario_models.py wrong-sign runs/chain1d_wrong_sign
"""

import argparse
from pathlib import Path

from bnnreach.neural import save_network
from bnnreach.posterior import save_posterior
from bnnreach.scenarios import chain_clamp, chain_tightness, chain_wrong_sign

SCENARIOS = {"clamp": chain_clamp, "wrong-sign": chain_wrong_sign, "tightness": chain_tightness}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("scenario", choices=sorted(SCENARIOS))
    ap.add_argument("out")
    args = ap.parse_args()
    sc = SCENARIOS[args.scenario]()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_posterior(sc.posterior, out / "posterior.json")
    save_network(sc.policy, out / "policy.json")
    print(f"wrote {out}/posterior.json and {out}/policy.json (horizon {sc.horizon})")


if __name__ == "__main__":
    main()
