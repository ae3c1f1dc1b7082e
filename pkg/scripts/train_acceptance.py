"""Train and score the desk-scale runs the acceptance suite loads.

    python scripts/train_acceptance.py parity copy parity_ntp

Runs land in $LOOPTF_OUT/acceptance (default runs/acceptance). Finished
seeds are reused; a target stops at the first seed that meets its threshold.
"""

import argparse
import logging

from looptf.experiments import TARGETS, output_root, run_target


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("targets", nargs="*", default=list(TARGETS), choices=list(TARGETS))
    ap.add_argument("--samples", type=int, default=512, help="eval instances per length")
    ap.add_argument("--all-seeds", action="store_true", help="keep training after a seed passes")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    root = output_root() / "acceptance"
    for name in args.targets:
        for s in run_target(TARGETS[name], root, args.samples, stop_on_pass=not args.all_seeds):
            print(f"{name} seed {s['seed']}: mean {s['mean']:.3f} over {sorted(s['per_length'])}")


if __name__ == "__main__":
    main()
