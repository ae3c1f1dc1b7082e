"""Accuracy-by-length tables and stopping curves for the trained acceptance runs.

    python scripts/figures.py [--lengths 1-16] [--samples 512]

Writes eval CSV/SVG per run and a parity stopping curve at length 12 into
$LOOPTF_OUT/figures (default runs/figures).
"""

import argparse
from pathlib import Path

from looptf.cli import main as cli
from looptf.experiments import TARGETS, output_root, run_dir


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--lengths", default="1-16")
    ap.add_argument("--samples", type=int, default=512)
    args = ap.parse_args()
    runs = output_root() / "acceptance"
    out = output_root() / "figures"
    for name, target in TARGETS.items():
        for seed in target.seeds:
            ckpt = run_dir(runs, target, seed) / "model.ckpt"
            if not ckpt.exists():
                continue
            stem = out / f"{name}-seed{seed}"
            cli(["eval", str(ckpt), "--lengths", args.lengths, "--samples", str(args.samples),
                 "--out", f"{stem}.csv", "--svg", f"{stem}.svg"])
            print(Path(f"{stem}.csv").read_text())
            if name == "parity":
                cli(["stopcurve", str(ckpt), "--length", "12", "--t-max", "26",
                     "--out", str(out / f"stopcurve-parity-seed{seed}-n12.csv")])


if __name__ == "__main__":
    main()
