"""Run the finite-difference gradient suite over several seeds and print the worst error per check."""

import argparse

import numpy as np

from swinbert.gradcheck import SUITE, TOLERANCE, run_suite


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=3)
    args = ap.parse_args()
    worst = {name: 0.0 for name in SUITE}
    secs = {name: 0.0 for name in SUITE}
    for seed in range(args.seeds):
        for name, (err, t) in run_suite(seed).items():
            worst[name] = max(worst[name], err)
            secs[name] += t
    for name in SUITE:
        flag = "ok" if worst[name] < TOLERANCE else "FAIL"
        print(f"{name:<22} worst={worst[name]:.3e}  total {secs[name]:6.1f}s  {flag}")
    print(f"overall worst {max(worst.values()):.3e} over {args.seeds} seeds; {np.sum(list(secs.values())):.1f}s")


if __name__ == "__main__":
    main()
