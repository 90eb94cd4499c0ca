"""Experiment 1: WIP against the DP optimum on n=3 machines (|X|=4, ell+1=4, m=1)."""
import argparse
import sys

from restart_bandits.cli import main

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seed", default="0")
    p.add_argument("--out", default="results/exp1")
    a = p.parse_args()
    sys.exit(main(["run", "exp1", "--seed", a.seed, "--out", a.out]))
