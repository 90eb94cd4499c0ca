"""Experiment 2: WIP against the myopic policy on |X|=20 machines (ell+1=40)."""
import argparse
import sys

from restart_bandits.cli import main

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seed", default="0")
    p.add_argument("--paths", default="5000")
    p.add_argument("--threads", default="1")
    p.add_argument("--out", default="results/exp2")
    a = p.parse_args()
    sys.exit(main(["run", "exp2", "--seed", a.seed, "--paths", a.paths,
                   "--threads", a.threads, "--out", a.out]))
