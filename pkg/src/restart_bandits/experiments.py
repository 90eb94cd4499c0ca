"""Machine-maintenance experiments: config, per-cell runs and table output.

A *cell* is one (model, n, m, family) combination. Each cell builds its fleet,
computes whatever the requested policies need, simulates them on common random
numbers and reports ``J`` per policy plus the comparison ratios.

Outputs in ``config.out``:

* ``<metric>_<model>_m<m>.csv`` - rows ``n``, columns ``family1..4``
* ``cells.csv`` - long format, one row per (cell, policy)
* ``provenance.json`` - config, seeds, fingerprints and tail bounds (deterministic)
* ``timing.json`` - wall-clock runtimes (kept apart so the rest is byte-stable)
"""
from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .dp import joint_optimal_policy
from .errors import StateSpaceTooLarge
from .sim import (MyopicPolicy, OptimalPolicy, SimConfig, WhittlePolicy, alpha_opt, eps_myp,
                  make_fleet, reset_seed, simulate_many)
from .whittle import whittle_table

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
POLICIES = ("wip", "myp", "opt")
JOINT_CAP = 10**6


@dataclass
class ExperimentConfig:
    """Declarative experiment description; defaults reproduce Experiment 1."""

    experiment: str = "exp1"
    models: list = field(default_factory=lambda: ["A", "B"])
    n: list = field(default_factory=lambda: [3])
    m: list = field(default_factory=lambda: [1])
    size: int = 4
    ell: int = 3
    families: list = field(default_factory=lambda: [1, 2, 3, 4])
    beta: float = 0.99
    horizon: int = 1000
    paths: int = 5000
    seed: int = 0
    policies: list = field(default_factory=lambda: ["opt", "wip"])
    # "belief" charges the truncated chain the DP optimum is optimal for;
    # "state" charges the hidden machine states
    accounting: str = "belief"
    # "exact": OPT activates exactly m arms like WIP/MYP; "at_most": OPT may idle
    opt_budget: str = "exact"
    joint_cap: int = JOINT_CAP
    chunk: int = 1000
    threads: int = 1
    out: str = "results/exp1"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.experiment not in ("exp1", "exp2", "custom"):
            raise ValueError(f"unknown experiment id {self.experiment!r}")
        for name in ("models", "n", "m", "families", "policies"):
            if not isinstance(getattr(self, name), (list, tuple)) or not getattr(self, name):
                raise ValueError(f"{name} must be a non-empty list")
        if set(self.models) - {"A", "B"}:
            raise ValueError(f"models must be A and/or B, got {self.models}")
        if set(self.families) - {1, 2, 3, 4}:
            raise ValueError(f"families must be drawn from 1..4, got {self.families}")
        if set(self.policies) - set(POLICIES):
            raise ValueError(f"policies must be drawn from {POLICIES}, got {self.policies}")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if min(self.m) < 1 or max(self.m) >= min(self.n):
            raise ValueError(f"need 1 <= m < n for every cell, got n={self.n}, m={self.m}")
        if self.size < 2 or self.ell < 1:
            raise ValueError("size must be >= 2 and ell >= 1")
        if self.horizon < 1 or self.paths < 1 or self.chunk < 1 or self.threads < 1:
            raise ValueError("horizon, paths, chunk and threads must be positive")
        if self.accounting not in ("state", "belief"):
            raise ValueError("accounting must be 'state' or 'belief'")
        if self.opt_budget not in ("exact", "at_most"):
            raise ValueError("opt_budget must be 'exact' or 'at_most'")
        if "opt" in self.policies:
            for model in self.models:
                per_arm = (self.ell + 1) * (1 if model == "A" else self.size)
                size = per_arm ** max(self.n)
                if size > self.joint_cap:
                    raise StateSpaceTooLarge(
                        f"OPT needs a joint information space of {size} states for model "
                        f"{model}, n={max(self.n)} (cap {self.joint_cap})")

    @classmethod
    def preset(cls, name: str, **overrides) -> "ExperimentConfig":
        if name == "exp1":
            base = {}
        elif name == "exp2":
            base = dict(experiment="exp2", n=[20, 40, 60], m=[1, 5], size=20, ell=39,
                        policies=["wip", "myp"], accounting="state", out="results/exp2")
        elif name == "custom":
            base = dict(experiment="custom", out="results/custom")
        else:
            raise ValueError(f"unknown preset {name!r}")
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_dict(cls, d: dict, preset: str | None = None) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls.preset(preset or d.get("experiment", "exp1"), **d)

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path, preset: str | None = None, **overrides) -> ExperimentConfig:
    """Read a YAML config; keys missing from the file take the preset's defaults."""
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping at top level")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(data, preset)


# ---------------------------------------------------------------------------
# Cells
# ---------------------------------------------------------------------------

def cells_of(cfg: ExperimentConfig) -> list[tuple]:
    return [(model, n, m, fam) for model in cfg.models for n in cfg.n for m in cfg.m
            for fam in cfg.families]


def sim_config(cfg: ExperimentConfig) -> SimConfig:
    return SimConfig(horizon=cfg.horizon, paths=cfg.paths, beta=cfg.beta, seed=cfg.seed,
                     ell=cfg.ell, chunk=cfg.chunk, accounting=cfg.accounting)


_TABLE_CACHE: dict = {}


def _index_tables(cfg: ExperimentConfig, fleet, model: str, fam: int, n: int) -> list:
    """Index tables per arm, shared by every ``m`` of the same fleet within a process."""
    key = (model, fam, n, cfg.size, cfg.seed, cfg.beta, cfg.ell)
    if key not in _TABLE_CACHE:
        if len(_TABLE_CACHE) > 64:
            _TABLE_CACHE.clear()
        _TABLE_CACHE[key] = [whittle_table(a, model, cfg.beta, cfg.ell) for a in fleet.arms]
    return _TABLE_CACHE[key]


def run_cell(cfg: ExperimentConfig, cell: tuple) -> dict:
    model, n, m, fam = cell
    timings = {}
    fleet = make_fleet(fam, n, m, cfg.size, model, cfg.seed)
    policies = {}
    t0 = time.perf_counter()
    if "wip" in cfg.policies:
        policies["wip"] = WhittlePolicy(fleet, _index_tables(cfg, fleet, model, fam, n))
    if "myp" in cfg.policies:
        policies["myp"] = MyopicPolicy(fleet, cfg.ell)
    timings["policies"] = time.perf_counter() - t0
    if "opt" in cfg.policies:
        t0 = time.perf_counter()
        joint = joint_optimal_policy(fleet.arms, model, m, cfg.beta, cfg.ell,
                                     cap=cfg.joint_cap, exact=cfg.opt_budget == "exact")
        policies["opt"] = OptimalPolicy(fleet, joint)
        timings["opt_dp"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    results = simulate_many(fleet, policies, sim_config(cfg))
    timings["simulate"] = time.perf_counter() - t0
    J = {k: results[k].J_hat for k in cfg.policies}
    metrics = {}
    if "opt" in J and "wip" in J:
        metrics["alpha_opt"] = alpha_opt(J["opt"], J["wip"])
    if "myp" in J and "wip" in J:
        metrics["eps_myp"] = eps_myp(J["myp"], J["wip"])
    any_res = next(iter(results.values()))
    return {
        "model": model, "n": n, "m": m, "family": fam,
        "results": {k: results[k].to_dict() for k in cfg.policies},
        "metrics": metrics,
        "q_seeds": [reset_seed(cfg.seed, fam, n, i) for i in range(n)],
        "tail_bound": any_res.tail_bound,
        "fingerprint": any_res.fingerprint,
        "timing": timings,
    }


def _run_cell_star(args):
    return run_cell(*args)


def run_cells(cfg: ExperimentConfig) -> list[dict]:
    cells = cells_of(cfg)
    if cfg.threads > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            return list(pool.map(_run_cell_star, [(cfg, c) for c in cells]))
    out = []
    for c in cells:
        log.info("cell model=%s n=%d m=%d family=%d", *c)
        out.append(run_cell(cfg, c))
    return out


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return repr(float(v))


def table_names(cfg: ExperimentConfig) -> list[str]:
    names = []
    if "opt" in cfg.policies and "wip" in cfg.policies:
        names.append("alpha_opt")
    if "myp" in cfg.policies and "wip" in cfg.policies:
        names.append("eps_myp")
    if not names:
        names = [f"J_{p}" for p in cfg.policies]
    return names


def _cell_value(cell: dict, name: str) -> float:
    if name.startswith("J_"):
        return cell["results"][name[2:]]["J_hat"]
    return cell["metrics"][name]


def write_outputs(cfg: ExperimentConfig, cells: list[dict]) -> dict:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    by_key = {(c["model"], c["n"], c["m"], c["family"]): c for c in cells}
    written = []
    for name in table_names(cfg):
        for model in cfg.models:
            for m in cfg.m:
                path = out / f"{name}_{model}_m{m}.csv"
                with open(path, "w", newline="") as fh:
                    w = csv.writer(fh, lineterminator="\n")
                    w.writerow(["n"] + [f"family{f}" for f in cfg.families])
                    for n in cfg.n:
                        w.writerow([n] + [_fmt(_cell_value(by_key[(model, n, m, f)], name))
                                          for f in cfg.families])
                written.append(path.name)
    with open(out / "cells.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "n", "m", "family", "policy", "J_hat", "std_err", "paths",
                    "horizon", "seed"])
        for c in cells:
            for p, r in c["results"].items():
                w.writerow([c["model"], c["n"], c["m"], c["family"], p, _fmt(r["J_hat"]),
                            _fmt(r["std_err"]), r["paths"], r["horizon"], r["seed"]])
    written.append("cells.csv")
    provenance = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.to_dict(),
        "cells": [{k: c[k] for k in ("model", "n", "m", "family", "q_seeds", "tail_bound",
                                     "fingerprint", "metrics", "results")} for c in cells],
        "files": written,
    }
    with open(out / "provenance.json", "w") as fh:
        json.dump(provenance, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "timing.json", "w") as fh:
        json.dump([{"cell": [c["model"], c["n"], c["m"], c["family"]], **c["timing"]}
                   for c in cells], fh, indent=2)
        fh.write("\n")
    return provenance


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run every cell of ``cfg`` and write the report files; returns the provenance blob."""
    cfg.validate()
    cells = run_cells(cfg)
    return write_outputs(cfg, cells)


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})


