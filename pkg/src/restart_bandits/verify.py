"""Property suites run by ``restart-bandits verify``.

Each suite takes a list of :class:`~restart_bandits.corpus.CorpusArm` and returns a
:class:`SuiteResult` with the number of individual checks and a dump of every
counterexample. The acceptance tests call the same functions with larger
parameters.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .arm import Arm, CostSpec, validate_assumptions
from .corpus import CorpusArm, random_arms
from .dp import _bracket, bisection_indices, value_iteration, value_iteration_batch
from .errors import AssumptionError, DegenerateIndexError, NotThresholdError
from .policy_eval import dn_values, finite_horizon_eval
from .whittle import thresholds_of, whittle_table

SCHEMA_VERSION = 1
MODELS = ("A", "B")


@dataclass
class SuiteResult:
    name: str
    checked: int = 0
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def fail(self, **info) -> None:
        self.failures.append(info)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checked": self.checked,
                "n_failures": len(self.failures), "failures": self.failures[:50]}


def _tolist(x):
    return np.asarray(x).tolist()


def check_assumptions(corpus: list[CorpusArm]) -> SuiteResult:
    res = SuiteResult("assumptions")
    for c in corpus:
        res.checked += 1
        rep = validate_assumptions(c.arm)
        if not rep.ok:
            res.fail(arm=c.label(), failed=rep.failures())
    return res


def check_oracle(corpus, betas=(0.9, 0.99), ells=(5,), models=MODELS,
                 tol: float = 1e-6) -> SuiteResult:
    """Whittle tables against per-state bisection on the value-iteration oracle."""
    res = SuiteResult("oracle")
    for c in corpus:
        for model in models:
            for beta in betas:
                for ell in ells:
                    res.checked += 1
                    try:
                        w = np.asarray(whittle_table(c.arm, model, beta, ell).w)
                    except (AssumptionError, DegenerateIndexError, NotThresholdError) as e:
                        res.fail(arm=c.label(), model=model, beta=beta, ell=ell,
                                 error=f"{type(e).__name__}: {e}")
                        continue
                    ref = bisection_indices(c.arm, model, beta, ell, tol_lam=tol / 20)
                    err = np.abs(w - ref)
                    if not err.max() <= tol:
                        at = np.unravel_index(int(err.argmax()), err.shape)
                        res.fail(arm=c.label(), model=model, beta=beta, ell=ell,
                                 state=_tolist(at), whittle=float(w[at]),
                                 bisection=float(ref[at]), error=float(err.max()))
    return res


def _threshold_samples(model: str, size: int, ell: int, rng, extra: int) -> list:
    if model == "A":
        return list(range(ell + 2))
    out = [np.full(size, t) for t in range(ell + 2)]
    out += [rng.integers(0, ell + 2, size=size) for _ in range(extra)]
    return out


def check_closed_form(corpus, betas=(0.9, 0.99), ells=(5,), models=MODELS,
                      tol: float = 1e-8, random_thresholds: int = 10,
                      seed: int = 0) -> SuiteResult:
    """D/N closed forms against backward recursion run until beta^H < 1e-12."""
    res = SuiteResult("closed_form")
    rng = np.random.default_rng(seed)
    for c in corpus:
        for model in models:
            for beta in betas:
                horizon = int(np.ceil(np.log(1e-12) / np.log(beta))) + 1
                for ell in ells:
                    for theta in _threshold_samples(model, c.arm.size, ell, rng,
                                                    random_thresholds):
                        res.checked += 1
                        cf = dn_values(c.arm, model, theta, beta, ell)
                        fh = finite_horizon_eval(c.arm, model, theta, horizon, beta, ell)
                        err = max(np.abs(cf.D - fh.D).max(), np.abs(cf.N - fh.N).max())
                        if not err <= tol:
                            res.fail(arm=c.label(), model=model, beta=beta, ell=ell,
                                     theta=_tolist(theta), error=float(err))
    return res


def truncation_bound(arm: Arm, beta: float, ell: int, lam: float) -> np.ndarray:
    """beta^(ell-k+1) span(c_lam) / (1-beta) for k = 0..ell."""
    c = arm.cost.table + lam * np.array([0.0, 1.0])
    span = c.max() - c.min()
    k = np.arange(ell + 1)
    return beta ** (ell - k + 1) * span / (1 - beta)


def check_truncation(corpus, betas=(0.9,), ells=(5, 10, 20), lams=(-5.0, 0.0, 5.0),
                     models=MODELS, ell_ref: int = 200, vi_tol: float = 1e-10) -> SuiteResult:
    """|V_ell - V_ref| against the geometric truncation bound."""
    res = SuiteResult("truncation")
    for c in corpus:
        for model in models:
            for beta in betas:
                for lam in lams:
                    ref = value_iteration(c.arm, model, lam, beta, ell_ref, vi_tol).V
                    for ell in ells:
                        res.checked += 1
                        V = value_iteration(c.arm, model, lam, beta, ell, vi_tol).V
                        gap = np.abs(V - ref[..., : ell + 1])
                        bound = truncation_bound(c.arm, beta, ell, lam)
                        excess = gap - bound - vi_tol
                        if (excess > 0).any():
                            at = np.unravel_index(int(excess.argmax()), excess.shape)
                            res.fail(arm=c.label(), model=model, beta=beta, ell=ell, lam=lam,
                                     state=_tolist(at), gap=float(gap[at]),
                                     bound=float(bound[at[-1]]))
    return res


def check_structure(corpus, betas=(0.9, 0.99), ells=(5,), models=MODELS, grid: int = 50,
                    tol: float = 1e-9) -> SuiteResult:
    """Threshold policies, nested passive sets, monotone V and submodular H over a penalty grid."""
    res = SuiteResult("structure")
    for c in corpus:
        for model in models:
            for beta in betas:
                b = _bracket(c.arm, beta)
                lams = np.linspace(-b, b, grid)
                for ell in ells:
                    V, H = value_iteration_batch(c.arm, model, lams, beta, ell, tol=tol / 10)
                    where = dict(arm=c.label(), model=model, beta=beta, ell=ell)
                    scale = tol * max(1.0, float(np.abs(V).max()))
                    active = H[..., 1] <= H[..., 0]
                    # one row per penalty, shaped (|X| or 1, ell+1)
                    passive = (~active)[:, None, :] if model == "A" else ~active
                    for j, lam in enumerate(lams):
                        res.checked += 1
                        try:
                            thresholds_of(passive[j])
                        except NotThresholdError:
                            res.fail(check="threshold", lam=float(lam),
                                     active=_tolist(active[j]), **where)
                    res.checked += 1
                    grows = (~passive[:-1] | passive[1:]).all(axis=(1, 2))
                    if not grows.all():
                        j = int(np.flatnonzero(~grows)[0])
                        res.fail(check="inclusion", lam_lo=float(lams[j]),
                                 lam_hi=float(lams[j + 1]), **where)
                    res.checked += 1
                    dV = np.diff(V, axis=-1)
                    if (dV < -scale).any():
                        res.fail(check="V_monotone", worst=float(dV.min()), **where)
                    res.checked += 1
                    gap = H[..., 0] - H[..., 1]
                    dgap = np.diff(gap, axis=-1)
                    if (dgap < -scale).any():
                        res.fail(check="H_submodular", worst=float(dgap.min()), **where)
    return res


SUITES: dict[str, Callable] = {
    "assumptions": check_assumptions,
    "oracle": check_oracle,
    "closed_form": check_closed_form,
    "truncation": check_truncation,
    "structure": check_structure,
}


def broken_cost(arm: Arm) -> Arm:
    """Fault injection: passive cost decreasing in the state, active cost above it."""
    x = np.arange(arm.size, dtype=float)
    passive = (arm.size - 1 - x) ** 2
    active = passive + 1.0
    return Arm(arm.P, arm.Q, CostSpec(passive, active))


def verify(suites=None, corpus_size: int = 8, seed: int = 0,
           inject_fault: bool = False) -> dict:
    """Run the named suites (all when ``None``) and return a machine-readable report."""
    names = list(SUITES) if suites is None else list(suites)
    unknown = set(names) - set(SUITES)
    if unknown:
        raise ValueError(f"unknown suites {sorted(unknown)}; choose from {list(SUITES)}")
    report = {"schema_version": SCHEMA_VERSION, "seed": seed, "corpus_size": corpus_size,
              "inject_fault": inject_fault, "suites": {}}
    if names:
        corpus = random_arms(corpus_size, seed)
        if inject_fault:
            corpus = [CorpusArm(broken_cost(c.arm), c.family, c.p, c.size, c.q_seed)
                      for c in corpus]
        for name in names:
            report["suites"][name] = SUITES[name](corpus).to_dict()
    report["passed"] = all(s["passed"] for s in report["suites"].values())
    return report


def write_report(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
