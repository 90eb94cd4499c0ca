"""Whittle index tables.

Model A has a closed form: the index at ``k`` is the smallest ratio of the cost
increase to the activation decrease when the threshold moves from ``k`` to
``k + 1``. Model B uses an adaptive greedy construction that grows the passive
set one frontier state (or one tie group) at a time; because optimal policies
are thresholds in ``k``, the frontier holds at most one candidate per ``s``.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .arm import Arm, check_discount, validate_assumptions
from .errors import AssumptionError, DegenerateIndexError, NotThresholdError
from .policy_eval import dn_values_A, dn_values_B

N_RTOL = 1e-10
N_ATOL = 1e-12
TIE_RTOL = 1e-9
# greedy breakpoints that fall this far (relative) below the previous one are
# round-off from the renewal solves and get merged into it
DRIFT_RTOL = 1e-7


def lambda_set(N_a: np.ndarray, N_b: np.ndarray) -> np.ndarray:
    """Mask of probe states where two activation measures differ beyond round-off."""
    scale = np.maximum(np.abs(N_a), np.abs(N_b))
    return np.abs(N_a - N_b) > np.maximum(N_RTOL * scale, N_ATOL)


def _same_index(a: float, b: float) -> bool:
    return abs(a - b) <= TIE_RTOL * max(1.0, abs(a), abs(b))


def _require_assumptions(arm: Arm) -> None:
    report = validate_assumptions(arm)
    if not report.ok:
        raise AssumptionError(f"arm fails assumption checks: {report.failures()}")


@dataclass(frozen=True, eq=False)
class IndexTableA:
    w: np.ndarray
    beta: float
    ell: int

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["k", "w"])
            for k, v in enumerate(self.w):
                out.writerow([k, repr(float(v))])

    def to_dict(self) -> dict:
        return {"model": "A", "beta": self.beta, "ell": self.ell,
                "w": [float(v) for v in self.w]}


@dataclass(frozen=True, eq=False)
class IndexTableB:
    """Indices over (s, k) plus the greedy audit trail.

    ``chain[b]`` is the threshold vector of the passive set ``W_b`` (all states
    with index at most ``breakpoints[b-1]``); ``chain[0]`` is the empty set.
    """

    w: np.ndarray
    breakpoints: list
    chain: list = field(repr=False)
    beta: float = 0.0
    ell: int = 0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["s", "k", "w"])
            for s in range(self.w.shape[0]):
                for k in range(self.w.shape[1]):
                    out.writerow([s + 1, k, repr(float(self.w[s, k]))])

    def to_dict(self) -> dict:
        return {
            "model": "B", "beta": self.beta, "ell": self.ell,
            "w": self.w.tolist(),
            "breakpoints": [float(v) for v in self.breakpoints],
            "chain_thresholds": [[int(t) for t in th] for th in self.chain],
        }


def write_index_json(table, path) -> None:
    with open(path, "w") as fh:
        json.dump(table.to_dict(), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Model A
# ---------------------------------------------------------------------------

def whittle_table_A(arm: Arm, beta: float, ell: int, check: bool = True) -> IndexTableA:
    check_discount(beta)
    if check:
        _require_assumptions(arm)
    values = [dn_values_A(arm, th, beta, ell) for th in range(ell + 2)]
    w = np.empty(ell + 1)
    for k in range(ell + 1):
        lo, hi = values[k], values[k + 1]
        mask = lambda_set(lo.N, hi.N)
        if not mask.any():
            raise DegenerateIndexError(
                f"k={k}: thresholds {k} and {k + 1} have indistinguishable N "
                f"(max gap {np.abs(lo.N - hi.N).max():.3e})")
        w[k] = np.min((hi.D[mask] - lo.D[mask]) / (lo.N[mask] - hi.N[mask]))
    drops = np.diff(w) < -TIE_RTOL * np.maximum(1.0, np.abs(w[1:]))
    if drops.any():
        warnings.warn(f"model-A indices decrease at k={np.flatnonzero(drops).tolist()}",
                      RuntimeWarning, stacklevel=2)
    return IndexTableA(w, float(beta), ell)


# ---------------------------------------------------------------------------
# Model B
# ---------------------------------------------------------------------------

def passive_mask(theta, ell: int) -> np.ndarray:
    """Boolean (|X|, ell+1) mask of ``{(s, k): k < theta_s}``."""
    theta = np.asarray(theta)
    return np.arange(ell + 1)[None, :] < theta[:, None]


def thresholds_of(mask: np.ndarray) -> np.ndarray:
    """Inverse of :func:`passive_mask`; rejects sets that are not downward closed in k."""
    mask = np.asarray(mask, dtype=bool)
    theta = mask.sum(axis=1)
    if not np.array_equal(mask, passive_mask(theta, mask.shape[1] - 1)):
        raise NotThresholdError("passive set is not of the form {k < theta_s} for every s")
    return theta


def frontier(passive: np.ndarray, ell: int) -> set:
    """States outside ``passive`` whose predecessor ``(s, max(0, k-1))`` is inside it.

    For a threshold set this is ``{(s, theta_s) : theta_s <= ell}``; with nothing
    passive yet, ``(s, 0)`` qualifies through the ``max(0, -1) = 0`` clause.
    """
    passive = np.asarray(passive, dtype=bool)
    if passive.shape[1] != ell + 1:
        raise ValueError("passive mask must have ell + 1 columns")
    theta = thresholds_of(passive)
    return {(s, int(t)) for s, t in enumerate(theta) if t <= ell}


def _grow(theta: np.ndarray, s: int) -> np.ndarray:
    out = theta.copy()
    out[s] += 1
    return out


def mu_ratio(arm: Arm, beta: float, ell: int, passive: np.ndarray, y, probe) -> float:
    """Penalty at which adding frontier state ``y`` to the passive set breaks even at ``probe``."""
    theta = thresholds_of(passive)
    if tuple(y) not in frontier(passive, ell):
        raise ValueError(f"{y} is not on the frontier of the passive set")
    h_b = dn_values_B(arm, theta, beta, ell)
    h_by = dn_values_B(arm, _grow(theta, y[0]), beta, ell)
    x, k = probe
    if not lambda_set(h_b.N, h_by.N)[x, k]:
        raise ValueError(f"probe {probe} is not separated by the two policies")
    return float((h_by.D[x, k] - h_b.D[x, k]) / (h_b.N[x, k] - h_by.N[x, k]))


def whittle_table_B(arm: Arm, beta: float, ell: int, check: bool = True) -> IndexTableB:
    check_discount(beta)
    if check:
        _require_assumptions(arm)
    n = arm.size
    theta = np.zeros(n, dtype=int)
    w = np.full((n, ell + 1), np.nan)
    breakpoints: list = []
    chain = [theta.copy()]
    base = dn_values_B(arm, theta, beta, ell)
    while (theta <= ell).any():
        mu_star = {}
        for s in np.flatnonzero(theta <= ell):
            cand = dn_values_B(arm, _grow(theta, s), beta, ell)
            mask = lambda_set(base.N, cand.N)
            if mask.any():
                mu_star[s] = np.min((cand.D[mask] - base.D[mask])
                                    / (base.N[mask] - cand.N[mask]))
        if not mu_star:
            raise DegenerateIndexError(
                f"no frontier state of thresholds {theta.tolist()} changes N anywhere")
        lam = min(mu_star.values())
        gamma = [s for s, v in mu_star.items() if _same_index(v, lam)]
        merge = bool(breakpoints) and (
            _same_index(lam, breakpoints[-1])
            or 0 < breakpoints[-1] - lam <= DRIFT_RTOL * max(1.0, abs(lam)))
        if merge:
            lam = breakpoints[-1]
        elif breakpoints and lam < breakpoints[-1]:
            warnings.warn(f"greedy breakpoint {lam!r} below previous {breakpoints[-1]!r}",
                          RuntimeWarning, stacklevel=2)
        for s in gamma:
            w[s, theta[s]] = lam
            theta[s] += 1
        if merge:
            chain[-1] = theta.copy()
        else:
            breakpoints.append(lam)
            chain.append(theta.copy())
        base = dn_values_B(arm, theta, beta, ell)
    return IndexTableB(w, breakpoints, chain, float(beta), ell)


def whittle_table(arm: Arm, model: str, beta: float, ell: int, check: bool = True):
    if model == "A":
        return whittle_table_A(arm, beta, ell, check)
    if model == "B":
        return whittle_table_B(arm, beta, ell, check)
    raise ValueError(f"model must be 'A' or 'B', got {model!r}")
