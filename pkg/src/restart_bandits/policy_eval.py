"""Exact evaluation of threshold policies on the truncated information states.

A threshold ``theta`` (per last-observed state ``s`` in model B) means: stay
passive while ``k < theta`` and activate once ``k >= theta``. The value
``ell + 1`` is a sentinel for "never activate"; under it the chain parks at
``k = ell`` forever.

``D`` is the normalized discounted cost and ``N`` the normalized discounted
number of activations, so the penalized value of the policy is ``D + lam * N``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .arm import Arm, InfoChain, check_discount, check_model, cost_table, info_chain

Threshold = Union[int, np.ndarray]


@dataclass(frozen=True, eq=False)
class PolicyValue:
    """D and N tables, shaped (ell+1,) for model A and (|X|, ell+1) for model B."""

    model: str
    D: np.ndarray
    N: np.ndarray
    tail_bound: float = 0.0

    def penalized(self, lam: float) -> np.ndarray:
        return self.D + lam * self.N

    def rows(self):
        if self.model == "A":
            for k in range(self.D.shape[0]):
                yield "", k, self.D[k], self.N[k]
        else:
            for s in range(self.D.shape[0]):
                for k in range(self.D.shape[1]):
                    yield s + 1, k, self.D[s, k], self.N[s, k]

    def to_csv(self, path) -> None:
        """Write columns ``s, k, D, N``; ``s`` is the 1-based state label (blank for A)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s", "k", "D", "N"])
            for s, k, d, n in self.rows():
                w.writerow([s, k, repr(float(d)), repr(float(n))])


def _check_theta(theta, ell: int) -> None:
    t = np.asarray(theta)
    if (t < 0).any() or (t > ell + 1).any():
        raise ValueError(f"thresholds must lie in [0, {ell + 1}], got {theta}")


def _lm_recursion(c0: np.ndarray, c1: np.ndarray, theta: np.ndarray, beta: float, ell: int):
    """L and M along the k axis for arbitrary leading shape.

    ``c0``/``c1`` have shape (..., ell+1), ``theta`` has the leading shape.
    """
    L = np.empty_like(c0)
    M = np.empty_like(c0)
    for k in range(ell, -1, -1):
        act = k >= theta
        if k == ell:
            cont_L = c0[..., ell]  # parked at the cap forever
            cont_M = np.zeros_like(cont_L)
        else:
            cont_L = (1 - beta) * c0[..., k] + beta * L[..., k + 1]
            cont_M = beta * M[..., k + 1]
        L[..., k] = np.where(act, (1 - beta) * c1[..., k], cont_L)
        M[..., k] = np.where(act, 1 - beta, cont_M)
    return L, M


def _all_threshold_tables(arm: Arm, model: str, beta: float, ell: int):
    """L, M for every threshold 0..ell+1, cached on the arm.

    Shapes: (ell+2, ell+1) for model A, (|X|, ell+2, ell+1) for model B, with the
    threshold on the second-to-last axis.
    """
    key = ("lm", model, float(beta), ell)
    if key not in arm._memo:
        c = cost_table(arm, model, ell)
        thetas = np.arange(ell + 2)
        if model == "A":
            c0 = np.broadcast_to(c[:, 0], (ell + 2, ell + 1))
            c1 = np.broadcast_to(c[:, 1], (ell + 2, ell + 1))
            th = thetas
        else:
            shape = (arm.size, ell + 2, ell + 1)
            c0 = np.broadcast_to(c[:, None, :, 0], shape)
            c1 = np.broadcast_to(c[:, None, :, 1], shape)
            th = np.broadcast_to(thetas, (arm.size, ell + 2))
        L, M = _lm_recursion(c0, c1, th, beta, ell)
        L.setflags(write=False)
        M.setflags(write=False)
        arm._memo[key] = (L, M)
    return arm._memo[key]


def _renewal_factor(theta: np.ndarray, beta: float, ell: int) -> np.ndarray:
    """beta^(max(theta - k, 0) + 1) over k, zero where the policy never activates."""
    k = np.arange(ell + 1)
    theta = np.asarray(theta)[..., None]
    f = beta ** (np.maximum(theta - k, 0) + 1)
    return np.where(theta == ell + 1, 0.0, f)


def lm_values_A(arm: Arm, theta: int, beta: float, ell: int):
    check_discount(beta)
    _check_theta(theta, ell)
    L, M = _all_threshold_tables(arm, "A", beta, ell)
    return L[int(theta)].copy(), M[int(theta)].copy()


def dn_values_A(arm: Arm, theta: int, beta: float, ell: int) -> PolicyValue:
    L, M = lm_values_A(arm, theta, beta, ell)
    theta = int(theta)
    if theta == ell + 1:
        return PolicyValue("A", L, M)
    f = _renewal_factor(theta, beta, ell)
    denom = 1.0 - beta ** (theta + 1)
    return PolicyValue("A", L + f * L[0] / denom, M + f * M[0] / denom)


def lm_values_B(arm: Arm, theta, beta: float, ell: int):
    check_discount(beta)
    theta = np.asarray(theta, dtype=int)
    if theta.shape != (arm.size,):
        raise ValueError(f"need one threshold per state, got shape {theta.shape}")
    _check_theta(theta, ell)
    L, M = _all_threshold_tables(arm, "B", beta, ell)
    rows = np.arange(arm.size)
    return L[rows, theta], M[rows, theta]


def dn_values_B(arm: Arm, theta, beta: float, ell: int) -> PolicyValue:
    L, M = lm_values_B(arm, theta, beta, ell)
    theta = np.asarray(theta, dtype=int)
    z = np.where(theta == ell + 1, 0.0, beta ** (theta + 1.0))
    Z = np.outer(z, arm.Q)
    A = np.eye(arm.size) - Z
    try:
        x = np.linalg.solve(A, np.column_stack([L[:, 0], M[:, 0]]))
    except np.linalg.LinAlgError as e:  # spectral radius of Z is at most beta
        raise RuntimeError(f"singular renewal system for thresholds {theta}") from e
    f = _renewal_factor(theta, beta, ell)
    qD, qN = arm.Q @ x
    return PolicyValue("B", L + f * qD, M + f * qN)


def dn_values(arm: Arm, model: str, theta, beta: float, ell: int) -> PolicyValue:
    if check_model(model) == "A":
        return dn_values_A(arm, theta, beta, ell)
    return dn_values_B(arm, theta, beta, ell)


# ---------------------------------------------------------------------------
# Oracles on the explicit chain
# ---------------------------------------------------------------------------

def threshold_actions(chain: InfoChain, theta) -> np.ndarray:
    """Action per chain state for a threshold policy."""
    k = np.arange(chain.ell + 1)
    theta = np.asarray(theta)
    if chain.model == "A":
        g = k >= theta
    else:
        g = k[None, :] >= theta[:, None]
    return g.astype(int).ravel()


def _policy_step(chain: InfoChain, g: np.ndarray, V: np.ndarray) -> np.ndarray:
    passive = V[chain.passive_next]
    active = V[chain.restart_states] @ chain.restart_probs
    return np.where(g == 1, active, passive)


def finite_horizon_eval(arm: Arm, model: str, theta, horizon: int, beta: float,
                        ell: int, chain: Optional[InfoChain] = None) -> PolicyValue:
    """Backward recursion of ``(1-beta) sum_{t<horizon} beta^t (.)`` on the truncated chain.

    Independent of the closed forms in this module. ``tail_bound`` bounds the
    discarded tail of ``D`` (``N`` is off by at most ``beta**horizon``).
    """
    check_discount(beta)
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    _check_theta(theta, ell)
    chain = chain if chain is not None else info_chain(arm, model, ell)
    g = threshold_actions(chain, theta)
    c = chain.cost[np.arange(chain.n_states), g]
    D = np.zeros(chain.n_states)
    N = np.zeros(chain.n_states)
    for _ in range(horizon):
        D = (1 - beta) * c + beta * _policy_step(chain, g, D)
        N = (1 - beta) * g + beta * _policy_step(chain, g, N)
    tail = beta**horizon * arm.max_cost / (1 - beta)
    return PolicyValue(chain.model, D.reshape(chain.shape), N.reshape(chain.shape), tail)


def penalized_value_direct(arm: Arm, model: str, theta, beta: float, ell: int,
                           lam: float) -> np.ndarray:
    """Solve ``V = (1-beta)(c_g + lam g) + beta T_g V`` as one dense linear system."""
    check_discount(beta)
    _check_theta(theta, ell)
    chain = info_chain(arm, model, ell)
    g = threshold_actions(chain, theta)
    n = chain.n_states
    c = chain.cost[np.arange(n), g] + lam * g
    T = np.where(g[:, None] == 1, chain.transition(1), chain.transition(0))
    V = np.linalg.solve(np.eye(n) - beta * T, (1 - beta) * c)
    return V.reshape(chain.shape)
