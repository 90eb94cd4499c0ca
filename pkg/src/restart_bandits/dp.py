"""Dynamic-programming ground truth on the truncated information states.

Everything here works directly on the Bellman equation of the lam-penalized
single-arm problem (or of the joint multi-arm problem) and never touches the
closed-form D/N machinery, so it can serve as an independent oracle for the
index tables.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .arm import Arm, InfoChain, check_discount, info_chain
from .errors import NotThresholdError, StateSpaceTooLarge

DEFAULT_TOL = 1e-10
MAX_SWEEPS = 1_000_000


class IndexabilityError(RuntimeError):
    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


@dataclass(frozen=True, eq=False)
class ValueFunction:
    """Converged ``V``, state-action values ``H`` (last axis = action) and greedy ``g``.

    Shapes follow the information states: (ell+1,) for model A, (|X|, ell+1) for B.
    """

    model: str
    ell: int
    lam: float
    V: np.ndarray
    H: np.ndarray
    g: np.ndarray
    sweeps: int


def _bellman(chain: InfoChain, V: np.ndarray, lams: np.ndarray, beta: float):
    """H for a batch of penalties; ``V`` has shape (batch, n_states)."""
    H0 = (1 - beta) * chain.cost[:, 0] + beta * V[:, chain.passive_next]
    cont = V[:, chain.restart_states] @ chain.restart_probs
    H1 = (1 - beta) * (chain.cost[:, 1] + lams[:, None]) + beta * cont[:, None]
    return H0, H1


def _solve_batch(chain: InfoChain, lams: np.ndarray, beta: float, tol: float,
                 V0: np.ndarray | None = None):
    """Value iteration for every penalty in ``lams`` at once.

    Stops when span(V_{n+1} - V_n) < tol (1-beta) / (2 beta) for every member, then
    shifts by the midpoint of the one-step difference; the result is within
    tol / 4 of the fixed point in sup norm.
    """
    lams = np.asarray(lams, dtype=float)
    V = np.zeros((lams.size, chain.n_states)) if V0 is None else np.array(V0, dtype=float)
    stop = tol * (1 - beta) / (2 * beta)
    for sweep in range(1, MAX_SWEEPS + 1):
        H0, H1 = _bellman(chain, V, lams, beta)
        Vn = np.minimum(H0, H1)
        d = Vn - V
        hi, lo = d.max(axis=1), d.min(axis=1)
        V = Vn
        if (hi - lo < stop).all():
            break
    else:
        raise RuntimeError("value iteration did not converge")
    V = V + beta / (1 - beta) * ((hi + lo) / 2)[:, None]
    H0, H1 = _bellman(chain, V, lams, beta)
    return V, H0, H1, sweep


def _solve_batch_pi(chain: InfoChain, lams: np.ndarray, beta: float,
                    g0: np.ndarray | None = None, max_iter: int = 500):
    """Howard policy iteration for every penalty in ``lams`` at once.

    Each evaluation is a dense solve of (I - beta T_g) V = (1 - beta)(c_g + lam g),
    so the fixed point is exact up to round-off. An action only changes when the
    other one is better by more than a round-off margin, which rules out cycling.
    """
    lams = np.asarray(lams, dtype=float)
    n = chain.n_states
    T0, T1 = chain.transition(0), chain.transition(1)
    c0, c1 = chain.cost[:, 0], chain.cost[:, 1]
    eye = np.eye(n)
    g = np.ones((lams.size, n), dtype=bool) if g0 is None else np.array(g0, dtype=bool)
    margin = 1e-13 * (1.0 + np.abs(lams)[:, None] + np.abs(chain.cost).max())
    for it in range(1, max_iter + 1):
        T = np.where(g[:, :, None], T1[None], T0[None])
        rhs = (1 - beta) * np.where(g, c1[None] + lams[:, None], c0[None])
        V = np.linalg.solve(eye[None] - beta * T, rhs[..., None])[..., 0]
        H0, H1 = _bellman(chain, V, lams, beta)
        g_new = np.where(H1 < H0 - margin, True, np.where(H0 < H1 - margin, False, g))
        if (g_new == g).all():
            return V, H0, H1, it
        g = g_new
    raise RuntimeError("policy iteration did not converge")


def value_iteration(arm: Arm, model: str, lam: float, beta: float, ell: int,
                    tol: float = DEFAULT_TOL) -> ValueFunction:
    check_discount(beta)
    if ell < 1:
        raise ValueError("ell must be at least 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    chain = info_chain(arm, model, ell)
    V, H0, H1, sweeps = _solve_batch(chain, np.array([lam]), beta, tol)
    H = np.stack([H0[0], H1[0]], axis=-1).reshape(chain.shape + (2,))
    # ties go to the active action
    g = (H[..., 1] <= H[..., 0]).astype(int)
    return ValueFunction(model, ell, float(lam), V[0].reshape(chain.shape), H, g, sweeps)


def value_iteration_batch(arm: Arm, model: str, lams: Sequence[float], beta: float,
                          ell: int, tol: float = DEFAULT_TOL):
    """``V`` and ``H`` for several penalties in one batched solve.

    Returns arrays shaped ``(len(lams),) + info_shape`` and ``... + (2,)``.
    """
    check_discount(beta)
    chain = info_chain(arm, model, ell)
    lams = np.asarray(lams, dtype=float)
    V, H0, H1, _ = _solve_batch(chain, lams, beta, tol)
    shape = (lams.size,) + chain.shape
    return V.reshape(shape), np.stack([H0, H1], axis=-1).reshape(shape + (2,))


def extract_threshold(vf: ValueFunction):
    """Smallest ``k`` with ``g = 1`` (``ell + 1`` if none), per ``s`` for model B."""
    g = np.atleast_2d(vf.g)
    n_k = g.shape[1]
    theta = np.where(g.any(axis=1), g.argmax(axis=1), n_k)
    expected = (np.arange(n_k)[None, :] >= theta[:, None]).astype(int)
    bad = np.flatnonzero((expected != g).any(axis=1))
    if bad.size:
        raise NotThresholdError(f"policy at lam={vf.lam} is not a threshold in k "
                                f"(rows {bad.tolist()}): {g[bad].tolist()}")
    return int(theta[0]) if vf.model == "A" else theta


def _bracket(arm: Arm, beta: float) -> float:
    return arm.max_cost / (1 - beta) + 1.0


def bisection_indices(arm: Arm, model: str, beta: float, ell: int,
                      tol_lam: float = 1e-9, tol: float = 1e-11,
                      method: str = "policy") -> np.ndarray:
    """Index of every information state by per-state bisection on the penalty.

    Each bisection round solves one batched Bellman problem in which state ``i``
    gets its own midpoint penalty; the answer for ``i`` only reads state ``i``.
    ``method`` picks the inner solver: ``"policy"`` (policy iteration, exact
    linear solves) or ``"value"`` (value iteration to ``tol``).
    """
    check_discount(beta)
    if method not in ("policy", "value"):
        raise ValueError("method must be 'policy' or 'value'")
    chain = info_chain(arm, model, ell)
    n = chain.n_states
    idx = np.arange(n)
    b = _bracket(arm, beta)
    lo = np.full(n, -b)
    hi = np.full(n, b)
    _, H0, H1, _ = _solve_batch(chain, np.array([lo[0], hi[0]]), beta, tol)
    if not ((H1[0] <= H0[0]).all() and (H1[1] > H0[1]).all()):
        raise IndexabilityError(f"penalty bracket +-{b} does not force uniform actions")
    V = g = None
    while (hi - lo).max() > tol_lam:
        mid = 0.5 * (lo + hi)
        if method == "policy":
            _, H0, H1, _ = _solve_batch_pi(chain, mid, beta, g0=g)
            g = H1 <= H0
        else:
            V, H0, H1, _ = _solve_batch(chain, mid, beta, tol, V0=V)
        passive = H0[idx, idx] < H1[idx, idx]
        hi = np.where(passive, mid, hi)
        lo = np.where(passive, lo, mid)
    return (0.5 * (lo + hi)).reshape(chain.shape)


def _flat_state(model: str, ell: int, state) -> int:
    if model == "A":
        k = int(state if np.isscalar(state) else state[0])
        return k
    s, k = state
    return int(s) * (ell + 1) + int(k)


def index_by_bisection(arm: Arm, model: str, state, beta: float, ell: int,
                       tol_lam: float = 1e-9, tol: float = 1e-11,
                       grid: int = 0) -> float:
    """Penalty where ``state`` flips from active to passive.

    ``state`` is ``k`` for model A or ``(s, k)`` for model B. With ``grid > 0`` the
    passive predicate is also sampled on that many bracket points and must switch
    exactly once; otherwise :class:`IndexabilityError` carries the trace.
    """
    check_discount(beta)
    chain = info_chain(arm, model, ell)
    i = _flat_state(model, ell, state)
    b = _bracket(arm, beta)
    if grid > 0:
        lams = np.linspace(-b, b, grid)
        _, H0, H1, _ = _solve_batch(chain, lams, beta, tol)
        passive = H0[:, i] < H1[:, i]
        if (np.diff(passive.astype(int)) < 0).any() or passive[0] or not passive[-1]:
            raise IndexabilityError(f"passive predicate at {state} is not monotone in lam",
                                    list(zip(lams.tolist(), passive.tolist())))
    lo, hi = -b, b
    V = None
    while hi - lo > tol_lam:
        mid = 0.5 * (lo + hi)
        V, H0, H1, _ = _solve_batch(chain, np.array([mid]), beta, tol, V0=V)
        if H0[0, i] < H1[0, i]:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def passive_set_scan(arm: Arm, model: str, lam_grid: Sequence[float], beta: float,
                     ell: int, tol: float = DEFAULT_TOL):
    """Passive sets over a sorted penalty grid and whether they form an inclusion chain."""
    lams = np.asarray(lam_grid, dtype=float)
    if (np.diff(lams) < 0).any():
        raise ValueError("lam_grid must be sorted ascending")
    chain = info_chain(arm, model, ell)
    _, H0, H1, _ = _solve_batch(chain, lams, beta, tol)
    sets = [(H0[j] < H1[j]).reshape(chain.shape) for j in range(lams.size)]
    indexable = all((~a | b).all() for a, b in zip(sets, sets[1:]))
    return sets, indexable


# ---------------------------------------------------------------------------
# Joint multi-arm problem
# ---------------------------------------------------------------------------

def action_set(n: int, m: int, exact: bool = False) -> np.ndarray:
    """All 0/1 vectors with at most ``m`` ones (exactly ``m`` if ``exact``).

    Larger activation sets come first, so ``argmin`` over this order breaks
    exact ties toward activating.
    """
    acts = []
    for j in range(min(m, n), m - 1 if exact else -1, -1):
        for combo in itertools.combinations(range(n), j):
            a = np.zeros(n, dtype=int)
            a[list(combo)] = 1
            acts.append(a)
    return np.array(acts)


@dataclass(frozen=True, eq=False)
class JointModel:
    """Product of single-arm information chains with a per-step summed cost."""

    chains: list
    actions: np.ndarray

    @property
    def shape(self) -> tuple:
        return tuple(c.n_states for c in self.chains)

    def expect(self, V: np.ndarray, a: np.ndarray) -> np.ndarray:
        """E[V(next joint state)] for every current joint state under action vector ``a``."""
        out = V
        for i, (c, ai) in enumerate(zip(self.chains, a)):
            if ai:
                r = np.tensordot(out.take(c.restart_states, axis=i), c.restart_probs, axes=([i], [0]))
                out = np.broadcast_to(np.expand_dims(r, i), V.shape)
            else:
                out = out.take(c.passive_next, axis=i)
        return out

    def cost(self, a: np.ndarray) -> np.ndarray:
        total = np.zeros(self.shape)
        for i, (c, ai) in enumerate(zip(self.chains, a)):
            shape = [1] * len(self.chains)
            shape[i] = c.n_states
            total = total + c.cost[:, ai].reshape(shape)
        return total


def joint_model(arms: Sequence[Arm], model: str, m: int, ell: int,
                cap: int = 10**6, exact: bool = False) -> JointModel:
    chains = [info_chain(a, model, ell) for a in arms]
    size = int(np.prod([c.n_states for c in chains], dtype=float))
    if size > cap:
        raise StateSpaceTooLarge(f"joint information space has {size} states (cap {cap})")
    return JointModel(chains, action_set(len(arms), m, exact))


@dataclass(frozen=True, eq=False)
class JointPolicy:
    """Greedy action index per joint information state, with its value table."""

    model: str
    ell: int
    actions: np.ndarray
    table: np.ndarray
    V: np.ndarray

    def action(self, states) -> np.ndarray:
        """Action vector for a tuple of per-arm flat information-state indices."""
        return self.actions[self.table[tuple(states)]]

    def to_dict(self) -> dict:
        rows = []
        for idx in np.ndindex(self.table.shape):
            rows.append({"state": list(idx), "action": self.actions[self.table[idx]].tolist(),
                         "value": float(self.V[idx])})
        return {"model": self.model, "ell": self.ell, "entries": rows}

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")


def joint_optimal_policy(arms: Sequence[Arm], model: str, m: int, beta: float, ell: int,
                         tol: float = DEFAULT_TOL, cap: int = 10**6,
                         exact: bool = False) -> JointPolicy:
    """Optimal stationary policy of the joint problem.

    With ``exact=False`` the budget is "at most m" and idling is allowed; with
    ``exact=True`` every action activates exactly ``m`` arms, like WIP and MYP.

    Per-arm states are flat indices as in :func:`restart_bandits.arm.info_chain`.
    """
    check_discount(beta)
    jm = joint_model(arms, model, m, ell, cap, exact)
    costs = [(1 - beta) * jm.cost(a) for a in jm.actions]
    stop = tol * (1 - beta) / (2 * beta)
    V = np.zeros(jm.shape)
    for _ in range(MAX_SWEEPS):
        Q = np.stack([c + beta * jm.expect(V, a) for c, a in zip(costs, jm.actions)])
        Vn = Q.min(axis=0)
        d = Vn - V
        V = Vn
        if d.max() - d.min() < stop:
            break
    else:
        raise RuntimeError("joint value iteration did not converge")
    V = V + beta / (1 - beta) * (d.max() + d.min()) / 2
    Q = np.stack([c + beta * jm.expect(V, a) for c, a in zip(costs, jm.actions)])
    return JointPolicy(model, ell, jm.actions, Q.argmin(axis=0), Q.min(axis=0))


def evaluate_joint(arms: Sequence[Arm], model: str, ell: int, beta: float,
                   table: np.ndarray, actions: np.ndarray,
                   tol: float = 1e-10) -> np.ndarray:
    """Value of a stationary joint policy given as an action-index table."""
    check_discount(beta)
    chains = [info_chain(a, model, ell) for a in arms]
    jm = JointModel(chains, actions)
    used = np.unique(table)
    costs = {u: (1 - beta) * jm.cost(actions[u]) for u in used}
    stop = tol * (1 - beta) / (2 * beta)
    V = np.zeros(jm.shape)
    for _ in range(MAX_SWEEPS):
        Vn = np.zeros(jm.shape)
        for u in used:
            sel = table == u
            Vn[sel] = (costs[u] + beta * jm.expect(V, actions[u]))[sel]
        d = Vn - V
        V = Vn
        if d.max() - d.min() < stop:
            break
    return V + beta / (1 - beta) * (d.max() + d.min()) / 2


def initial_distribution(arms: Sequence[Arm], model: str, ell: int) -> np.ndarray:
    """Joint start law: every arm at k = 0 (model B: s drawn from Q)."""
    dist = np.ones(())
    for a in arms:
        if model == "A":
            p = np.zeros(ell + 1)
            p[0] = 1.0
        else:
            p = np.zeros((a.size, ell + 1))
            p[:, 0] = a.Q
            p = p.ravel()
        dist = np.multiply.outer(dist, p)
    return dist
