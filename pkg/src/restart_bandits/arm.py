"""Restart arms, information states and the structured deterioration models.

An arm is a finite Markov chain that evolves with matrix ``P`` while passive
and is reset to a draw from ``Q`` when active. States are stored 0-based:
array index ``i`` is the state the maintenance example labels ``i + 1``
(pristine first, ruined last).

Two observation models are supported. In model A nothing is ever observed and
the belief is ``Q P^k`` where ``k`` counts steps since the last activation. In
model B the post-reset state ``s`` is revealed, so the belief is row ``s`` of
``P^k``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np

Model = Literal["A", "B"]

ROW_TOL = 1e-12


def check_model(model: str) -> str:
    if model not in ("A", "B"):
        raise ValueError(f"model must be 'A' or 'B', got {model!r}")
    return model


def check_discount(beta: float) -> float:
    if not 0.0 < beta < 1.0:
        raise ValueError(f"discount factor must lie in (0, 1), got {beta}")
    return float(beta)


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class CostSpec:
    """Per-state passive cost ``phi`` and active cost ``rho``."""

    passive: np.ndarray
    active: np.ndarray

    def __post_init__(self):
        passive = _frozen(self.passive)
        active = _frozen(self.active)
        if passive.ndim != 1 or passive.shape != active.shape:
            raise ValueError("passive and active costs must be 1-d arrays of equal length")
        if (passive < 0).any() or (active < 0).any():
            raise ValueError("costs must be nonnegative")
        object.__setattr__(self, "passive", passive)
        object.__setattr__(self, "active", active)

    @property
    def table(self) -> np.ndarray:
        """Cost as a (|X|, 2) array indexed by (state, action)."""
        return np.column_stack([self.passive, self.active])


@dataclass(frozen=True, eq=False)
class Arm:
    """A restart bandit ``(P, Q, cost)``.

    Matrix powers ``P^0 .. P^k`` and derived per-threshold tables are computed
    lazily and cached on the instance; the caches never change observable values.
    """

    P: np.ndarray
    Q: np.ndarray
    cost: CostSpec
    _powers: list = field(default_factory=list, init=False, repr=False, compare=False)
    _memo: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        P = _frozen(self.P)
        Q = _frozen(self.Q)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 1:
            raise ValueError(f"P must be square, got shape {P.shape}")
        if (P < 0).any() or (P > 1).any():
            raise ValueError("P entries must lie in [0, 1]")
        if np.abs(P.sum(axis=1) - 1.0).max() > ROW_TOL:
            raise ValueError("rows of P must sum to 1")
        if Q.shape != (P.shape[0],):
            raise ValueError("Q must have one entry per state")
        if (Q < 0).any() or abs(Q.sum() - 1.0) > ROW_TOL:
            raise ValueError("Q must be a probability vector")
        if self.cost.passive.shape != Q.shape:
            raise ValueError("cost arrays must have one entry per state")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Q", Q)

    @property
    def size(self) -> int:
        return self.P.shape[0]

    @property
    def max_cost(self) -> float:
        return float(max(self.cost.passive.max(), self.cost.active.max()))

    def powers(self, upto: int) -> np.ndarray:
        """Stack ``[P^0, ..., P^upto]`` as a read-only (upto+1, |X|, |X|) array."""
        if upto < 0:
            raise ValueError("power index must be nonnegative")
        pw = self._powers
        if not pw:
            pw.append(np.eye(self.size))
        while len(pw) <= upto:
            nxt = pw[-1] @ self.P
            rows = nxt.sum(axis=1)
            if np.abs(rows - 1.0).max() > ROW_TOL:
                nxt = nxt / rows[:, None]
            pw.append(nxt)
        out = np.stack(pw[: upto + 1])
        out.setflags(write=False)
        return out


@dataclass(frozen=True)
class InfoStateA:
    k: int

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be nonnegative")


@dataclass(frozen=True)
class InfoStateB:
    s: int
    k: int

    def __post_init__(self):
        if self.k < 0 or self.s < 0:
            raise ValueError("s and k must be nonnegative")


InfoState = Union[InfoStateA, InfoStateB]


# ---------------------------------------------------------------------------
# Generators used in the experiments
# ---------------------------------------------------------------------------

def make_structured_matrix(family: int, p: float, size: int) -> np.ndarray:
    """Upper-triangular deterioration matrix ``P_family(p)``.

    Families 1-3 stay put with probability ``p`` and move one or two states
    worse with probabilities ``q1, q2``; family 4 spreads ``1 - p`` uniformly
    over all worse states. The last state is absorbing.
    """
    if family not in (1, 2, 3, 4):
        raise ValueError(f"family must be 1, 2, 3 or 4, got {family}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if size < 2:
        raise ValueError("size must be at least 2")
    P = np.zeros((size, size))
    P[-1, -1] = 1.0
    if family == 4:
        for i in range(size - 1):
            P[i, i] = p
            P[i, i + 1:] = (1.0 - p) / (size - 1 - i)
        return P
    q1, q2 = {
        1: (1.0 - p, 0.0),
        2: ((1.0 - p) / 2, (1.0 - p) / 2),
        3: (2 * (1.0 - p) / 3, (1.0 - p) / 3),
    }[family]
    for i in range(size - 2):
        P[i, i] = p
        P[i, i + 1] = q1
        P[i, i + 2] = q2
    P[size - 2, size - 2] = p
    P[size - 2, size - 1] = q1 + q2
    return P


def sample_reset_pmf(size: int, rng_seed: int) -> np.ndarray:
    """Normalized iid Exp(1) draws from a PCG64 stream seeded with ``rng_seed``."""
    if size < 2:
        raise ValueError("size must be at least 2")
    rng = np.random.Generator(np.random.PCG64(int(rng_seed)))
    x = rng.exponential(1.0, size)
    # Exp(1) returns 0.0 with probability ~2**-53 per draw.
    x = np.maximum(x, np.finfo(float).tiny)
    return x / x.sum()


def default_cost(size: int) -> CostSpec:
    """Passive cost ``(x-1)^2`` on labels ``1..|X|`` and active cost ``|X|^2 / 2``."""
    if size < 2:
        raise ValueError("size must be at least 2")
    x = np.arange(size, dtype=float)
    return CostSpec(passive=x**2, active=np.full(size, 0.5 * size**2))


def structured_arm(family: int, p: float, size: int, rng_seed: int,
                   cost: Optional[CostSpec] = None) -> Arm:
    return Arm(make_structured_matrix(family, p, size),
               sample_reset_pmf(size, rng_seed),
               cost if cost is not None else default_cost(size))


# ---------------------------------------------------------------------------
# Beliefs and expected costs
# ---------------------------------------------------------------------------

def belief_of_info(arm: Arm, info: InfoState) -> np.ndarray:
    Pk = arm.powers(info.k)[info.k]
    if isinstance(info, InfoStateA):
        return arm.Q @ Pk
    if info.s >= arm.size:
        raise ValueError(f"state {info.s} out of range for arm of size {arm.size}")
    return Pk[info.s].copy()


def expected_cost(arm: Arm, info: InfoState, action: int) -> float:
    if action not in (0, 1):
        raise ValueError("action must be 0 or 1")
    col = arm.cost.active if action else arm.cost.passive
    return float(belief_of_info(arm, info) @ col)


def belief_table(arm: Arm, model: str, ell: int) -> np.ndarray:
    """All beliefs on the truncated space: (ell+1, |X|) for A, (|X|, ell+1, |X|) for B."""
    pw = arm.powers(ell)
    if check_model(model) == "A":
        return np.einsum("x,kxy->ky", arm.Q, pw)
    return np.transpose(pw, (1, 0, 2)).copy()


def cost_table(arm: Arm, model: str, ell: int) -> np.ndarray:
    """Expected cost ``cbar`` per information state and action.

    Shape (ell+1, 2) for model A and (|X|, ell+1, 2) for model B.
    """
    return belief_table(arm, model, ell) @ arm.cost.table


def step_info(info: InfoState, action: int, ell: int,
              revealed_state: Optional[int] = None) -> InfoState:
    """Advance an information state one step, capping ``k`` at ``ell``."""
    if action not in (0, 1):
        raise ValueError("action must be 0 or 1")
    if isinstance(info, InfoStateA):
        if revealed_state is not None:
            raise ValueError("model A never observes a state")
        return InfoStateA(0 if action else min(info.k + 1, ell))
    if action:
        if revealed_state is None:
            raise ValueError("model B active step needs the revealed post-reset state")
        return InfoStateB(int(revealed_state), 0)
    if revealed_state is not None:
        raise ValueError("nothing is revealed on a passive step")
    return InfoStateB(info.s, min(info.k + 1, ell))


# ---------------------------------------------------------------------------
# Truncated information-state chain
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class InfoChain:
    """Single-arm MDP on the truncated information states.

    States are enumerated as ``k`` (model A) or ``s * (ell + 1) + k`` (model B).
    Passive moves deterministically to ``passive_next``; active jumps to
    ``restart_states`` with probabilities ``restart_probs``.
    """

    model: str
    ell: int
    cost: np.ndarray
    passive_next: np.ndarray
    restart_states: np.ndarray
    restart_probs: np.ndarray

    @property
    def n_states(self) -> int:
        return self.cost.shape[0]

    @property
    def shape(self) -> tuple:
        n_k = self.ell + 1
        return (n_k,) if self.model == "A" else (self.n_states // n_k, n_k)

    def transition(self, action: int) -> np.ndarray:
        """Dense (n, n) transition matrix for a fixed action."""
        n = self.n_states
        T = np.zeros((n, n))
        if action:
            T[:, self.restart_states] = self.restart_probs
        else:
            T[np.arange(n), self.passive_next] = 1.0
        return T


def info_chain(arm: Arm, model: str, ell: int) -> InfoChain:
    if ell < 0:
        raise ValueError("ell must be nonnegative")
    c = cost_table(arm, model, ell).reshape(-1, 2)
    k_next = np.minimum(np.arange(ell + 1) + 1, ell)
    if model == "A":
        return InfoChain("A", ell, c, k_next, np.array([0]), np.array([1.0]))
    n_k = ell + 1
    nxt = (np.arange(arm.size)[:, None] * n_k + k_next[None, :]).ravel()
    restart = np.arange(arm.size) * n_k
    return InfoChain("B", ell, c, nxt, restart, arm.Q.copy())


# ---------------------------------------------------------------------------
# Assumption checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AssumptionReport:
    stochastic_monotone: bool
    dominates_identity: bool
    costs_nondecreasing: bool
    submodular: bool

    @property
    def ok(self) -> bool:
        return (self.stochastic_monotone and self.dominates_identity
                and self.costs_nondecreasing and self.submodular)

    def failures(self) -> list:
        return [name for name, v in vars(self).items() if not v]


def _tail_sums(P: np.ndarray) -> np.ndarray:
    # tail[x, z] = sum_{w >= z} P[x, w]
    return np.cumsum(P[:, ::-1], axis=1)[:, ::-1]


def validate_assumptions(arm: Arm, tol: float = 1e-12) -> AssumptionReport:
    tails = _tail_sums(arm.P)
    monotone = bool((np.diff(tails, axis=0) >= -tol).all())
    # Row x dominates unit mass at x: no probability below x.
    dominates = bool(all(tails[x, x] >= 1.0 - tol for x in range(arm.size)))
    phi, rho = arm.cost.passive, arm.cost.active
    nondecr = bool((np.diff(phi) >= -tol).all() and (np.diff(rho) >= -tol).all())
    submod = bool((np.diff(rho - phi) <= tol).all())
    return AssumptionReport(monotone, dominates, nondecr, submod)


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------

def arm_to_dict(arm: Arm) -> dict:
    return {
        "size": arm.size,
        "P": arm.P.tolist(),
        "Q": arm.Q.tolist(),
        "cost_passive": arm.cost.passive.tolist(),
        "cost_active": arm.cost.active.tolist(),
    }


def arm_from_dict(d: dict) -> Arm:
    arm = Arm(np.array(d["P"]), np.array(d["Q"]),
              CostSpec(d["cost_passive"], d["cost_active"]))
    if arm.size != int(d["size"]):
        raise ValueError(f"size field {d['size']} disagrees with P of size {arm.size}")
    return arm


def save_arm(arm: Arm, path) -> None:
    # json writes floats with their shortest round-trip repr, so reload is exact.
    Path(path).write_text(json.dumps(arm_to_dict(arm), indent=2) + "\n")


def load_arm(path) -> Arm:
    return arm_from_dict(json.loads(Path(path).read_text()))
