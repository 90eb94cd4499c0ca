"""Monte Carlo evaluation of scheduling policies on a fleet of restart arms.

By default costs accrue on the hidden true states. With
``accounting="belief"`` each step is instead charged the expected cost of the
current information state with ``k`` capped at ``config.ell``; since revealed
states are drawn from ``Q`` on restart, that reproduces the truncated
information-state chain exactly, which is the model the DP optimum is optimal
for. The elapsed time ``k`` itself is never capped in the simulator; each
policy clamps it to its own truncation level. Randomness is drawn from one PCG64
substream per (path, arm): the stream for path ``p`` and arm ``i`` is
``SeedSequence(seed, spawn_key=(p, i))`` and supplies ``horizon + 1`` uniforms,
the first for the initial state and one per step for the next state, whether
the arm is passive (row of ``P``) or active (draw from ``Q``). Every policy
therefore sees the same noise, which keeps comparisons low-variance.
"""
from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .arm import check_discount, check_model, cost_table, structured_arm
from .dp import JointPolicy, action_set, evaluate_joint, initial_distribution


@dataclass(frozen=True, eq=False)
class Fleet:
    arms: list
    m: int
    model: str

    def __post_init__(self):
        check_model(self.model)
        if not 1 <= self.m < len(self.arms):
            raise ValueError(f"need 1 <= m < n, got m={self.m}, n={len(self.arms)}")

    @property
    def n(self) -> int:
        return len(self.arms)


@dataclass(frozen=True)
class SimConfig:
    horizon: int = 1000
    paths: int = 5000
    beta: float = 0.99
    seed: int = 0
    ell: int = 39
    chunk: int = 1000
    accounting: str = "state"

    def __post_init__(self):
        check_discount(self.beta)
        if self.horizon < 1 or self.paths < 1:
            raise ValueError("horizon and paths must be positive")
        if self.accounting not in ("state", "belief"):
            raise ValueError(f"accounting must be 'state' or 'belief', got {self.accounting!r}")


@dataclass
class SimResult:
    policy: str
    J_hat: float
    std_err: float
    paths: int
    horizon: int
    seed: int
    tail_bound: float
    fingerprint: str
    per_path: np.ndarray = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"policy": self.policy, "J_hat": self.J_hat, "std_err": self.std_err,
                "paths": self.paths, "horizon": self.horizon, "seed": self.seed,
                "tail_bound": self.tail_bound, "config_fingerprint": self.fingerprint}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def p_grid(n: int) -> np.ndarray:
    """``n`` equispaced stay-probabilities in [0.05, 0.95]."""
    return np.linspace(0.05, 0.95, n)


def reset_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=tuple(key)).generate_state(1, np.uint64)[0])


def make_fleet(family: int, n: int, m: int, size: int, model: str, seed: int) -> Fleet:
    """Heterogeneous fleet: arm ``i`` uses ``P_family(p_i)`` and its own sampled ``Q``.

    The reset pmfs depend on (seed, family, n, i) only, so both observation
    models and every ``m`` see the same machines.
    """
    arms = [structured_arm(family, float(p), size, reset_seed(seed, family, n, i))
            for i, p in enumerate(p_grid(n))]
    return Fleet(arms, m, model)


def fingerprint(fleet: Fleet, config: SimConfig) -> str:
    h = hashlib.sha256()
    cfg = asdict(config)
    cfg.pop("chunk")  # batching does not change results
    h.update(json.dumps(cfg, sort_keys=True).encode())
    h.update(f"{fleet.model}|{fleet.m}".encode())
    for a in fleet.arms:
        for arr in (a.P, a.Q, a.cost.passive, a.cost.active):
            h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# Policies: callables (s, k) -> 0/1 actions, all arrays shaped (batch, n)
# ---------------------------------------------------------------------------

def _top_m(scores: np.ndarray, m: int, largest: bool) -> np.ndarray:
    # stable sort keeps lower arm ids first among equal scores
    key = -scores if largest else scores
    order = np.argsort(key, axis=1, kind="stable")[:, :m]
    a = np.zeros(scores.shape, dtype=np.int8)
    np.put_along_axis(a, order, 1, axis=1)
    return a


class WhittlePolicy:
    """Activate the ``m`` arms whose current information states carry the largest indices."""

    name = "wip"

    def __init__(self, fleet: Fleet, tables: Sequence):
        self.m = fleet.m
        self.model = fleet.model
        self.w = [np.asarray(t.w) for t in tables]
        if any(np.isnan(w).any() for w in self.w):
            raise ValueError("index tables must cover every information state")
        if len({t.ell for t in tables}) != 1:
            raise ValueError("index tables use different truncation levels")
        self.ell = tables[0].ell

    def scores(self, s, k) -> np.ndarray:
        k = np.minimum(k, self.ell)
        if self.model == "A":
            return np.stack([w[k[:, i]] for i, w in enumerate(self.w)], axis=1)
        return np.stack([w[s[:, i], k[:, i]] for i, w in enumerate(self.w)], axis=1)

    def __call__(self, s, k) -> np.ndarray:
        return _top_m(self.scores(s, k), self.m, largest=True)


class MyopicPolicy:
    """Sequential myopic rule: add the arm whose activation raises the one-step cost least.

    Each round minimizes ``sum_{j != i} cbar_j(0) + cbar_i(1)`` over the remaining
    pool, which amounts to picking the ``m`` smallest ``cbar_i(1) - cbar_i(0)``.
    """

    name = "myp"

    def __init__(self, fleet: Fleet, ell: int):
        self.m = fleet.m
        self.model = fleet.model
        self.ell = ell
        self.delta = []
        for a in fleet.arms:
            c = cost_table(a, fleet.model, ell)
            self.delta.append(c[..., 1] - c[..., 0])

    def __call__(self, s, k) -> np.ndarray:
        k = np.minimum(k, self.ell)
        if self.model == "A":
            d = np.stack([t[k[:, i]] for i, t in enumerate(self.delta)], axis=1)
        else:
            d = np.stack([t[s[:, i], k[:, i]] for i, t in enumerate(self.delta)], axis=1)
        return _top_m(d, self.m, largest=False)


def myopic_sequential(cbar0: Sequence[float], cbar1: Sequence[float], m: int) -> list:
    """Literal round-by-round myopic selection for one joint state (reference form)."""
    pool = list(range(len(cbar0)))
    chosen = []
    for _ in range(m):
        best = min(pool, key=lambda i: (sum(cbar0[j] for j in pool if j != i) + cbar1[i], i))
        chosen.append(best)
        pool.remove(best)
    return sorted(chosen)


class OptimalPolicy:
    """Table lookup in a joint optimal policy from :func:`restart_bandits.dp.joint_optimal_policy`."""

    name = "opt"

    def __init__(self, fleet: Fleet, joint: JointPolicy):
        if joint.model != fleet.model:
            raise ValueError("joint policy was computed for a different model")
        self.model = fleet.model
        self.ell = joint.ell
        self.n_k = joint.ell + 1
        self.joint = joint

    def __call__(self, s, k) -> np.ndarray:
        k = np.minimum(k, self.ell)
        flat = k if self.model == "A" else s * self.n_k + k
        idx = tuple(flat[:, i] for i in range(flat.shape[1]))
        return self.joint.actions[self.joint.table[idx]].astype(np.int8)


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

def _uniforms(seed: int, paths: range, n: int, horizon: int) -> np.ndarray:
    U = np.empty((len(paths), n, horizon + 1))
    for j, p in enumerate(paths):
        for i in range(n):
            ss = np.random.SeedSequence(seed, spawn_key=(p, i))
            U[j, i] = np.random.Generator(np.random.PCG64(ss)).random(horizon + 1)
    return U


def _draw(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw: ``cum`` is (batch, |X|) cumulative rows, ``u`` is (batch,)."""
    idx = (u[:, None] >= cum).sum(axis=1)
    return np.minimum(idx, cum.shape[1] - 1)


def simulate_many(fleet: Fleet, policies: dict, config: SimConfig,
                  debug: bool = False, keep_paths: bool = False) -> dict:
    """Simulate several policies on identical noise; returns ``{name: SimResult}``."""
    n, m, beta = fleet.n, fleet.m, config.beta
    belief = config.accounting == "belief"
    if belief:
        costs = [cost_table(a, fleet.model, config.ell) for a in fleet.arms]
    else:
        costs = [a.cost.table for a in fleet.arms]
    cumP = [np.cumsum(a.P, axis=1) for a in fleet.arms]
    cumQ = [np.cumsum(a.Q) for a in fleet.arms]
    disc = (1 - beta) * beta ** np.arange(config.horizon)
    totals = {name: np.empty(config.paths) for name in policies}
    for start in range(0, config.paths, config.chunk):
        block = range(start, min(start + config.chunk, config.paths))
        U = _uniforms(config.seed, block, n, config.horizon)
        B = len(block)
        x0 = np.stack([_draw(np.broadcast_to(cumQ[i], (B, cumQ[i].size)), U[:, i, 0])
                       for i in range(n)], axis=1)
        for name, policy in policies.items():
            x = x0.copy()
            s = x0.copy()
            k = np.zeros((B, n), dtype=np.int64)
            last_reset = np.zeros((B, n), dtype=np.int64)
            last_seen = x0.copy()
            acc = np.zeros(B)
            for t in range(config.horizon):
                a = np.asarray(policy(s, k))
                used = a.sum(axis=1)
                if (used > m).any():
                    raise ValueError(f"policy {name} activated {used.max()} arms with budget {m}")
                step = np.zeros(B)
                if belief:
                    kc = np.minimum(k, config.ell)
                    for i in range(n):
                        if fleet.model == "A":
                            step += costs[i][kc[:, i], a[:, i]]
                        else:
                            step += costs[i][s[:, i], kc[:, i], a[:, i]]
                else:
                    for i in range(n):
                        step += costs[i][x[:, i], a[:, i]]
                acc += disc[t] * step
                act = a == 1
                for i in range(n):
                    cum = np.where(act[:, i, None], cumQ[i][None, :], cumP[i][x[:, i]])
                    x[:, i] = _draw(cum, U[:, i, t + 1])
                k = np.where(act, 0, k + 1)
                if fleet.model == "B":
                    s = np.where(act, x, s)
                if debug:
                    last_reset = np.where(act, t + 1, last_reset)
                    last_seen = np.where(act, x, last_seen)
                    assert (k == t + 1 - last_reset).all()
                    if fleet.model == "B":
                        assert (s == last_seen).all()
            totals[name][block.start:block.stop] = acc
    fp = fingerprint(fleet, config)
    tail = beta**config.horizon * sum(a.max_cost for a in fleet.arms)
    out = {}
    for name, tot in totals.items():
        se = float(tot.std(ddof=1) / np.sqrt(tot.size)) if tot.size > 1 else 0.0
        out[name] = SimResult(name, float(tot.mean()), se, config.paths, config.horizon,
                              config.seed, float(tail), fp, tot if keep_paths else None)
    return out


def simulate(fleet: Fleet, policy: Callable, config: SimConfig, name: str | None = None,
             debug: bool = False) -> SimResult:
    name = name or getattr(policy, "name", "custom")
    return simulate_many(fleet, {name: policy}, config, debug=debug)[name]


# ---------------------------------------------------------------------------
# Exact evaluation of a policy on the joint information chain
# ---------------------------------------------------------------------------

def joint_states(fleet: Fleet, ell: int):
    """All joint information states as (s, k) arrays of shape (n_joint, n), row-major."""
    n_k = ell + 1
    sizes = [n_k if fleet.model == "A" else a.size * n_k for a in fleet.arms]
    flat = np.array(list(itertools.product(*[range(z) for z in sizes])), dtype=np.int64)
    if fleet.model == "A":
        return np.zeros_like(flat), flat, sizes
    return flat // n_k, flat % n_k, sizes


def policy_table(fleet: Fleet, policy: Callable, ell: int):
    """Tabulate a stationary policy over every joint state: (action-index table, actions)."""
    s, k, sizes = joint_states(fleet, ell)
    a = np.asarray(policy(s, k)).astype(int)
    actions = action_set(fleet.n, fleet.m)
    code = {tuple(v): j for j, v in enumerate(actions)}
    table = np.array([code[tuple(r)] for r in a]).reshape(sizes)
    return table, actions


def exact_value(fleet: Fleet, policy: Callable, beta: float, ell: int) -> float:
    """Normalized discounted cost of ``policy`` from the simulator's start law."""
    table, actions = policy_table(fleet, policy, ell)
    V = evaluate_joint(fleet.arms, fleet.model, ell, beta, table, actions)
    return float((initial_distribution(fleet.arms, fleet.model, ell) * V).sum())


def alpha_opt(J_opt: float, J_wip: float) -> float:
    if J_wip == 0:
        raise ZeroDivisionError("J(wip) is zero")
    return 100.0 * J_opt / J_wip


def eps_myp(J_myp: float, J_wip: float) -> float:
    if J_myp == 0:
        raise ZeroDivisionError("J(myp) is zero")
    return 100.0 * (J_myp - J_wip) / J_myp
