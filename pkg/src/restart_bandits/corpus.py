"""Random structured arms for property checks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arm import Arm, structured_arm


@dataclass(frozen=True)
class CorpusArm:
    arm: Arm
    family: int
    p: float
    size: int
    q_seed: int

    def label(self) -> str:
        return f"family={self.family} p={self.p:.4f} |X|={self.size} q_seed={self.q_seed}"


def random_arms(count: int, seed: int = 0, sizes=(2, 3, 4, 5), families=(1, 2, 3, 4),
                p_range=(0.05, 0.95)) -> list[CorpusArm]:
    """``count`` arms with random family, size, stay probability and reset pmf."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        fam = int(rng.choice(families))
        size = int(rng.choice(sizes))
        p = float(rng.uniform(*p_range))
        q_seed = int(rng.integers(2**32))
        out.append(CorpusArm(structured_arm(fam, p, size, q_seed), fam, p, size, q_seed))
    return out
