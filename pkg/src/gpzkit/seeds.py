"""Deterministic seed derivation.

Every stage of the pipeline draws its randomness from one master seed via a
splittable counter scheme: a (stage, index) pair selects an independent
child stream, so any single stage can be re-run in isolation and reproduce
its output bit-for-bit.
"""
from __future__ import annotations

import numpy as np

__all__ = ["STAGES", "derive_seed"]

# Fixed stage enumeration.  Appending new stages is safe; renumbering is not,
# because stage seeds (and therefore every artifact) would change.
STAGES = {
    "data": 0,
    "init": 1,
    "train": 2,
    "extract": 3,
    "stats": 4,
    "locate": 5,
    "bounds": 6,
    "dynamics": 7,
    "invert": 8,
    "cost": 9,
    "eval": 10,
}


def derive_seed(master: int, stage: str, index: int = 0) -> int:
    """Derive the child seed for (stage, index) from a master seed.

    The same (master, stage, index) triple always yields the same child
    seed; distinct triples yield statistically independent streams.
    """
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}; expected one of {sorted(STAGES)}")
    if index < 0:
        raise ValueError("index must be nonnegative")
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=(STAGES[stage], int(index)))
    return int(ss.generate_state(1, np.uint64)[0])
