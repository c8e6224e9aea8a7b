"""Counter-based random streams.

Every draw in the package comes from a Philox generator keyed by
``(seed, family, purpose, *ids)``. A path's randomness therefore depends only
on its own identifiers, never on how work was split between processes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Stable integer codes; changing them changes every simulated number.
PURPOSES = {
    "base": 1,       # per-path Gaussian increments and bridge uniforms
    "strip": 2,      # Poisson random measure layers (ids: path, layer)
    "inner": 3,      # nested continuations (ids: path, t_idx or block)
    "inner_strip": 4,
    "marks": 5,
    "bridge": 6,
}

FAMILIES = {
    "paths": 0,
    "ef": 1,
    "outer": 2,
    "oracle": 3,
    "price": 4,
    "dynkin": 5,
}


def stream(seed: int, purpose: str, *ids: int, family: str | int = "paths") -> np.random.Generator:
    fam = FAMILIES[family] if isinstance(family, str) else int(family)
    key = (fam, PURPOSES[purpose], *(int(i) for i in ids))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=key)))


@dataclass(frozen=True)
class StreamKey:
    """Identifies the randomness of one simulated path."""

    seed: int
    path_id: int
    family: str = "paths"

    def gen(self, purpose: str, *ids: int) -> np.random.Generator:
        return stream(self.seed, purpose, self.path_id, *ids, family=self.family)

    def as_tuple(self) -> tuple:
        return (self.seed, FAMILIES.get(self.family, self.family), self.path_id)
