"""Deterministic, order-independent random substreams.

Every stochastic stage derives its generator from (root seed, domain tag,
indices) through a SeedSequence, so per-cell work can run in any order or on
any number of threads and still reproduce bit-identically.
"""

from __future__ import annotations

import numpy as np

# Domain tags; never renumber, they are part of the reproducibility contract.
TRUTH_XI = 1
TRUTH_BETA = 2
TRUTH_GAMMA = 3
TRUTH_TABLES = 4
ENSEMBLE = 5
MARGINS = 6
SURVEY = 7
WEIGHT_POSTERIOR = 8
CELL_COMORBIDITY = 9
VALIDATION = 10


def substream(seed: int, *path: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError("seeds must be non-negative")
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, path)]))
