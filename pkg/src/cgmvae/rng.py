"""Named, seedable random streams.

Every stochastic consumer gets its own generator derived from the run seed
and a fixed stream id, so adding or reordering one consumer cannot silently
shift the draws of another. Streams with a per-epoch component fold the
epoch into the seed material.
"""

import numpy as np

STREAMS = {
    "init": 0,        # parameter initialization
    "split": 1,       # train/val/test assignment
    "subsample": 2,   # train-fraction subsampling
    "shuffle": 3,     # per-epoch batch order
    "dropout": 4,     # dropout masks, advances across a run
    "sampling": 5,    # latent reparameterization noise, advances across a run
}


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Generator for one named stream; ``extra`` ints (e.g. epoch) fork it further."""
    return np.random.default_rng([int(seed), STREAMS[name], *map(int, extra)])
