"""Deterministic random streams.

Every run owns a Philox (counter-based, 64-bit) generator family keyed by its
seed. Independent named streams are obtained by spawning child seed sequences
in a fixed order, so adding draws to one stream never shifts another.
Gaussian variates come from numpy's ``standard_normal`` (ziggurat), which is
deterministic for a given bit stream on every platform numpy supports.
"""
import numpy as np

STREAMS = ("init", "process", "measurement", "aux")


def streams(seed, names=STREAMS):
    """Return a dict of independent ``Generator`` objects for one run."""
    children = np.random.SeedSequence(int(seed)).spawn(len(names))
    return {name: np.random.Generator(np.random.Philox(child)) for name, child in zip(names, children)}
