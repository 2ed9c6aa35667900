"""Containers shared by the scenario simulators."""
from dataclasses import dataclass, field

import numpy as np


@dataclass
class TruthRun:
    """Truth trajectory, measurement stream and filter initialization.

    Attributes
    ----------
    times : ndarray, shape (K + 1,)
        Propagation grid starting at zero.
    truth : ndarray, shape (K + 1, n)
    measurements : dict
        Maps a step index on ``times`` to the measurement vector taken there.
    x0 : ndarray, shape (n,)
        Initial estimate.
    P0 : ndarray, shape (n, n)
        Initial covariance.
    """

    times: np.ndarray
    truth: np.ndarray
    measurements: dict
    x0: np.ndarray
    P0: np.ndarray
    extras: dict = field(default_factory=dict)


def initial_offsets(rng, sigma, multiple, mode):
    """Initial-estimate errors at ``multiple`` standard deviations.

    ``mode="sign"`` gives ``+/- multiple * sigma`` with random signs;
    ``mode="gaussian"`` draws from ``N(0, (multiple * sigma)^2)``.
    """
    sigma = np.asarray(sigma, dtype=float)
    if mode == "sign":
        signs = np.where(rng.random(sigma.shape) < 0.5, -1.0, 1.0)
        return signs * multiple * sigma
    if mode == "gaussian":
        return multiple * sigma * rng.standard_normal(sigma.shape)
    raise ValueError(f"unknown draw mode {mode!r}")
