"""Uniform wrappers around the full, square-root and UD filter forms.

Each wrapper owns a ``GaussianBelief`` and exposes ``propagate`` and
``update`` so drivers can swap covariance representations freely.
"""
import numpy as np

from .factorizations import cholesky_lower, condition_number, udu_decompose
from .filter_core import (
    GaussianBelief,
    SqrtFactor,
    UpdateWeights,
    batch_partial_update,
    ekf_propagate,
    sequential_update,
)
from .sqrt_filter import process_noise_rows, sr_ekf_propagate, sr_sequential_update
from .ud_filter import ud_ekf_propagate, ud_sequential_update


class FullForm:
    """Full-covariance filter.

    Parameters
    ----------
    x0 : array_like, shape (n,)
    P0 : array_like, shape (n, n)
    mode : {"sequential", "batch"}
        Measurement processing mode.
    joseph : bool
        Use the Joseph covariance update.
    """

    kind = "full"

    def __init__(self, x0, P0, mode="sequential", joseph=False, relinearize=True):
        self.belief = GaussianBelief(np.array(x0, dtype=float), np.array(P0, dtype=float))
        self.mode = mode
        self.joseph = joseph
        self.relinearize = relinearize

    def propagate(self, sys, u=None, k=0):
        self.belief = ekf_propagate(self.belief, sys, u, k)

    def update(self, sys, y, weights, k=0):
        if self.mode == "batch":
            self.belief = batch_partial_update(self.belief, sys, y, weights, k, self.joseph)
        else:
            self.belief = sequential_update(
                self.belief, sys, y, weights, k, self.relinearize, joseph=self.joseph
            )

    @property
    def mean(self):
        return self.belief.mean

    def covariance(self):
        return self.belief.covariance()

    def factor_condition(self):
        """Condition number of the carried representation."""
        return condition_number(self.covariance())


class SqrtForm(FullForm):
    """Potter square-root filter (sequential scalar updates)."""

    kind = "sqrt"

    def __init__(self, x0, P0, relinearize=True):
        S = cholesky_lower(P0)
        self.belief = GaussianBelief(np.array(x0, dtype=float), SqrtFactor(S))
        self.relinearize = relinearize
        self._noise = None

    def propagate(self, sys, u=None, k=0):
        if self._noise is None or self._noise[0] is not sys.Q:
            self._noise = (sys.Q, process_noise_rows(sys.G, sys.Q))
        self.belief = sr_ekf_propagate(self.belief, sys, u, k, self._noise[1])

    def update(self, sys, y, weights, k=0):
        self.belief = sr_sequential_update(self.belief, sys, y, weights, k, self.relinearize)

    def factor_condition(self):
        return condition_number(self.belief.cov.S)


class UdForm(FullForm):
    """UD-factorized filter (sequential scalar updates)."""

    kind = "ud"

    def __init__(self, x0, P0, relinearize=True):
        self.belief = GaussianBelief(np.array(x0, dtype=float), udu_decompose(P0))
        self.relinearize = relinearize

    def propagate(self, sys, u=None, k=0):
        self.belief = ud_ekf_propagate(self.belief, sys, u, k)

    def update(self, sys, y, weights, k=0):
        self.belief = ud_sequential_update(self.belief, sys, y, weights, k, self.relinearize)

    def factor_condition(self):
        """Condition number of ``U sqrt(D)``, the UD analogue of ``S``."""
        c = self.belief.cov
        return condition_number(c.U * np.sqrt(np.clip(c.D, 0.0, None)))


FORMS = {"full": FullForm, "sqrt": SqrtForm, "ud": UdForm}


def make_form(kind, x0, P0, **kwargs):
    """Instantiate a filter form by name (``full``, ``sqrt`` or ``ud``)."""
    try:
        cls = FORMS[kind]
    except KeyError:
        raise ValueError(f"unknown filter form {kind!r}") from None
    return cls(x0, P0, **kwargs)


def as_weights(beta, n):
    """Broadcast a scalar or vector into ``UpdateWeights`` of length ``n``."""
    if isinstance(beta, UpdateWeights):
        return beta
    b = np.broadcast_to(np.asarray(beta, dtype=float), (n,))
    return UpdateWeights(b)
