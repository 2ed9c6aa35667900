"""Closed-form flop counts for Kalman measurement processing.

Counts are multiplications and divisions (plus square roots for the
factorized filters) for ``n`` states, ``m`` measurements and ``q`` process
noise inputs. Each table row is evaluated exactly as tabulated; totals are
exact rationals.
"""
from dataclasses import dataclass
from fractions import Fraction as Fr


def _check(*vals):
    for v in vals:
        if int(v) != v or v < 1:
            raise ValueError("n, m and q must be positive integers")


def batch_rows(n, m):
    """Per-stage counts for a batch (vector) update."""
    _check(n, m)
    return {
        "HP": m * n ** 2,
        "H(HP)^T+R": n * (Fr(1, 2) * m ** 2 + Fr(1, 2) * m),
        "S^-1": m ** 3 + Fr(1, 2) * m ** 2 + Fr(1, 2) * m,
        "PH^T S^-1": n * m ** 2,
        "P-KHP": (Fr(1, 2) * (n ** 2 - n) + n) * m,
    }


def batch_total(n, m):
    """Tabulated total for the batch update."""
    _check(n, m)
    return (m ** 3 + Fr(3, 2) * n * m ** 2 + Fr(1, 2) * m ** 2 + n * m + Fr(1, 2) * m
            + Fr(3, 2) * m * n ** 2)


def sequential_rows(n, m=1):
    """Per-stage counts for one scalar update, and the decorrelation cost for ``m``."""
    _check(n, m)
    return {
        "HP": n ** 2,
        "H(HP)^T+R": n,
        "S^-1": 1,
        "PH^T S^-1": n,
        "P-KHP": Fr(1, 2) * (n ** 2 - n) + n,
        "per-measurement sum": Fr(3, 2) * n ** 2 + Fr(5, 2) * n + 1,
        "UDU and decorrelation": (Fr(2, 3) * m ** 3 + m ** 2 - Fr(5, 3) * m
                                  + Fr(1, 2) * m ** 2 * n - Fr(1, 2) * m * n),
    }


def sequential_total(n, m):
    """Tabulated total for sequential processing of ``m`` scalars."""
    _check(n, m)
    return (Fr(2, 3) * m ** 3 + m ** 2 - Fr(2, 3) * m + Fr(1, 2) * m ** 2 * n + 2 * m * n
            + Fr(3, 2) * m * n ** 2)


def sequential_advantage(n, m):
    """Tabulated advantage of sequential over batch processing.

    Examples
    --------
    >>> sequential_advantage(10, 1)
    Fraction(7, 6)
    """
    _check(n, m)
    return Fr(1, 2) * m ** 3 - Fr(1, 2) * m ** 2 + m ** 2 * n - m * n + Fr(7, 6) * m


def advantage_from_totals(n, m):
    """``batch_total - sequential_total``; differs from the tabulated row by ``m^3 / 6``."""
    return batch_total(n, m) - sequential_total(n, m)


def sqrt_pu_flops(n, q, sqrt_cost=1):
    """Square-root partial update, propagation and update combined."""
    _check(n, q)
    return (Fr(5, 2) * n ** 3 + (q + Fr(15, 2)) * n ** 2 + (2 * sqrt_cost + 6) * n
            + 2 * sqrt_cost + 1)


def ud_pu_flops(n, q):
    """UD partial update, propagation and update combined."""
    _check(n, q)
    return 2 * n ** 3 + (q + 4) * n ** 2 + (q + 1) * n + 2


def ud_update_flops(n):
    """Conventional UD scalar measurement update.

    Examples
    --------
    >>> ud_update_flops(3)
    Fraction(18, 1)
    """
    _check(n)
    return Fr(3, 2) * n ** 2 + Fr(3, 2) * n


def ud_pu_update_flops(n):
    """UD partial-update scalar measurement update."""
    _check(n)
    return Fr(1, 2) * n ** 3 + Fr(7, 2) * n ** 2 + n + 2


def ud_pu_extra_flops(n):
    """Extra cost of the UD partial update over the conventional UD update."""
    _check(n)
    return Fr(1, 2) * n ** 3 + 2 * n ** 2 - Fr(1, 2) * n + 2


@dataclass(frozen=True)
class FlopsReport:
    n: int
    m: int
    q: int
    batch: Fr
    sequential: Fr
    advantage: Fr
    advantage_from_totals: Fr
    sqrt_pu: Fr
    ud_pu: Fr
    ud_update: Fr
    ud_pu_update: Fr
    ud_pu_extra: Fr

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def flops_report(n, m, q):
    """Evaluate every table formula for one ``(n, m, q)``."""
    _check(n, m, q)
    return FlopsReport(
        n=n, m=m, q=q,
        batch=batch_total(n, m),
        sequential=sequential_total(n, m),
        advantage=sequential_advantage(n, m),
        advantage_from_totals=advantage_from_totals(n, m),
        sqrt_pu=sqrt_pu_flops(n, q),
        ud_pu=ud_pu_flops(n, q),
        ud_update=ud_update_flops(n),
        ud_pu_update=ud_pu_update_flops(n),
        ud_pu_extra=ud_pu_extra_flops(n),
    )
