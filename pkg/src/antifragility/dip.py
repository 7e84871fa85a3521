"""Closed-form analysis of the two-type model
``A(u) = [[b - a u, a k], [a u, d - a k]]``.

The drug-induced proliferation (DIP) rate ``(b k + d u) / (k + u)`` is the
fast-exchange (``a -> inf``) limit of the Frobenius eigenvalue; the helpers
here measure how fast that limit is approached.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .errors import ComplexRoots, InputError, NegativeDiscriminant


def dip_rate(b: float, d: float, k: float, u: float) -> float:
    """``(b k + d u) / (k + u)``; equals ``b`` at zero dose and tends to ``d``
    as the dose grows."""
    if not k + u > 0:
        raise InputError(f"dip_rate needs k + u > 0, got k={k!r}, u={u!r}")
    return (b * k + d * u) / (k + u)


@dataclass(frozen=True)
class DipClosedForm:
    """Trace/determinant data of ``A(u)`` and the substituted quantities
    ``x = -T``, ``p``, ``q`` with ``T**2 - 4 D == x**2 - p x + q``."""

    a: float
    b: float
    d: float
    k: float
    u: float
    T: float
    D: float
    x: float
    p: float
    q: float
    discriminant: float
    lambda_max: float

    @property
    def lambda_substituted(self) -> float:
        """``(-x + sqrt(x^2 - p x + q)) / 2`` in conjugate (cancellation-free) form."""
        r = math.sqrt(self.x * self.x - self.p * self.x + self.q)
        if self.x > 0:
            return 0.5 * (self.p * self.x - self.q) / (-self.x - r)
        return 0.5 * (-self.x + r)


def closed_form_eigenvalue(a: float, b: float, d: float, k: float, u: float) -> DipClosedForm:
    """Exact dominant eigenvalue of the 2x2 two-type matrix.

    The discriminant is formed as ``(A11 - A22)^2 + 4 A12 A21`` (a sum of
    nonnegative terms for a Metzler matrix) instead of ``T^2 - 4D``, and when
    ``T < 0`` the root ``(T + sqrt(disc)) / 2`` is taken as ``2D / (T -
    sqrt(disc))`` so large ``a`` does not cancel it away.

    Raises:
        ComplexRoots: the discriminant is negative (only possible for
            parameters outside the model's domain, e.g. ``u < 0``).
    """
    if not a > 0:
        raise InputError(f"closed_form_eigenvalue needs a > 0, got {a!r}")
    if not k > 0:
        raise InputError(f"closed_form_eigenvalue needs k > 0, got {k!r}")
    a11, a12, a21, a22 = b - a * u, a * k, a * u, d - a * k
    T = a11 + a22
    D = b * d - a * (b * k + d * u)
    disc = (a11 - a22) ** 2 + 4.0 * a12 * a21
    if disc < 0:
        raise ComplexRoots(f"two-type matrix has complex eigenvalues (discriminant {disc!r}); check u >= 0")
    r = math.sqrt(disc)
    lam = 0.5 * (T + r) if T >= 0 else 2.0 * D / (T - r)
    ku = k + u
    x = a * ku - (b + d)
    p = -4.0 * (b * k + d * u) / ku
    q = 4.0 * (k * b * b + u * d * d) / ku
    return DipClosedForm(a, b, d, k, u, T, D, x, p, q, disc, lam)


def dip_limit_error(a: float, b: float, d: float, k: float, u: float) -> float:
    """Distance between the exact rate and its fast-exchange limit."""
    return abs(closed_form_eigenvalue(a, b, d, k, u).lambda_max - dip_rate(b, d, k, u))


def dip_convergence_table(b: float, d: float, k: float, u: float, a_values: Iterable[float]) -> list[dict]:
    rows = []
    limit = dip_rate(b, d, k, u)
    for a in a_values:
        lam = closed_form_eigenvalue(a, b, d, k, u).lambda_max
        rows.append({"a": float(a), "lambda_max": lam, "dip_rate": limit, "abs_error": abs(lam - limit)})
    return rows


def conjugate_limit_check(p: float, q: float, x_values: Iterable[float]) -> list[tuple[float, float, float]]:
    """Evaluate ``-x + sqrt(x^2 - p x + q)`` through the conjugate form
    ``(p x - q) / (-x - sqrt(x^2 - p x + q))`` and its distance to ``-p/2``.

    Returns ``(x, value, |value + p/2|)`` per point.
    """
    if not (p > 0 and q > 0):
        raise InputError(f"conjugate_limit_check needs p, q > 0, got p={p!r}, q={q!r}")
    out = []
    for x in x_values:
        x = float(x)
        rad = x * x - p * x + q
        if not rad > 0:
            raise NegativeDiscriminant(f"x^2 - p x + q = {rad!r} <= 0 at x={x!r}")
        val = (p * x - q) / (-x - math.sqrt(rad))
        out.append((x, val, abs(val + 0.5 * p)))
    return out


def naive_limit_value(p: float, q: float, x: float) -> float:
    """``-x + sqrt(x^2 - p x + q)`` evaluated as written (cancels badly for
    large ``x``)."""
    return -x + math.sqrt(x * x - p * x + q)
