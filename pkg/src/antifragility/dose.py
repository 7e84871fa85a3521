"""Dose-parameterized matrix families ``u -> A(u)`` and the JSON model file."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import (
    DoseOutOfDomain,
    InputError,
    ModelValidationError,
    NotMetzler,
    NotMetzlerAtDose,
    ParseError,
)
from .metzler import MetzlerMatrix, validate_metzler


def _frozen(a) -> NDArray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


class DoseFamily:
    """Base class for a scalar-dose family of Metzler matrices."""

    kind: str = ""
    dose_domain: tuple[float, float]

    @property
    def n(self) -> int:
        raise NotImplementedError

    def _matrix(self, u: float) -> NDArray:
        raise NotImplementedError

    def check_dose(self, u: float) -> float:
        lo, hi = self.dose_domain
        u = float(u)
        if not (lo <= u <= hi):
            raise DoseOutOfDomain(f"dose u={u!r} outside dose_domain [{lo!r}, {hi!r}]")
        return u

    def matrix_at(self, u: float) -> MetzlerMatrix:
        u = self.check_dose(u)
        a = self._matrix(u)
        try:
            return validate_metzler(a)
        except NotMetzler as exc:
            raise NotMetzlerAtDose(exc.index, exc.value, u) from None

    def lipschitz(self) -> float:
        """Bound L with ``||A(u) - A(u')||_inf <= L |u - u'|``."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


def _domain(dose_domain) -> tuple[float, float]:
    lo, hi = (float(x) for x in dose_domain)
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
        raise ModelValidationError(f"dose_domain must be a finite interval [u_min, u_max], got {[lo, hi]}")
    return lo, hi


def _square(a, name: str) -> NDArray:
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ModelValidationError(f"{name} must be a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ModelValidationError(f"{name} has non-finite entries")
    return a


@dataclass(frozen=True, eq=False)
class AffineFamily(DoseFamily):
    """``A(u) = A0 + u * A1``."""

    A0: NDArray
    A1: NDArray
    dose_domain: tuple[float, float]
    kind = "affine"

    def __post_init__(self):
        A0 = _square(self.A0, "A0")
        A1 = _square(self.A1, "A1")
        if A0.shape != A1.shape:
            raise ModelValidationError(f"A0 {A0.shape} and A1 {A1.shape} differ in shape")
        object.__setattr__(self, "A0", _frozen(A0))
        object.__setattr__(self, "A1", _frozen(A1))
        lo, hi = _domain(self.dose_domain)
        object.__setattr__(self, "dose_domain", (lo, hi))
        f_lo, f_hi = self.feasible_interval()
        if lo < f_lo or hi > f_hi:
            raise ModelValidationError(
                f"affine family is Metzler only for u in [{f_lo!r}, {f_hi!r}], "
                f"declared dose_domain [{lo!r}, {hi!r}] exceeds it"
            )

    @property
    def n(self) -> int:
        return self.A0.shape[0]

    def feasible_interval(self) -> tuple[float, float]:
        """Doses for which every off-diagonal entry of A0 + u*A1 is >= 0."""
        lo, hi = -math.inf, math.inf
        n = self.n
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                a0, a1 = self.A0[i, j], self.A1[i, j]
                if a1 > 0:
                    lo = max(lo, -a0 / a1)
                elif a1 < 0:
                    hi = min(hi, -a0 / a1)
                elif a0 < 0:
                    return math.nan, math.nan
        if lo > hi:
            return math.nan, math.nan
        return lo, hi

    def _matrix(self, u):
        return self.A0 + u * self.A1

    def lipschitz(self):
        return float(np.max(np.abs(self.A1).sum(axis=1)))

    def to_dict(self):
        return {"type": "affine", "A0": self.A0.tolist(), "A1": self.A1.tolist()}


@dataclass(frozen=True)
class DipFamily(DoseFamily):
    """Two-type model: type 1 switches to type 2 at rate ``a*u``, back at
    rate ``a*k``; ``b`` and ``d`` are the net growth rates of the two types.

    ``A(u) = [[b - a*u, a*k], [a*u, d - a*k]]``
    """

    a: float
    b: float
    d: float
    k: float
    dose_domain: tuple[float, float] = (0.0, 10.0)
    kind = "dip"

    def __post_init__(self):
        for name in ("a", "b", "d", "k"):
            val = float(getattr(self, name))
            if not math.isfinite(val):
                raise ModelValidationError(f"dip parameter {name} must be finite")
            object.__setattr__(self, name, val)
        if self.a <= 0:
            raise ModelValidationError(f"dip parameter a must be > 0, got {self.a!r}")
        if self.k <= 0:
            raise ModelValidationError(f"dip parameter k must be > 0, got {self.k!r}")
        lo, hi = _domain(self.dose_domain)
        if lo < 0:
            raise ModelValidationError(f"dip dose_domain must be nonnegative (a*u is a rate), got u_min={lo!r}")
        object.__setattr__(self, "dose_domain", (lo, hi))

    @property
    def n(self):
        return 2

    def _matrix(self, u):
        a, b, d, k = self.a, self.b, self.d, self.k
        return np.array([[b - a * u, a * k], [a * u, d - a * k]])

    def lipschitz(self):
        return 2.0 * self.a

    def to_dict(self):
        return {"type": "dip", "a": self.a, "b": self.b, "d": self.d, "k": self.k}


@dataclass(frozen=True, eq=False)
class TabulatedFamily(DoseFamily):
    """Matrices given at a strictly increasing list of doses, linearly
    interpolated entrywise in between (convex combinations of Metzler
    matrices stay Metzler)."""

    doses: NDArray
    matrices: NDArray
    dose_domain: tuple[float, float] | None = None
    kind = "tabulated"

    def __post_init__(self):
        doses = np.array(self.doses, dtype=float)
        if doses.ndim != 1 or doses.size < 1:
            raise ModelValidationError("tabulated doses must be a non-empty list")
        if not np.all(np.isfinite(doses)) or np.any(doses < 0):
            raise ModelValidationError("tabulated doses must be finite and nonnegative")
        if np.any(np.diff(doses) <= 0):
            raise ModelValidationError("tabulated doses must be strictly increasing")
        mats = [_square(m, f"matrices[{i}]") for i, m in enumerate(self.matrices)]
        if len(mats) != doses.size:
            raise ModelValidationError(f"{doses.size} doses but {len(mats)} matrices")
        if len({m.shape for m in mats}) != 1:
            raise ModelValidationError("tabulated matrices must all have the same shape")
        for i, m in enumerate(mats):
            try:
                validate_metzler(m)
            except NotMetzler as exc:
                raise ModelValidationError(f"matrices[{i}]: {exc}") from None
        object.__setattr__(self, "doses", _frozen(doses))
        object.__setattr__(self, "matrices", _frozen(np.stack(mats)))
        dom = (doses[0], doses[-1]) if self.dose_domain is None else self.dose_domain
        lo, hi = _domain(dom)
        if lo < doses[0] or hi > doses[-1]:
            raise ModelValidationError(
                f"dose_domain [{lo!r}, {hi!r}] extends beyond the tabulated doses "
                f"[{doses[0]!r}, {doses[-1]!r}]"
            )
        object.__setattr__(self, "dose_domain", (lo, hi))

    @property
    def n(self):
        return self.matrices.shape[1]

    def _matrix(self, u):
        doses = self.doses
        i = int(np.searchsorted(doses, u, side="right")) - 1
        if i >= doses.size - 1:
            return self.matrices[-1].copy()
        if u == doses[i]:
            return self.matrices[i].copy()
        t = (u - doses[i]) / (doses[i + 1] - doses[i])
        return (1.0 - t) * self.matrices[i] + t * self.matrices[i + 1]

    def lipschitz(self):
        if self.doses.size < 2:
            return 0.0
        slopes = np.diff(self.matrices, axis=0) / np.diff(self.doses)[:, None, None]
        return float(max(np.max(np.abs(s).sum(axis=1)) for s in slopes))

    def to_dict(self):
        return {"type": "tabulated", "doses": self.doses.tolist(), "matrices": self.matrices.tolist()}


def matrix_at(family: DoseFamily, u: float) -> MetzlerMatrix:
    """``A(u)`` for a dose inside the family's domain."""
    return family.matrix_at(u)


@dataclass(frozen=True, eq=False)
class SystemModel:
    """A dose family together with a positive readout row ``c`` and a
    positive initial state ``x0``."""

    family: DoseFamily
    c: NDArray = field(default=None)
    x0: NDArray = field(default=None)

    def __post_init__(self):
        n = self.family.n
        c = np.ones(n) if self.c is None else np.array(self.c, dtype=float)
        x0 = np.ones(n) if self.x0 is None else np.array(self.x0, dtype=float)
        for name, vec in (("c", c), ("x0", x0)):
            if vec.shape != (n,):
                raise ModelValidationError(f"{name} must have length n={n}, got shape {vec.shape}")
            if not np.all(np.isfinite(vec)) or np.any(vec <= 0):
                raise ModelValidationError(f"{name} must be entrywise positive")
        object.__setattr__(self, "c", _frozen(c))
        object.__setattr__(self, "x0", _frozen(x0))

    @property
    def n(self) -> int:
        return self.family.n

    @property
    def dose_domain(self) -> tuple[float, float]:
        return self.family.dose_domain

    def matrix_at(self, u: float) -> MetzlerMatrix:
        return self.family.matrix_at(u)

    def with_x0(self, x0: ArrayLike) -> "SystemModel":
        return SystemModel(self.family, self.c, x0)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "family": self.family.to_dict(),
            "c": self.c.tolist(),
            "x0": self.x0.tolist(),
            "dose_domain": list(self.dose_domain),
        }

    def __eq__(self, other):
        if not isinstance(other, SystemModel):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def _require(obj: dict, key: str, where: str = "model"):
    if key not in obj:
        raise ModelValidationError(f"{where} is missing required field '{key}'")
    return obj[key]


def _number(x, name: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ModelValidationError(f"{name} must be a number, got {x!r}")
    return float(x)


def _build_family(entry: dict, dose_domain) -> DoseFamily:
    if not isinstance(entry, dict):
        raise ModelValidationError("family must be a JSON object")
    kind = _require(entry, "type", "family")
    try:
        if kind == "affine":
            return AffineFamily(_require(entry, "A0", "family"), _require(entry, "A1", "family"), dose_domain)
        if kind == "dip":
            params = {p: _number(_require(entry, p, "family"), p) for p in ("a", "b", "d", "k")}
            return DipFamily(dose_domain=dose_domain, **params)
        if kind == "tabulated":
            return TabulatedFamily(_require(entry, "doses", "family"), _require(entry, "matrices", "family"), dose_domain)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise ModelValidationError(f"{kind} family: {exc}") from None
    raise ModelValidationError(f"unknown family type {kind!r} (expected affine, dip or tabulated)")


def model_from_dict(obj: dict) -> SystemModel:
    if not isinstance(obj, dict):
        raise ModelValidationError("model file must contain a JSON object")
    n = _require(obj, "n")
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ModelValidationError(f"n must be a positive integer, got {n!r}")
    dom = _require(obj, "dose_domain")
    if not isinstance(dom, list) or len(dom) != 2:
        raise ModelValidationError("dose_domain must be a two-element list [u_min, u_max]")
    dom = (_number(dom[0], "dose_domain[0]"), _number(dom[1], "dose_domain[1]"))
    family = _build_family(_require(obj, "family"), dom)
    if family.n != n:
        raise ModelValidationError(f"declared n={n} but family matrices are {family.n}x{family.n}")
    try:
        c = np.array(_require(obj, "c"), dtype=float)
        x0 = np.array(_require(obj, "x0"), dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelValidationError(f"c and x0 must be numeric lists: {exc}") from None
    return SystemModel(family, c, x0)


def load_model(text: str | bytes) -> SystemModel:
    """Parse and fully validate a model file.

    Raises:
        ParseError: malformed JSON (carries line/column).
        ModelValidationError: well-formed JSON violating a model invariant.
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"model file is not UTF-8: {exc.reason} at byte {exc.start}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno) from None
    return model_from_dict(obj)


def dump_model(model: SystemModel) -> str:
    return json.dumps(model.to_dict(), indent=2)
