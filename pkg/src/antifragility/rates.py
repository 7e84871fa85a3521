"""Logarithmic rates of positive linear systems and what their convexity
says about pulsed versus uniform dosing."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .dose import SystemModel
from .errors import AllReducible, DrugBudgetMismatch, GridTooSmall, InputError, Reducible
from .metzler import dominant_eigenvalue, is_irreducible, perron_eigenpair
from .simulation import Protocol, simulate, total_drug

CONV_REL = 1e-8
CMP_REL = 1e-8
DEFAULT_GRID_POINTS = 64


def log_rate(model: SystemModel, u: float) -> float:
    """Asymptotic log growth rate of ``y = c x`` at constant dose ``u``.

    For an irreducible ``A(u)`` this is its Frobenius eigenvalue,
    independent of ``c`` and ``x0``.

    Raises:
        Reducible: ``A(u)`` is reducible; ``exc.dominant`` still carries the
            spectral abscissa.
    """
    A = model.matrix_at(u)
    if not is_irreducible(A):
        raise Reducible(f"log_rate: A(u) is reducible at u={u!r}", dominant_eigenvalue(A))
    return perron_eigenpair(A).lambda_F


def rate_or_dominant(model: SystemModel, u: float) -> tuple[float, bool]:
    """``(rate, irreducible)``; reducible doses fall back to the dense
    spectral abscissa."""
    A = model.matrix_at(u)
    if is_irreducible(A):
        return perron_eigenpair(A).lambda_F, True
    return dominant_eigenvalue(A), False


def sequential_rate(model: SystemModel, u1: float, u2: float, alpha: float) -> float:
    """Rate of applying ``u1`` for a fraction ``alpha`` of a long horizon and
    ``u2`` for the rest: ``alpha * rho(u1) + (1 - alpha) * rho(u2)``."""
    if not 0 <= alpha <= 1:
        raise InputError(f"alpha must lie in [0, 1], got {alpha!r}")
    return alpha * log_rate(model, u1) + (1 - alpha) * log_rate(model, u2)


def estimate_sequential_rate(
    model: SystemModel,
    u1: float,
    u2: float,
    alpha: float,
    T: float,
    tail_fraction: float = 0.2,
    horizons: int = 5,
) -> float:
    """Trajectory estimate of the sequential rate.

    The single-switch protocol (``u1`` for ``alpha t``, then ``u2`` for
    ``(1 - alpha) t``) is simulated for several horizons ``t`` in the last
    ``tail_fraction`` of ``[0, T]`` and the least-squares slope of
    ``ln y(t)`` against ``t`` is returned. Unlike the tail slope of a single
    trajectory this sees both doses, and unlike the end-point rate it needs
    no knowledge of the asymptotic amplitude.
    """
    if not 0 < tail_fraction <= 1:
        raise InputError(f"tail_fraction must lie in (0, 1], got {tail_fraction!r}")
    if horizons < 2:
        raise InputError(f"need at least 2 horizons, got {horizons}")
    ts = np.linspace((1 - tail_fraction) * T, T, horizons)
    if ts[0] <= 0:
        ts = ts[1:]
    ly = np.array([simulate(model, Protocol.sequential(u1, u2, alpha, t), 1).log_y[-1] for t in ts])
    tc = ts - ts.mean()
    return float(np.dot(tc, ly - ly.mean()) / np.dot(tc, tc))


@dataclass(frozen=True, eq=False)
class RateProfile:
    doses: np.ndarray
    rates: np.ndarray
    # same length as doses; NaN at the ends and wherever a reducible dose
    # enters the stencil
    second_differences: np.ndarray
    classification: str
    irreducible_flags: np.ndarray
    tolerance: float
    sign_changes: list[tuple[float, float]] = field(default_factory=list)

    def rows(self):
        for u, r, s, f in zip(self.doses, self.rates, self.second_differences, self.irreducible_flags):
            yield float(u), float(r), float(s), bool(f)

    def to_dict(self) -> dict:
        return {
            "classification": self.classification,
            "tolerance": self.tolerance,
            "sign_changes": [list(iv) for iv in self.sign_changes],
            "doses": self.doses.tolist(),
            "rates": self.rates.tolist(),
            "second_differences": [None if math.isnan(s) else s for s in self.second_differences.tolist()],
            "irreducible": self.irreducible_flags.tolist(),
        }


def classify_second_differences(sd: np.ndarray, tol: float) -> str:
    sd = sd[np.isfinite(sd)]
    convex = bool(np.all(sd >= -tol))
    concave = bool(np.all(sd <= tol))
    if convex and concave:
        return "linear"
    if convex:
        return "convex"
    if concave:
        return "concave"
    return "mixed"


def _sign_changes(doses: np.ndarray, sd: np.ndarray, tol: float) -> list[tuple[float, float]]:
    out = []
    last_sign, last_i = 0, None
    for i, s in enumerate(sd):
        if not math.isfinite(s) or abs(s) <= tol:
            continue
        sign = 1 if s > 0 else -1
        if last_sign and sign != last_sign:
            out.append((float(doses[last_i]), float(doses[i])))
        last_sign, last_i = sign, i
    return out


def make_grid(u_min: float, u_max: float, count: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    if count < 5:
        raise GridTooSmall(f"dose grid needs at least 5 points, got {count}")
    if not u_max > u_min:
        raise InputError(f"dose grid needs u_max > u_min, got [{u_min!r}, {u_max!r}]")
    return np.linspace(u_min, u_max, count)


def sweep(model: SystemModel, grid: Sequence[float]) -> RateProfile:
    """Rates over a uniform dose grid and the convexity class of ``u -> rho(u)``.

    Second differences ``(rho[i-1] - 2 rho[i] + rho[i+1]) / h**2`` are
    compared against ``CONV_REL * max|rho|``. Reducible doses get the dense
    spectral abscissa, are flagged, and take no part in the classification.
    """
    doses = np.asarray(grid, dtype=float)
    if doses.ndim != 1 or doses.size < 5:
        raise GridTooSmall(f"dose grid needs at least 5 points, got {doses.size}")
    steps = np.diff(doses)
    h = float(steps.mean())
    if not h > 0 or np.max(np.abs(steps - h)) > 1e-9 * max(abs(doses[0]), abs(doses[-1]), h):
        raise InputError("dose grid must be ascending with uniform spacing")
    for u in (doses[0], doses[-1]):
        model.family.check_dose(u)

    rates = np.empty(doses.size)
    flags = np.empty(doses.size, dtype=bool)
    for i, u in enumerate(doses):
        rates[i], flags[i] = rate_or_dominant(model, u)
    if not flags.any():
        raise AllReducible("sweep: A(u) is reducible at every grid dose")

    sd = np.full(doses.size, np.nan)
    ok = flags[:-2] & flags[1:-1] & flags[2:]
    inner = (rates[:-2] - 2 * rates[1:-1] + rates[2:]) / h**2
    sd[1:-1] = np.where(ok, inner, np.nan)
    if not ok.any():
        raise AllReducible("sweep: no three consecutive irreducible doses to assess convexity")

    tol = CONV_REL * float(np.max(np.abs(rates[flags])))
    return RateProfile(
        doses, rates, sd, classify_second_differences(sd, tol), flags, tol, _sign_changes(doses, sd, tol)
    )


@dataclass(frozen=True)
class AntifragilityReport:
    objective: str
    classification: str
    verdict: str
    sign_changes: list[tuple[float, float]]

    def to_dict(self):
        return asdict(self)


_VERDICTS = {
    ("reward_max", "convex"): "antifragile",
    ("reward_max", "concave"): "fragile",
    ("cost_min", "concave"): "antifragile",
    ("cost_min", "convex"): "fragile",
}


def classify_antifragility(profile: RateProfile, objective: str = "reward_max") -> AntifragilityReport:
    """Convex rate: antifragile for a maximizer (pulsing pays), fragile for a
    minimizer; concave rate: the reverse. Linear is neutral, mixed is
    indeterminate and reports where the curvature changes sign."""
    if objective not in ("reward_max", "cost_min"):
        raise InputError(f"objective must be 'reward_max' or 'cost_min', got {objective!r}")
    cls = profile.classification
    if cls == "linear":
        verdict = "neutral"
    elif cls == "mixed":
        verdict = "indeterminate"
    else:
        verdict = _VERDICTS[(objective, cls)]
    return AntifragilityReport(objective, cls, verdict, list(profile.sign_changes))


@dataclass(frozen=True)
class ProtocolComparison:
    """Pulsed ``(u, v)`` versus uniform ``w = (u+v)/2`` over ``N`` unit periods."""

    u: float
    v: float
    w: float
    N: int
    rho_u: float
    rho_v: float
    rho_w: float
    rho_bar: float
    irreducible: dict
    total_drug_pulsed: float
    total_drug_uniform: float
    log_y_pulsed: float
    log_y_uniform: float
    predicted_log_ratio: float
    measured_log_ratio: float
    relative_error: float
    gap: float
    verdict: str
    theorem_applies: bool

    def to_dict(self) -> dict:
        return asdict(self)


def compare_protocols(model: SystemModel, u: float, v: float, N: int, samples: int = 8) -> ProtocolComparison:
    """Simulate both arms and set the measured log-ratio
    ``ln y_pulsed(N) - ln y_uniform(N)`` against the predicted
    ``N (rho_bar - rho(w))``.

    A reducible endpoint (a drug holiday ``v = 0`` in the two-type model, for
    instance) is allowed: its rate comes from the dense spectrum and
    ``theorem_applies`` is false.
    """
    u, v = float(u), float(v)
    if u == v:
        raise InputError("compare_protocols: u and v must differ")
    if isinstance(N, bool) or int(N) != N or N < 1:
        raise InputError(f"compare_protocols: N must be a positive integer, got {N!r}")
    N = int(N)
    w = 0.5 * (u + v)
    for dose in (u, v, w):
        model.family.check_dose(dose)

    pulsed = Protocol.pulsed(u, v, N)
    uniform = Protocol.uniform(w, N)
    drug_p, drug_u = total_drug(pulsed), total_drug(uniform)
    if not math.isclose(drug_p, drug_u, rel_tol=1e-12, abs_tol=1e-12):
        raise DrugBudgetMismatch(f"compare_protocols: pulsed arm uses {drug_p!r}, uniform arm {drug_u!r}")

    (rho_u, ok_u), (rho_v, ok_v), (rho_w, ok_w) = (rate_or_dominant(model, x) for x in (u, v, w))
    gaps = [perron_eigenpair(model.matrix_at(x)).gap for x, ok in ((u, ok_u), (v, ok_v), (w, ok_w)) if ok]

    traj_p = simulate(model, pulsed, samples)
    traj_u = simulate(model, uniform, samples)
    ly_p, ly_u = float(traj_p.log_y[-1]), float(traj_u.log_y[-1])
    measured = ly_p - ly_u
    rho_bar = 0.5 * (rho_u + rho_v)
    predicted = N * (rho_bar - rho_w)
    rel = abs(measured - predicted) / abs(predicted) if predicted != 0 else math.inf

    tol = CMP_REL * N * (1.0 + max(abs(rho_u), abs(rho_v), abs(rho_w)))
    if measured > tol:
        verdict = "pulsed_superior_for_growth"
    elif measured < -tol:
        verdict = "uniform_superior_for_growth"
    else:
        verdict = "equivalent"

    return ProtocolComparison(
        u=u, v=v, w=w, N=N,
        rho_u=rho_u, rho_v=rho_v, rho_w=rho_w, rho_bar=rho_bar,
        irreducible={"u": ok_u, "v": ok_v, "w": ok_w},
        total_drug_pulsed=drug_p, total_drug_uniform=drug_u,
        log_y_pulsed=ly_p, log_y_uniform=ly_u,
        predicted_log_ratio=predicted, measured_log_ratio=measured, relative_error=rel,
        gap=min(gaps) if gaps else math.nan,
        verdict=verdict,
        theorem_applies=ok_u and ok_v and ok_w,
    )
