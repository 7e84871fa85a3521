"""Exact simulation of piecewise-constant dosing protocols.

Within a segment of constant dose the state advances by the matrix
exponential, so no step-size control is involved. States are kept
normalized (largest entry 1) with the accumulated log-scale carried
separately, which lets long horizons with a large growth rate run without
overflow; ``log_y`` is always exact.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .dose import SystemModel
from .errors import (
    InputError,
    InsufficientSamples,
    NonpositiveOutput,
    Overflow,
)
from .metzler import is_irreducible, perron_eigenpair

# Pade [13/13] coefficients and the 1-norm thresholds below which the lower
# orders are accurate to double precision (Higham 2005).
_PADE = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0,
         670442572800.0, 33522128640.0, 1323241920.0, 40840800.0, 960960.0,
         16380.0, 182.0, 1.0),
}
_THETA = {3: 1.495585217958292e-2, 5: 2.539398330063230e-1, 7: 9.504178996162932e-1,
          9: 2.097847961257068e0, 13: 5.371920351148152e0}


def _pade_uv(A: NDArray, m: int) -> tuple[NDArray, NDArray]:
    c = _PADE[m]
    n = A.shape[0]
    ident = np.eye(n)
    A2 = A @ A
    if m == 13:
        A4 = A2 @ A2
        A6 = A2 @ A4
        U = A @ (A6 @ (c[13] * A6 + c[11] * A4 + c[9] * A2)
                 + c[7] * A6 + c[5] * A4 + c[3] * A2 + c[1] * ident)
        V = A6 @ (c[12] * A6 + c[10] * A4 + c[8] * A2) + c[6] * A6 + c[4] * A4 + c[2] * A2 + c[0] * ident
        return U, V
    powers = [ident, A2]
    for _ in range(2, (m + 1) // 2):
        powers.append(powers[-1] @ A2)
    U = sum(c[j] * powers[j // 2] for j in range(m, 0, -2))
    V = sum(c[j] * powers[j // 2] for j in range(m - 1, -1, -2))
    return A @ U, V


def matrix_exponential(A: ArrayLike, t: float = 1.0) -> NDArray[np.float64]:
    """``exp(A t)`` by scaling and squaring with a Pade kernel.

    The lowest Pade degree whose threshold covers ``||A t||_1`` is used;
    beyond the degree-13 threshold the argument is halved until it fits and
    the result squared back.

    Raises:
        Overflow: the result is not representable in double precision.
    """
    a = np.asarray(A, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InputError(f"matrix_exponential: expected a square matrix, got shape {a.shape}")
    if t < 0 or not math.isfinite(t):
        raise InputError(f"matrix_exponential: t must be finite and >= 0, got {t!r}")
    if not np.all(np.isfinite(a)):
        raise InputError("matrix_exponential: matrix has non-finite entries")
    X = a * t
    norm = float(np.max(np.abs(X).sum(axis=0))) if X.size else 0.0
    s = 0
    for m in (3, 5, 7, 9):
        if norm <= _THETA[m]:
            break
    else:
        m = 13
        if norm > _THETA[13]:
            s = max(0, math.ceil(math.log2(norm / _THETA[13])))
            X = X / 2.0**s
    U, V = _pade_uv(X, m)
    with np.errstate(over="ignore", invalid="ignore"):
        E = np.linalg.solve(V - U, V + U)
        for _ in range(s):
            E = E @ E
    if not np.all(np.isfinite(E)):
        est = float(np.max(np.linalg.eigvals(a).real)) * t
        raise Overflow(
            f"matrix_exponential: exp(A t) overflows (spectral abscissa * t ~ {est:.4g}); "
            "shorten the time step or rescale the horizon"
        )
    return E


@dataclass(frozen=True)
class Protocol:
    """Piecewise-constant dose schedule: ``segments`` (dose, duration) pairs
    applied in order, the whole period repeated ``repeat`` times."""

    segments: tuple[tuple[float, float], ...]
    repeat: int = 1
    label: str = "custom"

    def __post_init__(self):
        segs = tuple((float(d), float(t)) for d, t in self.segments)
        if not segs:
            raise InputError("protocol needs at least one segment")
        for dose, dur in segs:
            if not (dur > 0 and math.isfinite(dur)):
                raise InputError(f"segment durations must be positive, got {dur!r}")
            if not math.isfinite(dose):
                raise InputError(f"segment dose must be finite, got {dose!r}")
        if isinstance(self.repeat, bool) or int(self.repeat) != self.repeat or self.repeat < 1:
            raise InputError(f"repeat must be a positive integer, got {self.repeat!r}")
        if self.label not in ("uniform", "pulsed", "custom"):
            raise InputError(f"unknown protocol label {self.label!r}")
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "repeat", int(self.repeat))

    @classmethod
    def uniform(cls, dose: float, N: int, period: float = 1.0) -> "Protocol":
        return cls(((dose, period),), N, "uniform")

    @classmethod
    def pulsed(cls, u: float, v: float, N: int, alpha: float = 0.5, period: float = 1.0) -> "Protocol":
        """Dose ``u`` for ``alpha`` of each period, then ``v`` for the rest."""
        if not 0 < alpha < 1:
            raise InputError(f"alpha must lie strictly between 0 and 1 for a pulsed protocol, got {alpha!r}")
        return cls(((u, alpha * period), (v, (1 - alpha) * period)), N, "pulsed")

    @classmethod
    def sequential(cls, u1: float, u2: float, alpha: float, T: float) -> "Protocol":
        """One switch: ``u1`` on ``[0, alpha T]``, ``u2`` on ``[alpha T, T]``."""
        if not 0 <= alpha <= 1:
            raise InputError(f"alpha must lie in [0, 1], got {alpha!r}")
        segs = [(u1, alpha * T), (u2, (1 - alpha) * T)]
        return cls(tuple(s for s in segs if s[1] > 0), 1, "custom")

    @property
    def period(self) -> float:
        return math.fsum(t for _, t in self.segments)

    @property
    def total_time(self) -> float:
        return self.repeat * self.period

    @property
    def doses(self) -> list[float]:
        return sorted({d for d, _ in self.segments})


def total_drug(protocol: Protocol) -> float:
    """Integral of the dose over the whole protocol."""
    return protocol.repeat * math.fsum(d * t for d, t in protocol.segments)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled solution of a simulated protocol.

    ``scaled_states[i] * exp(log_scale[i])`` is the state at ``times[i]``;
    ``log_y`` is the log of the output ``c x``. ``kappa``/``lambda_eff`` are
    the asymptotic amplitude and rate ``y(t) ~ exp(lambda_eff t) kappa``
    predicted from the Perron projections (``None`` when some dose is
    reducible); ``residuals`` is ``y exp(-lambda_eff t) - kappa`` and is only
    filled for constant-dose protocols, where it is the transient.
    """

    times: NDArray[np.float64]
    log_y: NDArray[np.float64]
    scaled_states: NDArray[np.float64] | None = None
    log_scale: NDArray[np.float64] | None = None
    log_kappa: float | None = None
    lambda_eff: float | None = None
    residuals: NDArray[np.float64] | None = None
    gap: float | None = None

    @classmethod
    def from_outputs(cls, times: ArrayLike, outputs: ArrayLike) -> "Trajectory":
        """Wrap externally sampled outputs (no states attached)."""
        y = np.asarray(outputs, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            log_y = np.where(y > 0, np.log(np.where(y > 0, y, 1.0)), np.nan)
        return cls(np.asarray(times, dtype=float), log_y)

    @property
    def end_time(self) -> float:
        return float(self.times[-1])

    @property
    def outputs(self) -> NDArray[np.float64]:
        with np.errstate(over="ignore"):
            return np.exp(self.log_y)

    @property
    def states(self) -> NDArray[np.float64]:
        if self.scaled_states is None:
            raise InputError("trajectory carries no states")
        with np.errstate(over="ignore", under="ignore"):
            return self.scaled_states * np.exp(self.log_scale)[:, None]

    @property
    def kappa(self) -> float | None:
        return None if self.log_kappa is None else math.exp(self.log_kappa)

    @property
    def log_offset(self) -> float:
        return 0.0 if self.log_scale is None else float(self.log_scale[-1])

    def sidecar(self) -> dict:
        return {"kappa": self.kappa, "lambda_F_eff": self.lambda_eff, "log_offset": self.log_offset}


def _shifted_propagator(A: NDArray, h: float) -> tuple[NDArray, float]:
    """``exp((A - sI) h)`` and the shift ``s`` (the spectral abscissa), so the
    propagator itself stays O(1) however fast the system grows."""
    s = float(np.max(np.linalg.eigvals(A).real))
    E = matrix_exponential(A - s * np.eye(A.shape[0]), h)
    # exp of a Metzler matrix is entrywise nonnegative; drop rounding noise
    np.maximum(E, 0.0, out=E)
    return E, s


def _asymptotics(model: SystemModel, protocol: Protocol) -> tuple[float | None, float | None, float | None]:
    """Perron-projection prediction (log kappa, lambda_eff, min gap)."""
    data = {}
    for dose in protocol.doses:
        A = model.matrix_at(dose)
        if not is_irreducible(A):
            return None, None, None
        data[dose] = perron_eigenpair(A)
    lam = math.fsum(t * data[d].lambda_F for d, t in protocol.segments) / protocol.period
    # kappa = c P(d_last) ... P(d_1) x0 with P = v w^T, accumulated in logs
    log_k = 0.0
    x = model.x0
    for _ in range(protocol.repeat):
        for dose, _t in protocol.segments:
            pd = data[dose]
            log_k += math.log(float(pd.w_F @ x))
            x = pd.v_F
    log_k += math.log(float(model.c @ x))
    return log_k, lam, min(data[d].gap for d in data)


def simulate(model: SystemModel, protocol: Protocol, samples_per_segment: int = 8) -> Trajectory:
    """Propagate ``x0`` through the protocol.

    Each segment is split into ``samples_per_segment + 1`` equal steps, so it
    is sampled at both boundaries and ``samples_per_segment`` interior points.

    Raises:
        DoseOutOfDomain: a segment dose lies outside the model's domain.
        Overflow: a single-step propagator is not representable.
    """
    if isinstance(samples_per_segment, bool) or int(samples_per_segment) < 1:
        raise InputError(f"samples_per_segment must be a positive integer, got {samples_per_segment!r}")
    steps = int(samples_per_segment) + 1
    props = {}
    for dose, dur in protocol.segments:
        key = (dose, dur)
        if key not in props:
            A = model.matrix_at(dose).entries
            props[key] = _shifted_propagator(A, dur / steps)

    n_samples = 1 + protocol.repeat * len(protocol.segments) * steps
    times = np.empty(n_samples)
    states = np.empty((n_samples, model.n))
    log_scale = np.empty(n_samples)

    x = np.array(model.x0, dtype=float)
    m = x.max()
    x /= m
    ls = math.log(m)
    times[0], states[0], log_scale[0] = 0.0, x, ls
    period = protocol.period
    k = 1
    for r in range(protocol.repeat):
        t0 = r * period
        for dose, dur in protocol.segments:
            E, s = props[(dose, dur)]
            h = dur / steps
            for j in range(1, steps + 1):
                x = E @ x
                m = x.max()
                if not (m > 0 and math.isfinite(m)):
                    raise Overflow(f"simulate: state left the representable range at t={t0 + j * h:.6g}")
                x /= m
                ls += s * h + math.log(m)
                times[k] = t0 + j * h
                states[k] = x
                log_scale[k] = ls
                k += 1
            t0 += dur
    log_y = np.log(states @ model.c) + log_scale

    log_kappa, lam, gap = _asymptotics(model, protocol)
    residuals = None
    if lam is not None and len(protocol.doses) == 1:
        with np.errstate(over="ignore"):
            residuals = np.exp(log_y - lam * times) - math.exp(log_kappa)
    return Trajectory(times, log_y, states, log_scale, log_kappa, lam, residuals, gap)


def estimate_log_rate(traj: Trajectory, tail_fraction: float = 0.5) -> float:
    """Least-squares slope of ``ln y`` against ``t`` over the last
    ``tail_fraction`` of the time span.

    Raises:
        InsufficientSamples: fewer than 3 samples in the window.
        NonpositiveOutput: some output in the window is not positive.
    """
    if not 0 < tail_fraction <= 1:
        raise InputError(f"tail_fraction must lie in (0, 1], got {tail_fraction!r}")
    t = traj.times
    T0, T1 = float(t[0]), float(t[-1])
    mask = t >= T1 - tail_fraction * (T1 - T0)
    if int(mask.sum()) < 3:
        raise InsufficientSamples(
            f"estimate_log_rate: {int(mask.sum())} samples in the tail window, need at least 3"
        )
    ly = traj.log_y[mask]
    if not np.all(np.isfinite(ly)):
        raise NonpositiveOutput("estimate_log_rate: output is zero, negative or non-finite in the tail window")
    tt = t[mask]
    tc = tt - tt.mean()
    return float(np.dot(tc, ly - ly.mean()) / np.dot(tc, tc))


def amplitude_corrected_rate(traj: Trajectory) -> float:
    """``(ln y(T) - ln kappa) / T``: the end-point rate with the asymptotic
    amplitude removed.

    Useful when the rate must be read off a protocol that is not stationary
    in its tail (a single switch between two doses), where the slope
    estimator would only see the last dose.
    """
    if traj.log_kappa is None:
        raise InputError("trajectory has no asymptotic amplitude (some dose is reducible)")
    ly = float(traj.log_y[-1])
    if not math.isfinite(ly):
        raise NonpositiveOutput("amplitude_corrected_rate: final output is not positive")
    return (ly - traj.log_kappa) / (traj.end_time - float(traj.times[0]))


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trajectory_csv(traj: Trajectory, fh: io.TextIOBase) -> None:
    """Rows ``t,y,log_y,x_1..x_n``; state columns hold actual (unscaled)
    values, which may be 0 or inf where the log-scale leaves double range;
    ``log_y`` is always exact."""
    n = 0 if traj.scaled_states is None else traj.scaled_states.shape[1]
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", "y", "log_y"] + [f"x_{i + 1}" for i in range(n)])
    states = traj.states if n else np.empty((traj.times.size, 0))
    y = traj.outputs
    for i in range(traj.times.size):
        w.writerow([_fmt(traj.times[i]), _fmt(y[i]), _fmt(traj.log_y[i])] + [_fmt(v) for v in states[i]])


def trajectory_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    write_trajectory_csv(traj, buf)
    return buf.getvalue()
