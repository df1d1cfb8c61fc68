"""CISER and SIR compartment dynamics with a fixed-step RK4 integrator.

The CISER system tracks population fractions in five classes:

    dS/dt = -(beta*I + eps*beta*C)*S - mu*S + omega*R   (+ mu with recruitment)
    dE/dt =  (beta*I + eps*beta*C)*S - (sigma + mu)*E
    dI/dt =  sigma*E - (gamma + mu)*I
    dC/dt =  rho*gamma*I - (tau + mu)*C
    dR/dt =  (1 - rho)*gamma*I + tau*C - (omega + mu)*R

Without recruitment the compartments leak mass to node death at rate mu;
``integrate`` accumulates that leak in a separate dead fraction so that
compartments plus dead stay constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Literal, Sequence

import numpy as np

System = Literal["ciser", "sir"]

CLAMP_TOLERANCE = 1e-12


class IntegrationError(ArithmeticError):
    """Base class for integrator failures."""


class NonFiniteState(IntegrationError):
    """A component became NaN or infinite, usually because the step is too large."""


class NegativeState(IntegrationError):
    """A component went negative beyond round-off."""


@dataclass(frozen=True)
class ModelParams:
    """Rates and probabilities of the CISER model.

    Rates are per ``time_unit``. ``epsilon`` and ``rho`` are dimensionless.
    """

    beta: float
    epsilon: float
    sigma: float
    gamma: float
    tau: float
    omega: float
    mu: float
    rho: float
    time_unit: str = "day"

    def __post_init__(self) -> None:
        for name in ("beta", "sigma", "gamma", "tau", "omega", "mu"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be a finite non-negative rate, got {value!r}")
        # closed interval: the limiting cases eps=0 and eps=1 are useful checks
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon!r}")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho!r}")

    def replace(self, **changes: float) -> ModelParams:
        values = {k: getattr(self, k) for k in PARAM_NAMES}
        values["time_unit"] = self.time_unit
        values.update(changes)
        return ModelParams(**values)

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in PARAM_NAMES}


PARAM_NAMES = ("beta", "epsilon", "sigma", "gamma", "tau", "omega", "mu", "rho")


@dataclass(frozen=True)
class StateVector:
    """Population fractions (S, E, I, C, R) at one instant."""

    s: float
    e: float
    i: float
    c: float
    r: float

    def __post_init__(self) -> None:
        for name, value in zip("seicr", self.as_tuple()):
            if not math.isfinite(value):
                raise ValueError(f"{name} is not finite: {value!r}")
            if value < -CLAMP_TOLERANCE or value > 1.0 + CLAMP_TOLERANCE:
                raise ValueError(f"{name}={value!r} outside [0, 1]")

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.s, self.e, self.i, self.c, self.r)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=float)

    def total(self) -> float:
        return math.fsum(self.as_tuple())

    def is_normalized(self, tol: float = 1e-9) -> bool:
        return abs(self.total() - 1.0) <= tol


@dataclass(frozen=True)
class SirState:
    """Population fractions (S, I, R) of the SIR baseline."""

    s: float
    i: float
    r: float

    def __post_init__(self) -> None:
        for name, value in zip("sir", self.as_tuple()):
            if not math.isfinite(value):
                raise ValueError(f"{name} is not finite: {value!r}")
            if value < -CLAMP_TOLERANCE or value > 1.0 + CLAMP_TOLERANCE:
                raise ValueError(f"{name}={value!r} outside [0, 1]")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.s, self.i, self.r)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=float)


BASELINE = ModelParams(
    beta=1.0335e-5,
    epsilon=0.084,
    sigma=0.0714,
    gamma=0.0714,
    tau=5.4795e-4,
    omega=0.0588,
    mu=6.8493e-5,
    rho=0.95,
    time_unit="day",
)

BASELINE_INITIAL = StateVector(s=0.86, e=0.01, i=0.02, c=0.03, r=0.08)
BASELINE_INTERVAL = (0.0, 730.0)


def force_of_infection(state: StateVector, params: ModelParams) -> float:
    """Rate at which a susceptible node acquires a copy: beta*(I + eps*C)."""
    return params.beta * (state.i + params.epsilon * state.c)


def _ciser_field(y: Sequence[float], p: ModelParams, recruitment: bool) -> tuple[float, ...]:
    s, e, i, c, r = y
    infection = (p.beta * i + p.epsilon * p.beta * c) * s
    ds = -infection - p.mu * s + p.omega * r
    if recruitment:
        ds += p.mu
    de = infection - (p.sigma + p.mu) * e
    di = p.sigma * e - (p.gamma + p.mu) * i
    dc = p.rho * p.gamma * i - (p.tau + p.mu) * c
    dr = (1.0 - p.rho) * p.gamma * i + p.tau * c - (p.omega + p.mu) * r
    return (ds, de, di, dc, dr)


def _sir_field(y: Sequence[float], p: ModelParams) -> tuple[float, ...]:
    s, i, _ = y
    infection = p.beta * i * s
    return (-infection, infection - p.gamma * i, p.gamma * i)


def ciser_rhs(
    state: StateVector | Sequence[float], params: ModelParams, *, recruitment: bool = False
) -> np.ndarray:
    """Time derivative (dS, dE, dI, dC, dR) of the CISER system.

    With ``recruitment=True`` a constant inflow ``mu`` enters S, which is the
    convention the endemic-equilibrium system is written in.
    """
    y = state.as_tuple() if isinstance(state, StateVector) else tuple(state)
    return np.array(_ciser_field(y, params, recruitment))


def sir_rhs(state: SirState | Sequence[float], params: ModelParams) -> np.ndarray:
    """Mass-action SIR derivative (dS, dI, dR); only beta and gamma are used."""
    y = state.as_tuple() if isinstance(state, SirState) else tuple(state)
    return np.array(_sir_field(y, params))


def dead_population(t: float, d0: float, params: ModelParams) -> float:
    """Linear dead-fraction predictor D(t) = D0 + mu*t."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return d0 + params.mu * t


@dataclass(frozen=True)
class Trajectory:
    """Integrated solution on a fixed grid.

    ``states`` has one row per entry of ``times``; columns follow
    ``labels``. ``dead`` is the accumulated death fraction (constant for SIR).
    """

    system: System
    times: np.ndarray
    states: np.ndarray
    params: ModelParams
    step: float
    dead: np.ndarray
    recruitment: bool = False
    labels: tuple[str, ...] = field(default=("S", "E", "I", "C", "R"))

    def __len__(self) -> int:
        return len(self.times)

    def column(self, label: str) -> np.ndarray:
        return self.states[:, self.labels.index(label)]

    def state(self, k: int) -> StateVector | SirState:
        row = self.states[k]
        if self.system == "ciser":
            return StateVector(*row)
        return SirState(*row)

    @property
    def final(self) -> StateVector | SirState:
        return self.state(len(self.times) - 1)


def time_grid(t0: float, t1: float, step: float) -> np.ndarray:
    """Grid t0, t0+step, ... ending exactly on t1 (last step possibly shorter)."""
    if not t1 > t0:
        raise ValueError("t1 must exceed t0")
    if not step > 0:
        raise ValueError("step must be positive")
    q = (t1 - t0) / step
    n = round(q)
    if abs(q - n) > 1e-9 * max(1.0, q):
        n = math.ceil(q)
    times = t0 + np.arange(n + 1, dtype=float) * step
    times[-1] = t1
    return times


def integrate(
    system: System,
    initial: StateVector | SirState,
    params: ModelParams,
    t0: float,
    t1: float,
    step: float = 0.1,
    *,
    recruitment: bool = False,
    d0: float = 0.0,
) -> Trajectory:
    """Classical RK4 on a fixed grid from ``t0`` to ``t1``.

    Components in [-1e-12, 0) are clamped to zero after each step; anything
    more negative raises :class:`NegativeState`, and NaN/inf raises
    :class:`NonFiniteState`.
    """
    if system == "ciser":
        if not isinstance(initial, StateVector):
            raise TypeError("ciser integration needs a StateVector")
        labels: tuple[str, ...] = ("S", "E", "I", "C", "R")

        def f(y):
            return _ciser_field(y, params, recruitment)

        track_dead = not recruitment
    elif system == "sir":
        if not isinstance(initial, SirState):
            raise TypeError("sir integration needs a SirState")
        labels = ("S", "I", "R")

        def f(y):
            return _sir_field(y, params)

        track_dead = False
    else:
        raise ValueError(f"unknown system {system!r}")

    y0 = initial.as_array()
    if y0.sum() > 1.0 + 1e-9:
        raise ValueError("initial fractions sum above 1")

    times = time_grid(t0, t1, step)
    n = len(times)
    dim = len(y0)
    out = np.empty((n, dim))
    dead = np.empty(n)
    out[0] = y0
    dead[0] = d0
    mu = params.mu if track_dead else 0.0

    y = y0
    d = d0
    for k in range(n - 1):
        h = times[k + 1] - times[k]
        k1 = np.array(f(y))
        k2 = np.array(f(y + 0.5 * h * k1))
        k3 = np.array(f(y + 0.5 * h * k2))
        k4 = np.array(f(y + h * k3))
        # dead fraction grows at mu * (mass of the stage states), integrated
        # with the same RK4 weights so the linear invariant is preserved
        if mu:
            m1 = y.sum()
            m2 = m1 + 0.5 * h * k1.sum()
            m3 = m1 + 0.5 * h * k2.sum()
            m4 = m1 + h * k3.sum()
            d = d + h * mu * (m1 + 2.0 * m2 + 2.0 * m3 + m4) / 6.0
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise NonFiniteState(f"non-finite state at t={times[k + 1]!r}: {y!r}")
        low = y.min()
        if low < 0.0:
            if low < -CLAMP_TOLERANCE:
                raise NegativeState(f"component {low!r} < 0 at t={times[k + 1]!r}")
            y = np.maximum(y, 0.0)
        out[k + 1] = y
        dead[k + 1] = d

    return Trajectory(
        system=system,
        times=times,
        states=out,
        params=params,
        step=step,
        dead=dead,
        recruitment=recruitment,
        labels=labels,
    )


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_trajectory_csv(
    traj: Trajectory, fh: IO[str], header_lines: Iterable[str] = ()
) -> None:
    """Write ``t,S,E,I,C,R`` (or ``t,S,I,R``) rows at 17 significant digits."""
    for line in header_lines:
        fh.write(f"# {line}\n")
    fh.write(",".join(("t",) + traj.labels) + "\n")
    for t, row in zip(traj.times, traj.states):
        fh.write(",".join([_fmt(t)] + [_fmt(v) for v in row]) + "\n")


def read_trajectory_csv(fh: IO[str]) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Parse a trajectory CSV; returns times and a column mapping."""
    header: list[str] | None = None
    rows: list[list[float]] = []
    for lineno, raw in enumerate(fh, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if header is None:
            header = [h.strip() for h in line.split(",")]
            if header[0] != "t":
                raise ValueError(f"line {lineno}: first column must be 't'")
            continue
        fields = line.split(",")
        if len(fields) != len(header):
            raise ValueError(f"line {lineno}: expected {len(header)} fields")
        rows.append([float(x) for x in fields])
    if header is None or not rows:
        raise ValueError("trajectory CSV has no data")
    data = np.array(rows)
    return data[:, 0], {name: data[:, j] for j, name in enumerate(header[1:], 1)}


@dataclass(frozen=True)
class ParamsFile:
    """Contents of a ``key = value`` parameter file."""

    params: ModelParams
    initial: StateVector


def parse_params(lines: Iterable[str], source: str = "<params>") -> ParamsFile:
    """Read model rates, optional ``time_unit`` and optional ``initial = S,E,I,C,R``.

    Missing rate keys fall back to the 730-day numerical-analysis defaults;
    unknown keys are errors.
    """
    values: dict[str, object] = {}
    initial = BASELINE_INITIAL
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value'")
        key, text = (part.strip() for part in line.split("=", 1))
        try:
            if key in PARAM_NAMES:
                values[key] = float(text)
            elif key == "time_unit":
                values[key] = text
            elif key == "initial":
                parts = [float(p) for p in text.split(",")]
                if len(parts) != 5:
                    raise ValueError("initial needs five fractions S,E,I,C,R")
                initial = StateVector(*parts)
            else:
                raise ValueError(f"unknown key {key!r}")
        except ValueError as exc:
            raise ValueError(f"{source}:{lineno}: {exc}") from None
    return ParamsFile(params=BASELINE.replace(**values), initial=initial)  # type: ignore[arg-type]


def load_params(path: str) -> ParamsFile:
    with open(path, encoding="utf-8") as fh:
        return parse_params(fh, source=str(path))


BASELINE_FILE = ParamsFile(params=BASELINE, initial=BASELINE_INITIAL)
