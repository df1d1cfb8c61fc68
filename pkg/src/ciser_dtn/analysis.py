"""Threshold and stability analysis of the CISER system.

State ordering is (S, E, I, C, R) throughout; the infected sub-vector used by
the next-generation construction is X = (E, I, C) and the message
propagation equilibrium (MPE) is (1, 0, 0, 0, 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelParams, StateVector


class AnalysisError(ArithmeticError):
    pass


class SingularV(AnalysisError):
    """The transfer matrix V has a zero on its diagonal."""


class DegenerateD(AnalysisError):
    """The endemic denominator D vanished (only possible with zero rates)."""


class NoEndemicEquilibrium(AnalysisError):
    """Requested an endemic quantity while R0 <= 1."""


@dataclass(frozen=True)
class NextGenMatrices:
    f: np.ndarray
    v: np.ndarray

    def product(self) -> np.ndarray:
        """F V^-1 computed without forming the inverse explicitly."""
        return np.linalg.solve(self.v.T, self.f.T).T


@dataclass(frozen=True)
class ReproductionNumber:
    closed_form: float
    spectral: float
    trace: float
    params: ModelParams

    @property
    def value(self) -> float:
        return self.closed_form


@dataclass(frozen=True)
class EndemicEquilibrium:
    s_bar: float
    e_bar: float
    i_bar: float
    c_bar: float
    r_bar: float
    d_constant: float
    r0: float

    def as_state(self) -> StateVector:
        return StateVector(self.s_bar, self.e_bar, self.i_bar, self.c_bar, self.r_bar)

    def as_array(self) -> np.ndarray:
        return np.array([self.s_bar, self.e_bar, self.i_bar, self.c_bar, self.r_bar])


@dataclass(frozen=True)
class MpeStabilityReport:
    c: tuple[float, float, float, float]
    a1: float
    a2: float
    a3: float
    conditions: tuple[bool, bool, bool, bool]
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    verdict_closed: bool
    verdict_numeric: bool

    @property
    def closed_label(self) -> str:
        return "stable" if self.verdict_closed else "unstable"

    @property
    def numeric_label(self) -> str:
        return "stable" if self.verdict_numeric else "unstable"


@dataclass(frozen=True)
class EndemicStabilityReport:
    conditions: tuple[bool, bool, bool, bool]
    values: tuple[float, float, float, float]

    @property
    def all_hold(self) -> bool:
        return all(self.conditions)


def _transfer_rates(p: ModelParams) -> tuple[float, float, float, float]:
    return (p.sigma + p.mu, p.gamma + p.mu, p.tau + p.mu, p.omega + p.mu)


def build_ngm(params: ModelParams) -> NextGenMatrices:
    """New-infection matrix F and transfer matrix V at the MPE, X = (E, I, C)."""
    c1, c2, c3, _ = _transfer_rates(params)
    if c1 == 0 or c2 == 0 or c3 == 0:
        raise SingularV(f"V diagonal ({c1}, {c2}, {c3}) has a zero entry")
    b, eps = params.beta, params.epsilon
    f = np.array([[0.0, b, eps * b], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    v = np.array(
        [
            [c1, 0.0, 0.0],
            [-params.sigma, c2, 0.0],
            [0.0, -params.rho * params.gamma, c3],
        ]
    )
    return NextGenMatrices(f=f, v=v)


def r0_closed_form(params: ModelParams) -> float:
    c1, c2, c3, _ = _transfer_rates(params)
    if c1 == 0 or c2 == 0 or c3 == 0:
        raise SingularV("R0 undefined with a zero exit rate")
    p = params
    return p.beta * p.sigma / (c1 * c2) * (1.0 + p.epsilon * p.rho * p.gamma / c3)


def r0(params: ModelParams) -> ReproductionNumber:
    """Basic reproduction number by closed form and by spectral radius of F V^-1.

    F V^-1 has rank one, so its trace is a third estimate of the same value.
    """
    ngm = build_ngm(params)
    k = ngm.product()
    spectral = float(np.max(np.abs(np.linalg.eigvals(k))))
    return ReproductionNumber(
        closed_form=r0_closed_form(params),
        spectral=spectral,
        trace=float(np.trace(k)),
        params=params,
    )


def d_constant(params: ModelParams) -> float:
    s, g, t, w, m, rho = (
        params.sigma,
        params.gamma,
        params.tau,
        params.omega,
        params.mu,
        params.rho,
    )
    return (s + m) * (g + m) * (t + m) + w * (g + m) * (t + m) + w * s * (t + m) + w * s * rho * g


def endemic_equilibrium(params: ModelParams) -> EndemicEquilibrium | None:
    """Endemic point of the recruitment-balanced system, or None when R0 <= 1.

    Solves the steady state of the system whose S-equation carries the
    constant inflow mu, with R eliminated through S+E+I+C+R = 1.
    """
    rn = r0_closed_form(params)
    if not rn > 1.0:
        return None
    d = d_constant(params)
    if d == 0:
        raise DegenerateD("D = 0")
    p = params
    excess = 1.0 - 1.0 / rn
    # factor is (tau + mu); (sigma + mu) leaves a nonzero S-balance residual
    i_bar = p.sigma * (p.tau + p.mu) * (p.omega + p.mu) * excess / d
    e_bar = (p.gamma + p.mu) / p.sigma * i_bar
    c_bar = p.rho * p.gamma / (p.tau + p.mu) * i_bar
    s_bar = 1.0 / rn
    r_bar = 1.0 - (s_bar + e_bar + i_bar + c_bar)
    return EndemicEquilibrium(
        s_bar=s_bar,
        e_bar=e_bar,
        i_bar=i_bar,
        c_bar=c_bar,
        r_bar=r_bar,
        d_constant=d,
        r0=rn,
    )


def equilibrium_residuals(params: ModelParams, point: EndemicEquilibrium) -> np.ndarray:
    """Residuals of the four steady-state balances for S, E, I and C."""
    p = params
    s, e, i, c, r = point.as_array()
    infection = (p.beta * i + p.epsilon * p.beta * c) * s
    return np.array(
        [
            p.mu - infection - p.mu * s + p.omega * r,
            infection - (p.sigma + p.mu) * e,
            p.sigma * e - (p.gamma + p.mu) * i,
            p.rho * p.gamma * i - (p.tau + p.mu) * c,
        ]
    )


def mpe_jacobian(params: ModelParams) -> np.ndarray:
    """Jacobian of the reduced (S, E, I, C) system at the MPE, R = 1 - S - E - I - C."""
    p = params
    c1, c2, c3, c4 = _transfer_rates(p)
    b, eb = p.beta, p.epsilon * p.beta
    return np.array(
        [
            [-c4, -p.omega, -(b + p.omega), -(eb + p.omega)],
            [0.0, -c1, b, eb],
            [0.0, p.sigma, -c2, 0.0],
            [0.0, 0.0, p.rho * p.gamma, -c3],
        ]
    )


def mpe_stability(params: ModelParams) -> MpeStabilityReport:
    """Routh-Hurwitz verdict on the cubic factor, cross-checked by eigenvalues."""
    c1, c2, c3, c4 = _transfer_rates(params)
    rn = r0_closed_form(params)
    a1 = c1 + c2 + c3
    a2 = c1 * c2 + c1 * c3 + c2 * c3 - params.sigma * params.beta
    a3 = c1 * c2 * c3 * (1.0 - rn)
    conditions = (a1 > 0, a2 > 0, a3 > 0, a1 * a2 - a3 > 0)
    jac = mpe_jacobian(params)
    eig = np.linalg.eigvals(jac)
    return MpeStabilityReport(
        c=(c1, c2, c3, c4),
        a1=a1,
        a2=a2,
        a3=a3,
        conditions=conditions,
        jacobian=jac,
        eigenvalues=eig,
        # the fourth root is -c4, outside the cubic
        verdict_closed=all(conditions) and c4 > 0,
        verdict_numeric=bool(np.all(eig.real < 0)),
    )


def endemic_stability_conditions(
    params: ModelParams, eq: EndemicEquilibrium
) -> EndemicStabilityReport:
    """Evaluate the four sufficient Lyapunov conditions at the endemic point.

    Failing a condition does not imply instability.
    """
    p = params
    b, eb, w = p.beta, p.epsilon * p.beta, p.omega
    s, i, c = eq.s_bar, eq.i_bar, eq.c_bar
    values = (
        b * (s + i) + eb * (s + 2.0 * c) + 2.0 * w - p.mu,
        w - b * (s + i) - eb * (s + c) + p.sigma + 2.0 * p.mu,
        w - p.sigma + 2.0 * (p.gamma + p.mu) - p.rho * p.gamma,
        w - p.rho * p.gamma + 2.0 * (p.tau + p.mu),
    )
    return EndemicStabilityReport(
        conditions=tuple(v >= 0 for v in values),  # type: ignore[arg-type]
        values=values,
    )


def threshold_residual(params: ModelParams) -> float:
    """|S_bar * R0 - 1| at the endemic point."""
    eq = endemic_equilibrium(params)
    if eq is None:
        raise NoEndemicEquilibrium(f"R0 = {r0_closed_form(params)!r} <= 1")
    return abs(eq.s_bar * eq.r0 - 1.0)


def random_params(rng: np.random.Generator, time_unit: str = "day") -> ModelParams:
    """One draw from the sweep domain: rates log-uniform on [1e-5, 10],
    epsilon uniform on (0, 1), rho uniform on [0, 1].

    Draw order: beta, sigma, gamma, tau, omega, mu, epsilon, rho.
    """
    rates = 10.0 ** rng.uniform(-5.0, 1.0, size=6)
    eps = rng.uniform(0.0, 1.0)
    while eps == 0.0:
        eps = rng.uniform(0.0, 1.0)
    return ModelParams(
        beta=float(rates[0]),
        sigma=float(rates[1]),
        gamma=float(rates[2]),
        tau=float(rates[3]),
        omega=float(rates[4]),
        mu=float(rates[5]),
        epsilon=float(eps),
        rho=float(rng.uniform(0.0, 1.0)),
        time_unit=time_unit,
    )


ANALYZE_COLUMNS = (
    "beta",
    "epsilon",
    "sigma",
    "gamma",
    "tau",
    "omega",
    "mu",
    "rho",
    "R0_closed",
    "R0_spectral",
    "mpe_stable",
    "has_endemic",
    "S_bar",
    "E_bar",
    "I_bar",
    "C_bar",
    "R_bar",
    "endemic_cond1",
    "endemic_cond2",
    "endemic_cond3",
    "endemic_cond4",
)


def analyze(params: ModelParams) -> dict[str, object]:
    """One row of the ``analyze`` report; endemic cells are None when absent."""
    rn = r0(params)
    stab = mpe_stability(params)
    eq = endemic_equilibrium(params)
    row: dict[str, object] = dict(params.as_dict())
    row.update(
        R0_closed=rn.closed_form,
        R0_spectral=rn.spectral,
        mpe_stable=stab.verdict_closed,
        has_endemic=eq is not None,
    )
    if eq is None:
        row.update({k: None for k in ANALYZE_COLUMNS[12:]})
    else:
        cond = endemic_stability_conditions(params, eq)
        row.update(
            S_bar=eq.s_bar,
            E_bar=eq.e_bar,
            I_bar=eq.i_bar,
            C_bar=eq.c_bar,
            R_bar=eq.r_bar,
            endemic_cond1=cond.conditions[0],
            endemic_cond2=cond.conditions[1],
            endemic_cond3=cond.conditions[2],
            endemic_cond4=cond.conditions[3],
        )
    return row
