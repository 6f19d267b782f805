"""Epoch-structured FTRL over biased quadratic surrogates (the BISONS algorithm).

Each epoch runs two follow-the-regularized-leader solves per round on
accumulated quadratic objectives with the log barrier: the played point
minimizes the *biased* accumulation (surrogates minus the linear bias
term B <x, p_tau - p_{tau-1}>) and a reference comparator minimizes the
unbiased one.  The per-asset bias p records the worst inverse weight seen
in the epoch, p_tau,i = max(p_{tau-1,i}, 1/x_tau,i), and the epoch resets
once some coordinate of the comparator crosses the bias-scaled threshold

    2 (1 + 6 eta) beta * u_i * p_i >= 1,

boundary inclusive.  Resets discard all accumulated state, so memory stays
O(d^2) regardless of the horizon.

The first iterate of every epoch is uniform, so the implicit p_1 equals
p_0 = d*1 and the first round carries no bias increment.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import log_loss, normalize_returns, uniform_portfolio
from .solver import QuadraticObjective, minimize_simplex

ETA_CAP = 1.0 / 63.0
BETA_CAP = math.sqrt(2.0) - 1.0
_REL_SLACK = 1.0 + 1e-12


class ParameterError(ValueError):
    """Raised when algorithm parameters violate the admissible region."""


@dataclass(frozen=True)
class BisonsParams:
    d: int
    T: int
    B: float
    eta: float
    beta: float

    def validate(self):
        if self.d < 2:
            raise ParameterError("need at least 2 assets")
        if self.T < 110 * self.d * self.d:
            raise ParameterError(f"horizon too small: T >= 110*d^2 = {110 * self.d * self.d} required")
        if not 0.0 < self.beta <= BETA_CAP * _REL_SLACK:
            raise ParameterError(f"beta must lie in (0, sqrt(2)-1], got {self.beta}")
        cap = min(1.0 / (4.0 * self.B), self.beta / 4.0, ETA_CAP)
        if not 0.0 < self.eta <= cap * _REL_SLACK:
            raise ParameterError(f"eta must lie in (0, min(1/4B, beta/4, 1/63)] = (0, {cap}], got {self.eta}")
        if self.T < max(2 * self.d, 1.0 / self.beta):
            raise ParameterError(f"horizon too small: T >= max(2d, 1/beta) = {max(2 * self.d, 1.0 / self.beta)}")
        if self.B <= 0.0:
            raise ParameterError("bias scale B must be positive")
        return self

    @property
    def reset_factor(self):
        return 2.0 * (1.0 + 6.0 * self.eta) * self.beta


def default_params(d, T):
    """Parameter tuning giving the O(d^2 log^2 T) regret guarantee."""
    if T < 110 * d * d:
        raise ParameterError(f"T >= 110*d^2 = {110 * d * d} required, got {T}")
    B = (264.0 / 5.0) * d * math.log(T)
    return BisonsParams(d=d, T=T, B=B, eta=1.0 / (4.0 * B), beta=11.0 / (7.0 * B)).validate()


@dataclass
class BisonsEpochState:
    """Mutable per-epoch accumulators; reset wholesale on epoch boundaries."""

    e: int
    tau: int
    p: np.ndarray
    p_prev: np.ndarray
    biased: QuadraticObjective
    unbiased: QuadraticObjective
    x_cur: np.ndarray
    u_cur: np.ndarray
    last_solution: tuple = None
    last_iterations: tuple = None


def initial_state(params, epoch=1):
    d = params.d
    w = 1.0 / params.eta
    return BisonsEpochState(
        e=epoch,
        tau=1,
        p=np.full(d, float(d)),
        p_prev=np.full(d, float(d)),
        biased=QuadraticObjective.zeros(d, w),
        unbiased=QuadraticObjective.zeros(d, w),
        x_cur=uniform_portfolio(d),
        u_cur=uniform_portfolio(d),
    )


@dataclass(frozen=True)
class RoundRecord:
    t: int
    e: int
    tau: int
    loss: float
    reset_triggered: bool
    x_played: np.ndarray


def update_bias(p, x_next):
    """p'_i = max(p_i, 1/x_next_i); the bias never decreases within an epoch."""
    x_next = np.asarray(x_next, dtype=float)
    if x_next.min() <= 0.0:
        raise ValueError("bias update needs a strictly interior point")
    return np.maximum(p, 1.0 / x_next)


def check_reset(u_next, p_next, params):
    """True iff some coordinate satisfies 2(1+6eta)beta * u_i * p_i >= 1."""
    return bool((params.reset_factor * np.asarray(u_next) * np.asarray(p_next) >= 1.0).any())


def bisons_round(state, r_t, params, t=0, tol=1e-10):
    """Advance one round: suffer the loss, refresh both FTRL solutions, update the bias.

    ``r_t`` must already be normalized onto the simplex.  Returns the state
    to use next round (a fresh epoch state when the reset fired) and the
    round record.  The solved (x_next, u_next, p_next) triple is stashed on
    ``state.last_solution`` for monitoring.
    """
    x = state.x_cur
    r = np.asarray(r_t, dtype=float)
    loss = log_loss(x, r)
    g = -r / float(np.dot(x, r))
    m = float(np.dot(x, g))

    state.unbiased.add_surrogate(g, loss, m, params.beta)
    state.biased.add_surrogate(g, loss, m, params.beta)
    dp = state.p - state.p_prev
    if dp.any():
        state.biased.add_linear(-params.B * dp)

    rep_x = minimize_simplex(state.biased, warm_start=x, tol=tol)
    rep_u = minimize_simplex(state.unbiased, warm_start=state.u_cur, tol=tol)
    x_next, u_next = rep_x.minimizer, rep_u.minimizer
    p_next = update_bias(state.p, x_next)
    reset = check_reset(u_next, p_next, params)
    state.last_solution = (x_next, u_next, p_next)
    state.last_iterations = (rep_x.iterations, rep_u.iterations)

    record = RoundRecord(t=t, e=state.e, tau=state.tau, loss=loss, reset_triggered=reset, x_played=x)
    if reset:
        fresh = initial_state(params, epoch=state.e + 1)
        fresh.last_iterations = state.last_iterations
        return fresh, record
    state.tau += 1
    state.x_cur = x_next
    state.u_cur = u_next
    state.p_prev = state.p
    state.p = p_next
    return state, record


@dataclass
class StabilityMonitor:
    """Per-round checks of the stability guarantees; collects violations.

    Within an epoch and at tolerance ``tol``: successive plays stay within
    a (1+6 eta) ratio of each other, the bias grows by at most the same
    ratio, the comparator at most doubles, the bias dominates the inverse
    play, and the bias never exceeds T^2.
    """

    params: BisonsParams
    tol: float = 1e-8
    violations: list = field(default_factory=list)

    def observe(self, t, x_old, u_old, p_old, x_next, u_next, p_next):
        ratio = 1.0 + 6.0 * self.params.eta
        tol = self.tol
        if (x_old - ratio * x_next > tol).any() or (x_next - ratio * x_old > tol).any():
            self.violations.append(f"t={t}: play ratio outside 1+6eta")
        if (p_next - ratio * p_old > tol).any():
            self.violations.append(f"t={t}: bias grew faster than 1+6eta")
        if (u_next - 2.0 * u_old > tol).any():
            self.violations.append(f"t={t}: comparator more than doubled")
        if (1.0 / x_next - p_next > 1e-9).any():
            self.violations.append(f"t={t}: bias below inverse play")
        if (p_next > self.params.T**2 + tol).any():
            self.violations.append(f"t={t}: bias above T^2")


@dataclass
class RunResult:
    records: list
    states: list
    violations: list

    @property
    def losses(self):
        return np.array([rec.loss for rec in self.records])

    @property
    def reset_times(self):
        return [rec.t for rec in self.records if rec.reset_triggered]


def run_bisons(returns, params, tol=None, monitor=False, keep_states=False):
    """Run the algorithm over a returns sequence (normalized on ingestion)."""
    params.validate()
    if tol is None:
        tol = min(1e-10, params.T**-2)
    mon = StabilityMonitor(params) if monitor else None
    state = initial_state(params)
    records = []
    states = []
    for i, raw in enumerate(returns):
        if i >= params.T:
            raise ValueError(f"returns sequence longer than the horizon T={params.T}")
        r = normalize_returns(raw)
        x_old, u_old, p_old = state.x_cur, state.u_cur, state.p
        before = state
        state, rec = bisons_round(state, r, params, t=i + 1, tol=tol)
        records.append(rec)
        if mon is not None:
            mon.observe(i + 1, x_old, u_old, p_old, *before.last_solution)
        if keep_states:
            states.append(before.last_solution)
    return RunResult(records=records, states=states, violations=mon.violations if mon else [])
