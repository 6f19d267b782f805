"""Log-barrier FTRL on true log losses and the sequence generator that hurts it.

The player keeps the full returns history (true losses are not quadratic)
and each round plays the barrier-FTRL argmin.  The adversary walks the
player through a fixed list of boundary targets: for every target t_i,
repetition k and layer s it steers the player onto the pulled-in point
t_i^(s) = c_s t_i + (1-c_s) c using small "movement" returns whose
projected norm never exceeds T^{-1/2}, then fires the paired return
o_i^(s) that is (nearly) orthogonal to the target.  Steering is gradient
cancellation: a movement return is chosen parallel to the projected
gradient of the accumulated objective at the target and scaled so the new
gradient either shrinks by the largest amount a movement return allows or
vanishes outright; "the player sits at the target" is exactly
||Pi grad F(target)|| <= 1e-12.

Per-round stability terms ||grad_Pi f_t(x_t)||^2 in the inverse Hessian
norm of the accumulated objective (losses through round t plus barrier)
both lower- and upper-bound the player's regret, which is what the
diagnostics here measure.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

import numpy as np

from .geometry import PiProjection, log_loss, uniform_portfolio
from .solver import minimize_simplex_history

TARGET_GRAD_TOL = 1e-12


class InfeasibleMovementError(RuntimeError):
    """A movement return left the simplex; surfaced rather than clipped."""


# -- target sequence ----------------------------------------------------------

def build_target_sequence_exact(d):
    """All 2^d - 2 (target, outcome) pairs in exact rationals.

    Targets enumerate, for k = 1..d-1 in increasing k and lexicographic
    support order within each k, the uniform distributions on k-subsets;
    the outcome is the uniform distribution on the complementary support.
    """
    if not 2 <= d <= 12:
        raise ValueError("target construction supported for 2 <= d <= 12")
    pairs = []
    for k in range(1, d):
        for support in combinations(range(d), k):
            t = tuple(Fraction(1, k) if i in support else Fraction(0) for i in range(d))
            o = tuple(Fraction(0) if i in support else Fraction(1, d - k) for i in range(d))
            pairs.append((t, o))
    return pairs


def build_target_sequence(d):
    return [(np.array(t, dtype=float), np.array(o, dtype=float))
            for t, o in build_target_sequence_exact(d)]


def validate_target_sequence_exact(pairs, d):
    """Exact-rational validity: <t_i, o_i> = 0 and <t_i, o_j> >= 1/d^2 for j < i."""
    bound = Fraction(1, d * d)
    for i, (t_i, o_i) in enumerate(pairs):
        if sum(a * b for a, b in zip(t_i, o_i)) != 0:
            return False, f"<t_{i}, o_{i}> != 0"
        for j in range(i):
            ip = sum(a * b for a, b in zip(t_i, pairs[j][1]))
            if ip < bound:
                return False, f"<t_{i}, o_{j}> = {ip} < 1/d^2"
    return True, ""


@dataclass
class AdversaryPlan:
    """Targets, layer scalings and horizon bookkeeping for the bad sequence."""

    d: int
    alpha: float
    T: int
    targets: list
    targets_exact: list
    layer_count: int
    scales: np.ndarray

    @classmethod
    def build(cls, d, T, alpha):
        if not 0.0 < alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        layer_count = int(math.floor((alpha / 3.0) * math.log2(T)))
        scales = 1.0 - 2.0 ** np.arange(layer_count + 1) * T ** (-alpha)
        if scales.min() <= 0.0 or scales.max() >= 1.0:
            raise ValueError("layer scalings left (0, 1); horizon too small for alpha")
        pairs = build_target_sequence(d)
        exact = build_target_sequence_exact(d)
        ok, msg = validate_target_sequence_exact(exact, d)
        if not ok:
            raise ValueError(f"invalid target sequence: {msg}")
        return cls(d=d, alpha=alpha, T=T, targets=pairs, targets_exact=exact,
                   layer_count=layer_count, scales=scales)

    @property
    def repetitions(self):
        return max(1, int(math.floor(self.T ** self.alpha)))

    def export(self, path):
        """One target/outcome pair per line as exact rationals, pipe separated."""
        with open(path, "w") as fh:
            fh.write(f"# d={self.d} alpha={self.alpha!r} T={self.T} layers={self.layer_count}\n")
            for t, o in self.targets_exact:
                fh.write(",".join(str(v) for v in t) + "|" + ",".join(str(v) for v in o) + "\n")


def pull_to_center(x, s, plan):
    """x^(s) = c_s x + (1 - c_s) c; layer s in 0..layer_count."""
    if not 0 <= s <= plan.layer_count:
        raise ValueError(f"layer {s} outside 0..{plan.layer_count}")
    c_s = plan.scales[s]
    return c_s * np.asarray(x, dtype=float) + (1.0 - c_s) / plan.d


# -- the player ---------------------------------------------------------------

def lbftrl_play(history, eta, warm_start=None, tol=1e-10, d=None):
    """Barrier-FTRL argmin of the accumulated true log losses."""
    hist = np.asarray(history, dtype=float)
    if hist.size == 0:
        if d is None:
            raise ValueError("dimension needed for an empty history")
        return uniform_portfolio(d)
    if hist.ndim == 1:
        hist = hist.reshape(1, -1)
    return minimize_simplex_history(hist, 1.0 / eta, warm_start=warm_start, tol=tol).minimizer


def grad_pi_objective(x, history, eta, proj):
    """Projected gradient of the accumulated objective (losses + barrier) at x."""
    g = -1.0 / (eta * np.asarray(x, dtype=float))
    hist = np.asarray(history, dtype=float)
    if hist.size:
        if hist.ndim == 1:
            hist = hist.reshape(1, -1)
        g = g - hist.T @ (1.0 / (hist @ x))
    return proj.project(g)


def assemble_pi_hessian(x, history, eta, proj):
    """Projected Hessian sum_s (Pi r_s)(Pi r_s)^T / <x, r_s>^2 + eta^{-1} barrier part."""
    x = np.asarray(x, dtype=float)
    U = proj.basis
    H = (1.0 / eta) * (U / x**2) @ U.T
    hist = np.asarray(history, dtype=float)
    if hist.size:
        if hist.ndim == 1:
            hist = hist.reshape(1, -1)
        PR = hist @ U.T
        ips = hist @ x
        H = H + (PR / ips[:, None] ** 2).T @ PR
    return H


def stability_term(grad_pi, hessian_pi):
    """||g||^2 in the inverse-Hessian norm; the Hessian is PD thanks to the barrier."""
    sol = np.linalg.solve(hessian_pi, grad_pi)
    return float(grad_pi @ sol)


@dataclass(frozen=True)
class StabilityRecord:
    t: int
    grad_pi: np.ndarray
    hessian_pi: np.ndarray
    term: float


# -- adversarial sequence generation ------------------------------------------

def move_to_x(target, grad_pi, T, proj):
    """One movement return steering the player toward ``target``.

    The raw projected gradient g is rescaled by
    min(T^{-1/2}/||g||, 1/(d max(1 - <g, Pi target>, 0))) and lifted back to
    the simplex; the first cap keeps ||Pi r|| <= T^{-1/2}, the second makes
    the post-return gradient at the target vanish exactly when it binds (an
    overshooting factor is impossible because the min never exceeds it).  A
    zero denominator means the finishing cap is inactive and the norm cap
    binds.
    """
    g = np.asarray(grad_pi, dtype=float)
    d = proj.d
    norm = float(np.linalg.norm(g))
    if norm == 0.0:
        r, _ = proj.lift(np.zeros_like(g))
        return r
    cap_norm = T ** -0.5 / norm
    denom = d * max(1.0 - float(g @ proj.project(target)), 0.0)
    cap_finish = math.inf if denom == 0.0 else 1.0 / denom
    r, inside = proj.lift(min(cap_norm, cap_finish) * g)
    if not inside:
        raise InfeasibleMovementError(f"movement return left the simplex (min entry {r.min()})")
    return r


@dataclass
class AdversaryRunResult:
    records: list
    stability: list
    returns: np.ndarray
    plays: np.ndarray
    movement_flags: np.ndarray
    truncated: bool
    completed_visits: int
    eta: float

    @property
    def losses(self):
        return np.array([rec.loss for rec in self.records])

    @property
    def terms(self):
        return np.array([rec.term for rec in self.stability])


@dataclass(frozen=True)
class LbftrlRoundRecord:
    t: int
    loss: float
    is_movement: bool
    visit: tuple  # (target index, repetition, layer) or None for movement rounds


class _PlayerLoop:
    """Shared per-round bookkeeping: play, suffer, record stability."""

    def __init__(self, d, eta, T, tol):
        self.proj = PiProjection(d)
        self.eta = eta
        self.T = T
        self.tol = tol
        self.history = np.empty((T, d))
        self.plays = np.empty((T, d))
        self.n = 0
        self.x = uniform_portfolio(d)
        self.records = []
        self.stability = []
        self.movement_flags = []

    def round(self, r, is_movement, visit):
        t = self.n + 1
        x = lbftrl_play(self.history[: self.n], self.eta, warm_start=self.x, tol=self.tol,
                        d=self.proj.d)
        self.x = x
        self.plays[self.n] = x
        loss = log_loss(x, r)
        self.history[self.n] = r
        self.n += 1
        grad = self.proj.project(-r / float(np.dot(x, r)))
        hess = assemble_pi_hessian(x, self.history[: self.n], self.eta, self.proj)
        self.stability.append(StabilityRecord(t=t, grad_pi=grad, hessian_pi=hess,
                                              term=stability_term(grad, hess)))
        self.records.append(LbftrlRoundRecord(t=t, loss=loss, is_movement=is_movement, visit=visit))
        self.movement_flags.append(is_movement)


def generate_and_run(plan, eta, T=None, tol=1e-10):
    """Interleave movement returns and target outcomes against a live player.

    Visits iterate targets in plan order, repetitions inside targets and
    layers innermost.  Generation stops at the horizon with ``truncated``
    set; nothing wraps around.
    """
    T = plan.T if T is None else T
    loop = _PlayerLoop(plan.d, eta, T, tol)
    truncated = False
    completed = 0
    for i, (tgt, out) in enumerate(plan.targets):
        for k in range(plan.repetitions):
            for s in range(plan.layer_count + 1):
                tgt_s = pull_to_center(tgt, s, plan)
                while True:
                    if loop.n >= T:
                        truncated = True
                        break
                    g = grad_pi_objective(tgt_s, loop.history[: loop.n], eta, loop.proj)
                    if float(np.linalg.norm(g)) <= TARGET_GRAD_TOL:
                        break
                    loop.round(move_to_x(tgt_s, g, T, loop.proj), True, None)
                if truncated or loop.n >= T:
                    truncated = truncated or loop.n >= T
                    break
                loop.round(pull_to_center(out, s, plan), False, (i, k, s))
                completed += 1
            if truncated:
                break
        if truncated:
            break
    return AdversaryRunResult(
        records=loop.records,
        stability=loop.stability,
        returns=loop.history[: loop.n].copy(),
        plays=loop.plays[: loop.n].copy(),
        movement_flags=np.array(loop.movement_flags, dtype=bool),
        truncated=truncated,
        completed_visits=completed,
        eta=eta,
    )


def run_lbftrl(returns, eta, tol=1e-10):
    """Run the plain player over a fixed returns sequence, recording stability."""
    R = np.asarray(returns, dtype=float)
    loop = _PlayerLoop(R.shape[1], eta, R.shape[0], tol)
    for r in R:
        loop.round(r, False, None)
    return AdversaryRunResult(
        records=loop.records,
        stability=loop.stability,
        returns=R.copy(),
        plays=loop.plays[: loop.n].copy(),
        movement_flags=np.array(loop.movement_flags, dtype=bool),
        truncated=False,
        completed_visits=0,
        eta=eta,
    )


def regret_vs_next_iterate(result, tol=1e-10):
    """Cumulative loss minus the loss of x_{T+1}, the post-horizon FTRL iterate."""
    hist = result.returns
    x_next = lbftrl_play(hist, result.eta, warm_start=result.plays[-1], tol=tol, d=hist.shape[1])
    comparator = float(-np.log(hist @ x_next).sum())
    return float(result.losses.sum()) - comparator, x_next
