"""Damped Newton minimization of barrier-regularized objectives.

Two domains are supported: the probability simplex with the log barrier
-sum(log x_i), and the trace-one PSD Hermitian matrices (spectraplex) with
the log-det barrier, handled in the real coordinates of
:func:`bisons.hermitian.vectorize_phi`.  Objectives are either accumulated
quadratics (:class:`QuadraticObjective`) or sums of true log losses over a
stored history.  All of these are self-concordant, so the Newton decrement
lambda certifies the optimality gap: iteration stops once lambda^2 <= tol
and the report carries that value as ``certified_gap``.

The simplex equality constraint is eliminated by dropping the last
coordinate; the spectraplex trace constraint is kept in the KKT system
with a scalar multiplier.  Steps are damped by Armijo backtracking
(slope 0.25, halving) and clipped so that 99% of the distance to the
boundary is never exceeded.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .hermitian import hermitian_basis, phi_dual, trace_slots, unvectorize_phi, vectorize_phi

DEFAULT_MAX_ITER = 200
_ARMIJO_SLOPE = 0.25
_ARMIJO_SHRINK = 0.5
_BOUNDARY_FRACTION = 0.99


def default_tol(T):
    """Solve accuracy used along a run with horizon T."""
    return min(1e-10, float(T) ** -2)


@dataclass
class QuadraticObjective:
    """Accumulated quadratic 0.5 x'Qx + l.x + c plus ``barrier_weight`` times the barrier.

    ``dim`` is d on the simplex and d^2 on the spectraplex (real
    coordinates).  Surrogate rounds enter through :meth:`add_surrogate`,
    linear bias terms through direct updates of ``lin``.
    """

    dim: int
    quad: np.ndarray
    lin: np.ndarray
    const: float
    barrier_weight: float

    @classmethod
    def zeros(cls, dim, barrier_weight):
        if barrier_weight <= 0.0:
            raise ValueError("barrier weight must be positive")
        return cls(dim, np.zeros((dim, dim)), np.zeros(dim), 0.0, float(barrier_weight))

    def copy(self):
        return QuadraticObjective(self.dim, self.quad.copy(), self.lin.copy(), self.const, self.barrier_weight)

    def add_surrogate(self, w, anchor_value, anchor_inner, beta):
        """Accumulate a + <x - x_t, g> + (beta/2) <x - x_t, g>^2.

        ``w`` is the coordinate vector of the anchor gradient g (the
        gradient itself on the simplex, its phi-dual on the spectraplex)
        and ``anchor_inner`` is <x_t, g>.
        """
        self.quad += beta * np.outer(w, w)
        self.lin += (1.0 - beta * anchor_inner) * w
        self.const += anchor_value - anchor_inner + 0.5 * beta * anchor_inner * anchor_inner

    def add_linear(self, w):
        self.lin += w

    def smooth_value(self, x):
        return 0.5 * float(x @ self.quad @ x) + float(self.lin @ x) + self.const

    def smooth_grad(self, x):
        return self.quad @ x + self.lin


@dataclass
class SolveReport:
    minimizer: np.ndarray
    objective_value: float
    certified_gap: float
    iterations: int
    values: list = field(default_factory=list, repr=False)


class SolverFailure(RuntimeError):
    """Non-convergence; carries the best iterate found."""

    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


# -- shared damped-Newton drivers --------------------------------------------

def _armijo(fval, x, f, step_dir, slope, s0):
    s = s0
    for _ in range(80):
        xn = x + s * step_dir
        fn = fval(xn)
        if fn <= f + _ARMIJO_SLOPE * s * slope:
            return xn, fn
        s *= _ARMIJO_SHRINK
    return None, None


def _newton_simplex(fval, fgh, x0, tol, max_iter, track_values):
    x = np.asarray(x0, dtype=float).copy()
    f, g, H = fgh(x)
    values = [f] if track_values else []
    lam2 = math.inf
    for it in range(max_iter):
        gz = g[:-1] - g[-1]
        Hz = H[:-1, :-1] - H[:-1, -1:] - H[-1:, :-1] + H[-1, -1]
        try:
            dz = np.linalg.solve(Hz, -gz)
        except np.linalg.LinAlgError as exc:
            raise SolverFailure(f"singular Newton system: {exc}", SolveReport(x, f, lam2, it, values)) from exc
        lam2 = float(-gz @ dz)
        if lam2 <= tol:
            return SolveReport(x, f, max(lam2, 0.0), it, values)
        dx = np.empty_like(x)
        dx[:-1] = dz
        dx[-1] = -dz.sum()
        neg = dx < 0.0
        s0 = 1.0
        if neg.any():
            s0 = min(1.0, _BOUNDARY_FRACTION * float(np.min(-x[neg] / dx[neg])))
        xn, fn = _armijo(fval, x, f, dx, float(g @ dx), s0)
        if xn is None:
            raise SolverFailure("line search stalled", SolveReport(x, f, lam2, it, values))
        x, f = xn, fn
        if track_values:
            values.append(f)
        g, H = fgh(x)[1:]
    raise SolverFailure(f"no convergence in {max_iter} iterations (decrement^2 {lam2:.3e})",
                        SolveReport(x, f, lam2, max_iter, values))


def _newton_spectraplex(fval, fgh, v0, d, tol, max_iter, track_values):
    n = d * d
    a = trace_slots(d)
    v = np.asarray(v0, dtype=float).copy()
    f, g, H = fgh(v)
    values = [f] if track_values else []
    K = np.zeros((n + 1, n + 1))
    rhs = np.zeros(n + 1)
    lam2 = math.inf
    for it in range(max_iter):
        K[:n, :n] = H
        K[:n, n] = a
        K[n, :n] = a
        rhs[:n] = -g
        rhs[n] = 1.0 - float(a @ v)
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError as exc:
            raise SolverFailure(f"singular KKT system: {exc}", SolveReport(v, f, lam2, it, values)) from exc
        dv = sol[:n]
        lam2 = float(dv @ H @ dv)
        if lam2 <= tol:
            return SolveReport(v, f, max(lam2, 0.0), it, values)
        X = unvectorize_phi(v, d)
        dX = unvectorize_phi(dv, d)
        L = np.linalg.cholesky(X)
        Li = np.linalg.inv(L)
        wmin = float(np.linalg.eigvalsh(Li @ dX @ Li.conj().T).min())
        s0 = 1.0 if wmin >= 0.0 else min(1.0, _BOUNDARY_FRACTION / (-wmin))
        vn, fn = _armijo(fval, v, f, dv, float(g @ dv), s0)
        if vn is None:
            raise SolverFailure("line search stalled", SolveReport(v, f, lam2, it, values))
        v, f = vn, fn
        if track_values:
            values.append(f)
        g, H = fgh(v)[1:]
    raise SolverFailure(f"no convergence in {max_iter} iterations (decrement^2 {lam2:.3e})",
                        SolveReport(v, f, lam2, max_iter, values))


# -- simplex frontends --------------------------------------------------------

def minimize_simplex(obj, warm_start=None, tol=1e-10, max_iter=DEFAULT_MAX_ITER, track_values=False):
    """Minimize a quadratic-plus-log-barrier objective over the simplex."""
    d = obj.dim
    Q, lin, c, w = obj.quad, obj.lin, obj.const, obj.barrier_weight
    x0 = np.full(d, 1.0 / d) if warm_start is None else np.asarray(warm_start, dtype=float)

    def fval(x):
        if x.min() <= 0.0:
            return math.inf
        return 0.5 * float(x @ Q @ x) + float(lin @ x) + c - w * float(np.log(x).sum())

    def fgh(x):
        g = Q @ x + lin - w / x
        H = Q + np.diag(w / (x * x))
        return fval(x), g, H

    return _newton_simplex(fval, fgh, x0, tol, max_iter, track_values)


def minimize_simplex_history(returns, barrier_weight, warm_start=None, tol=1e-10,
                             max_iter=DEFAULT_MAX_ITER, track_values=False):
    """Minimize sum_t -log<x, r_t> + barrier_weight * (-sum_i log x_i) over the simplex."""
    R = np.asarray(returns, dtype=float)
    if R.ndim == 1:
        R = R.reshape(1, -1)
    d = R.shape[1]
    w = float(barrier_weight)
    x0 = np.full(d, 1.0 / d) if warm_start is None else np.asarray(warm_start, dtype=float)

    def fval(x):
        if x.min() <= 0.0:
            return math.inf
        ips = R @ x
        if ips.size and ips.min() <= 0.0:
            return math.inf
        return -float(np.log(ips).sum()) - w * float(np.log(x).sum())

    def fgh(x):
        ips = R @ x
        inv = 1.0 / ips
        g = -(R.T @ inv) - w / x
        H = (R.T * inv**2) @ R + np.diag(w / (x * x))
        return fval(x), g, H

    return _newton_simplex(fval, fgh, x0, tol, max_iter, track_values)


# -- spectraplex frontends -----------------------------------------------------

def _logdet_pd(X):
    """log det X via Cholesky, or None if X is not positive definite."""
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return None
    return 2.0 * float(np.log(np.diagonal(L).real).sum())


def _logdet_hessian(Xinv, basis):
    C = basis @ Xinv
    return np.einsum("kab,lba->kl", C, C).real


def minimize_spectraplex(obj, warm_start=None, tol=1e-10, max_iter=DEFAULT_MAX_ITER, track_values=False):
    """Minimize a quadratic-plus-log-det-barrier objective over trace-one PSD matrices.

    ``obj`` lives in the phi coordinates (dim = d^2); the warm start is a
    density matrix.
    """
    n = obj.dim
    d = int(round(math.sqrt(n)))
    if d * d != n:
        raise ValueError(f"objective dimension {n} is not a square")
    basis = hermitian_basis(d)
    Q, lin, c, w = obj.quad, obj.lin, obj.const, obj.barrier_weight
    X0 = np.eye(d, dtype=complex) / d if warm_start is None else np.asarray(warm_start, dtype=complex)
    X0 = X0 / np.trace(X0).real
    v0 = vectorize_phi(X0)

    def fval(v):
        ld = _logdet_pd(unvectorize_phi(v, d))
        if ld is None:
            return math.inf
        return 0.5 * float(v @ Q @ v) + float(lin @ v) + c - w * ld

    def fgh(v):
        X = unvectorize_phi(v, d)
        Xinv = np.linalg.inv(X)
        Xinv = 0.5 * (Xinv + Xinv.conj().T)
        g = Q @ v + lin - w * phi_dual(Xinv)
        H = Q + w * _logdet_hessian(Xinv, basis)
        return fval(v), g, H

    rep = _newton_spectraplex(fval, fgh, v0, d, tol, max_iter, track_values)
    rep.minimizer = unvectorize_phi(rep.minimizer, d)
    return rep


def minimize_spectraplex_history(loss_duals, barrier_weight, d, warm_start=None, tol=1e-10,
                                 max_iter=DEFAULT_MAX_ITER, track_values=False):
    """Minimize sum_t -log<X, R_t> + barrier_weight * (-log det X) over density matrices.

    ``loss_duals`` holds phi_dual(R_t) as rows, so <X, R_t> = loss_duals @ phi(X).
    """
    W = np.asarray(loss_duals, dtype=float)
    if W.ndim == 1:
        W = W.reshape(1, -1)
    basis = hermitian_basis(d)
    w = float(barrier_weight)
    X0 = np.eye(d, dtype=complex) / d if warm_start is None else np.asarray(warm_start, dtype=complex)
    X0 = X0 / np.trace(X0).real
    v0 = vectorize_phi(X0)

    def fval(v):
        ld = _logdet_pd(unvectorize_phi(v, d))
        if ld is None:
            return math.inf
        ips = W @ v
        if ips.size and ips.min() <= 0.0:
            return math.inf
        return -float(np.log(ips).sum()) - w * ld

    def fgh(v):
        X = unvectorize_phi(v, d)
        Xinv = np.linalg.inv(X)
        Xinv = 0.5 * (Xinv + Xinv.conj().T)
        ips = W @ v
        inv = 1.0 / ips
        g = -(W.T @ inv) - w * phi_dual(Xinv)
        H = (W.T * inv**2) @ W + w * _logdet_hessian(Xinv, basis)
        return fval(v), g, H

    rep = _newton_spectraplex(fval, fgh, v0, d, tol, max_iter, track_values)
    rep.minimizer = unvectorize_phi(rep.minimizer, d)
    return rep
