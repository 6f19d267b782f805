"""Simplex geometry, log losses and their quadratic surrogates.

The learner's action set is the probability simplex.  Each round the
environment reveals a nonnegative returns vector r and the learner playing
x suffers -log<x, r>.  Multiplicative rescaling of r only shifts the loss
by a constant, so returns are normalized onto the simplex on ingestion and
the shift is discarded.

A round's loss is modelled by the quadratic surrogate anchored at the
played point x_t,

    fhat(x) = f(x_t) + <x - x_t, g> + (beta/2) <x - x_t, g>^2,

with g = -r / <x_t, r>.  In the scalar reward coordinate w = <x, r> the
surrogate becomes a parabola hat_h(w); truncating it to its tangent beyond
the kink w = y_t / beta yields a global lower bound on -log(w), which is
what makes the epoch regret analysis work.
"""

import math
from dataclasses import dataclass

import numpy as np

#: Largest admissible surrogate curvature.
BETA_MAX = math.sqrt(2.0) - 1.0

_SUM_TOL = 1e-12
_TINY_INNER = 1e-300


class InvalidReturnsError(ValueError):
    """Raised for returns vectors that are negative or identically zero."""


class InfiniteLossError(ArithmeticError):
    """Raised when the realized inner product underflows to (essentially) zero."""


def uniform_portfolio(d):
    return np.full(d, 1.0 / d)


def as_portfolio(x, tol=_SUM_TOL):
    """Validate and return a simplex point as a float array."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("portfolio must be a vector of dimension >= 2")
    if x.min() < 0.0:
        raise ValueError("portfolio entries must be nonnegative")
    if abs(x.sum() - 1.0) > tol:
        raise ValueError(f"portfolio entries must sum to 1 (got {x.sum()!r})")
    return x


def normalize_returns(raw):
    """Scale a nonnegative returns vector onto the simplex.

    The induced loss shift -log(sum(raw)) is constant in the action and is
    dropped; regret against any comparator is unchanged.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 1:
        raise InvalidReturnsError("returns must be a vector")
    if raw.min() < 0.0:
        raise InvalidReturnsError("returns entries must be nonnegative")
    s = raw.sum()
    if not s > 0.0:
        raise InvalidReturnsError("returns vector must have a positive entry")
    if abs(s - 1.0) <= _SUM_TOL:
        return raw
    return raw / s


def log_loss(x, r):
    """-log<x, r>; raises InfiniteLossError when the inner product vanishes."""
    ip = float(np.dot(x, r))
    if ip < _TINY_INNER:
        raise InfiniteLossError("inner product <x, r> is zero to machine precision")
    return -math.log(ip)


@dataclass(frozen=True)
class SurrogateQuad:
    """Quadratic surrogate of one round's log loss, anchored at the played point.

    anchor_value  f(x_t)
    anchor_grad   g = -r / <x_t, r>
    anchor_point  x_t
    anchor_reward y_t = <x_t, r>
    curvature     beta in (0, sqrt(2)-1]
    """

    anchor_value: float
    anchor_grad: np.ndarray
    anchor_point: np.ndarray
    anchor_reward: float
    curvature: float

    @property
    def kink(self):
        """Reward coordinate where the lower surrogate switches to its tangent."""
        return self.anchor_reward / self.curvature

    def eval(self, x):
        s = float(np.dot(x - self.anchor_point, self.anchor_grad))
        return self.anchor_value + s + 0.5 * self.curvature * s * s

    def grad(self, x):
        s = float(np.dot(x - self.anchor_point, self.anchor_grad))
        return (1.0 + self.curvature * s) * self.anchor_grad

    def hat_h(self, w):
        """The surrogate as a function of the scalar reward w = <x, r>."""
        y = self.anchor_reward
        dw = w - y
        return self.anchor_value - dw / y + 0.5 * self.curvature * (dw / y) ** 2

    def hat_h_prime(self, w):
        y = self.anchor_reward
        return -1.0 / y + self.curvature * (w - y) / (y * y)

    def lower_hat_h(self, w):
        """hat_h truncated to its tangent beyond the kink; lower bounds -log(w)."""
        k = self.kink
        if w <= k:
            return self.hat_h(w)
        return self.hat_h(k) + (w - k) * self.hat_h_prime(k)


def build_surrogate(x_t, r_t, beta):
    """Construct the quadratic surrogate for the round (x_t, r_t)."""
    if not 0.0 < beta <= BETA_MAX + 1e-15:
        raise ValueError(f"curvature must lie in (0, sqrt(2)-1], got {beta}")
    x_t = np.asarray(x_t, dtype=float)
    r_t = np.asarray(r_t, dtype=float)
    y = float(np.dot(x_t, r_t))
    if y < _TINY_INNER:
        raise InfiniteLossError("anchor reward <x_t, r_t> is zero to machine precision")
    return SurrogateQuad(
        anchor_value=-math.log(y),
        anchor_grad=-r_t / y,
        anchor_point=x_t,
        anchor_reward=y,
        curvature=float(beta),
    )


def surrogate_eval(s, x):
    return s.eval(x)


def lower_surrogate_eval(s, x, r):
    """Lower surrogate evaluated at the portfolio x against the returns r."""
    return s.lower_hat_h(float(np.dot(x, r)))


class PiProjection:
    """Orthonormal chart of the simplex affine hull.

    The rows of ``basis`` span the subspace orthogonal to the all-ones
    vector, so the projection has the uniform point c = 1/d as its kernel
    representative: project(c) = 0 and lift(0) = c.  The basis is built by
    Gram-Schmidt over e_i - e_d, which is deterministic and seed free.
    """

    def __init__(self, d, basis=None):
        if d < 2:
            raise ValueError("need dimension >= 2")
        self.d = d
        if basis is None:
            rows = []
            for i in range(d - 1):
                v = np.zeros(d)
                v[i] = 1.0
                v[d - 1] = -1.0
                for q in rows:
                    v = v - np.dot(q, v) * q
                v /= np.linalg.norm(v)
                rows.append(v)
            basis = np.array(rows)
        self.basis = basis
        self.center = np.full(d, 1.0 / d)

    def project(self, x):
        return self.basis @ np.asarray(x, dtype=float)

    def lift(self, v):
        """Inverse chart into the affine hull; the flag reports simplex membership."""
        x = self.basis.T @ np.asarray(v, dtype=float) + self.center
        return x, bool(x.min() >= 0.0)


def project_pi(proj, x):
    return proj.project(x)


def lift_pi(proj, v):
    return proj.lift(v)
