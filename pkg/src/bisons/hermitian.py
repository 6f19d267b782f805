"""Hermitian matrix algebra for learning over trace-one PSD matrices.

Everything here treats d x d complex Hermitian matrices as a real vector
space of dimension d^2.  The fixed coordinate map ``vectorize_phi`` lists,
in order: real parts of the strict lower triangle (column major), then the
matching imaginary parts taken from the upper triangle, then the (real)
diagonal.  For d=2 and M = [[a, x+iy], [x-iy, b]] this gives (x, y, a, b).
Under this map <X, W> = Tr(XW) equals phi(X) . phi_dual(W) where phi_dual
doubles the off-diagonal slots; that diagonal rescaling is the only place
the coordinate convention leaks out.
"""

import math
from dataclasses import dataclass

import numpy as np


class ConditioningError(ArithmeticError):
    """Raised when an input is too close to singular for the requested operation."""


class MissingRandomnessError(ValueError):
    """Raised when a randomized reduction is requested without a generator."""


def hermitize(M):
    return 0.5 * (M + M.conj().T)


def is_hermitian(M, tol=1e-12):
    M = np.asarray(M)
    return M.shape[0] == M.shape[1] and np.abs(M - M.conj().T).max() <= tol


def trace_inner(X, Y):
    """Tr(XY) for Hermitian X, Y; always real up to roundoff."""
    X = np.asarray(X)
    Y = np.asarray(Y)
    if X.shape != Y.shape:
        raise ValueError(f"dimension mismatch: {X.shape} vs {Y.shape}")
    v = np.trace(X @ Y)
    if abs(v.imag) > 1e-10:
        raise ArithmeticError(f"trace inner product has imaginary residual {v.imag}")
    return float(v.real)


def positive_part(M):
    """Zero out the negative eigenvalues of a Hermitian matrix.

    Eigenvalues in (-1e-12, 0) are treated as exact zeros so roundoff noise
    cannot inflate the rank of M_+ - M.
    """
    w, V = np.linalg.eigh(hermitize(np.asarray(M, dtype=complex)))
    w = np.where(w > 0.0, w, 0.0)
    return hermitize((V * w) @ V.conj().T)


def sqrt_psd(M):
    w, V = np.linalg.eigh(hermitize(np.asarray(M, dtype=complex)))
    w = np.sqrt(np.clip(w, 0.0, None))
    return hermitize((V * w) @ V.conj().T)


def inv_sqrt(X):
    """X^{-1/2} for Hermitian positive definite X."""
    w, V = np.linalg.eigh(hermitize(np.asarray(X, dtype=complex)))
    if w.min() <= 1e-12:
        raise ConditioningError(f"matrix nearly singular, min eigenvalue {w.min()}")
    return hermitize((V / np.sqrt(w)) @ V.conj().T)


def a_norm(W, A):
    """The seminorm sqrt(Tr(WAWA)) = ||A^{1/2} W A^{1/2}||_F for PSD A."""
    S = sqrt_psd(A)
    H = S @ W @ S
    return float(np.linalg.norm(H))


def loewner_leq(A, B, tol=1e-9):
    """True iff A <= B in the Loewner order, up to -tol on the smallest eigenvalue."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape != B.shape:
        raise ValueError("dimension mismatch")
    return bool(np.linalg.eigvalsh(hermitize(B - A)).min() >= -tol)


def min_eig(M):
    return float(np.linalg.eigvalsh(hermitize(np.asarray(M, dtype=complex))).min())


# -- real coordinates -------------------------------------------------------

def _lower_indices(d):
    return [(i, j) for j in range(d) for i in range(j + 1, d)]


def vectorize_phi(M):
    M = np.asarray(M, dtype=complex)
    d = M.shape[0]
    idx = _lower_indices(d)
    n = len(idx)
    out = np.empty(d * d)
    for k, (i, j) in enumerate(idx):
        out[k] = M[i, j].real
        out[n + k] = M[j, i].imag
    out[2 * n:] = np.diagonal(M).real
    return out


def unvectorize_phi(v, d):
    v = np.asarray(v, dtype=float)
    if v.size != d * d:
        raise ValueError(f"expected {d * d} coordinates, got {v.size}")
    idx = _lower_indices(d)
    n = len(idx)
    M = np.zeros((d, d), dtype=complex)
    for k, (i, j) in enumerate(idx):
        M[j, i] = v[k] + 1j * v[n + k]
        M[i, j] = v[k] - 1j * v[n + k]
    M[np.diag_indices(d)] = v[2 * n:]
    return M


def phi_scale(d):
    """Diagonal of the quadratic form giving <X, W> = phi(X) . (phi_scale * phi(W))."""
    n = d * (d - 1) // 2
    return np.concatenate([np.full(2 * n, 2.0), np.ones(d)])


def phi_dual(M):
    d = np.asarray(M).shape[0]
    return phi_scale(d) * vectorize_phi(M)


_BASIS_CACHE = {}


def hermitian_basis(d):
    """Stacked (d^2, d, d) array with slice k the Hermitian matrix of coordinate k."""
    if d not in _BASIS_CACHE:
        eye = np.eye(d * d)
        _BASIS_CACHE[d] = np.stack([unvectorize_phi(eye[k], d) for k in range(d * d)])
    return _BASIS_CACHE[d]


def trace_slots(d):
    """Coordinate indicator of the trace functional: Tr(X) = trace_slots . phi(X)."""
    a = np.zeros(d * d)
    a[d * (d - 1):] = 1.0
    return a


# -- quantum measurement reductions -----------------------------------------

@dataclass(frozen=True)
class MeasurementEvent:
    """A two-outcome measurement (eigenvalues of ``effect`` in [0, 1]) and its outcome."""

    effect: np.ndarray
    outcome: float

    def __post_init__(self):
        E = np.asarray(self.effect, dtype=complex)
        if not is_hermitian(E):
            raise ValueError("effect must be Hermitian")
        w = np.linalg.eigvalsh(hermitize(E))
        if w.min() < -1e-10 or w.max() > 1.0 + 1e-10:
            raise ValueError(f"effect eigenvalues must lie in [0, 1], got [{w.min()}, {w.max()}]")
        if not 0.0 <= self.outcome <= 1.0:
            raise ValueError(f"outcome must lie in [0, 1], got {self.outcome}")
        object.__setattr__(self, "effect", hermitize(E))


def reduce_measurement(ev, rng=None):
    """Turn a measurement event into a PSD loss matrix.

    For outcomes in {0, 1} the reduction R = b E + (1-b)(I - E) is
    deterministic.  For fractional outcomes a Bernoulli(b) sample y gives
    R = (y/b) E + ((1-y)/(1-b))(I - E), whose expected log loss equals the
    KL-style loss of the fractional outcome; one uniform variate is drawn
    per call.  Trace normalization is left to the consumer.
    """
    b = ev.outcome
    E = ev.effect
    eye = np.eye(E.shape[0], dtype=complex)
    if b == 1.0:
        return E.copy()
    if b == 0.0:
        return eye - E
    if rng is None:
        raise MissingRandomnessError("fractional outcome requires an rng for the Bernoulli draw")
    y = 1.0 if rng.random() < b else 0.0
    return (y / b) * E + ((1.0 - y) / (1.0 - b)) * (eye - E)


# -- random generation helpers ----------------------------------------------

def random_hermitian(rng, d, scale=1.0):
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return hermitize(scale * A)


def random_unitary(rng, d):
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    Qm, R = np.linalg.qr(A)
    return Qm * (np.diagonal(R) / np.abs(np.diagonal(R)))


def random_pd(rng, d, eig_low=0.1, eig_high=2.0):
    V = random_unitary(rng, d)
    w = rng.uniform(eig_low, eig_high, size=d)
    return hermitize((V * w) @ V.conj().T)


def random_effect(rng, d):
    V = random_unitary(rng, d)
    w = rng.uniform(0.0, 1.0, size=d)
    return hermitize((V * w) @ V.conj().T)


def random_density(rng, d):
    V = random_unitary(rng, d)
    w = rng.dirichlet(np.ones(d))
    return hermitize((V * w) @ V.conj().T)
