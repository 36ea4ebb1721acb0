"""Lagrangian of the network-constrained program and the functionals built
from it: gradients, dominating diagonals, Lyapunov candidates, the penalty
objective, Bregman divergences, mirror maps and transfer functions.

Prefactor convention: symmetric families sum over ordered pairs and halve
(``L = f + 1/2 sum lambda_ij g_ij``); the asymmetric family sums over ordered
pairs without halving. :class:`LyapunovFamily` fixes the convention per
functional so nothing is double counted by accident.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import special

from .core import (
    ZERO_COSTS,
    ConfigError,
    DualNetwork,
    NeighborhoodRule,
    adjacency,
    measurement_matrix,
    offdiag_mask,
)


def _weights(lam):
    if isinstance(lam, DualNetwork):
        return lam.weights
    w = np.array(lam, dtype=float)
    if np.any(w < 0.0) or np.any(w > 1.0):
        raise ValueError("dual weights must lie in [0, 1]")
    np.fill_diagonal(w, 0.0)
    return w


def _costs(f):
    return ZERO_COSTS if f is None else f


def lagrangian_value(x, lam, g, f=None, halved=True):
    """``L(x, lambda) = sum_i f_i(x_i) + s * sum_{i != j} lambda_ij g_ij``.

    ``s`` is 1/2 for the symmetric form and 1 when ``halved`` is false.
    """
    x = np.asarray(x, dtype=float)
    w = _weights(lam)
    G = measurement_matrix(x, g)
    s = 0.5 if halved else 1.0
    mask = offdiag_mask(x.shape[0])
    return float(_costs(f).value(x).sum() + s * np.sum(w[mask] * G[mask]))


def lagrangian_grad_x(x, lam, g, f=None, halved=True):
    """Exact gradient of :func:`lagrangian_value` in ``x`` at fixed ``lambda``.

    Both argument slots of every ``g_ij`` contribute. For symmetric
    measurements and a symmetric binary network this reduces to
    ``f_i' + sum_{j in N_i} dg_ij/dx_i``.
    """
    x = np.asarray(x, dtype=float)
    w = _weights(lam)
    s = 0.5 if halved else 1.0
    D1 = g.d1(x)
    D2 = g.d2(x)
    return _costs(f).d1(x) + s * ((w * D1).sum(axis=1) + (w * D2).sum(axis=0))


def lagrangian_hessian_x(x, lam, g, f=None, halved=True):
    """Hessian of :func:`lagrangian_value` in ``x`` at fixed ``lambda``."""
    x = np.asarray(x, dtype=float)
    w = _weights(lam)
    s = 0.5 if halved else 1.0
    D11, D12, D22 = g.d11(x), g.d12(x), g.d22(x)
    H = s * (w * D12 + (w * D12).T)
    diag = _costs(f).d2(x) + s * ((w * D11).sum(axis=1) + (w * D22).sum(axis=0))
    np.fill_diagonal(H, diag)
    return H


def network_gradient(x, A, g, f=None, weights=None):
    """Per-agent driving term ``f_i'(x_i) + sum_{j in N_i} w_ij dg_ij/dx_i``.

    ``A`` is the boolean adjacency; ``weights`` optionally rescales each
    ordered pair.
    """
    x = np.asarray(x, dtype=float)
    D1 = g.d1(x)
    W = A if weights is None else A * weights
    return _costs(f).d1(x) + np.where(W != 0, W * D1, 0.0).sum(axis=1)


class DiagonalVariant(str, enum.Enum):
    MAJORIZE = "majorize"
    EXACT_QUADRATIC = "exact_quadratic"
    IDENTITY = "identity"
    ASYMMETRIC = "asymmetric"
    TRANSFER = "transfer"
    QUASI_NEWTON = "quasi_newton"


@dataclass(frozen=True)
class DominatingDiagonal:
    entries: np.ndarray
    variant: DiagonalVariant

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        if np.any(~(e > 0.0)):
            bad = int(np.flatnonzero(~(e > 0.0))[0])
            raise ConfigError(
                f"dominating diagonal entry {bad} is {e[bad]!r}; the model is misconfigured"
            )
        object.__setattr__(self, "entries", e)
        object.__setattr__(self, "variant", DiagonalVariant(self.variant))

    def matrix(self):
        return np.diag(self.entries)


def dominating_diagonal(x, g, f=None, m=None, variant=DiagonalVariant.MAJORIZE,
                        rule=None, transfers=None):
    """Diagonal majorizer of the Lagrangian Hessian for one dynamics family.

    ========================  ==========================================
    variant                   entry ``i``
    ========================  ==========================================
    ``majorize``              ``2 m (|N_i| + 1)``
    ``exact_quadratic``       ``|N_i| + 1``
    ``identity``              ``1``
    ``asymmetric``            ``m (|N_i| + 1)``
    ``transfer``              ``2 + 4 m sum_j f_ij(g_ij)``
    ``quasi_newton``          ``1 + f_i'' + sum_{j in N_i} d2g_ij/dx_i^2``
    ========================  ==========================================

    Neighbor sets use the attract rule except for ``quasi_newton``, which
    defaults to the repel rule.
    """
    variant = DiagonalVariant(variant)
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if variant in (DiagonalVariant.MAJORIZE, DiagonalVariant.ASYMMETRIC, DiagonalVariant.TRANSFER) and m is None:
        raise ConfigError(f"variant {variant.value} needs the smoothness bound m")
    if variant is DiagonalVariant.TRANSFER:
        if transfers is None:
            raise ConfigError("variant transfer needs a transfer function set")
        W = transfers.value(measurement_matrix(x, g)) * offdiag_mask(n)
        return DominatingDiagonal(2.0 + 4.0 * m * W.sum(axis=1), variant)
    if variant is DiagonalVariant.IDENTITY:
        return DominatingDiagonal(np.ones(n), variant)
    if rule is None:
        rule = NeighborhoodRule.REPEL if variant is DiagonalVariant.QUASI_NEWTON else NeighborhoodRule.ATTRACT
    A = adjacency(x, g, rule)
    deg = A.sum(axis=1).astype(float)
    if variant is DiagonalVariant.MAJORIZE:
        entries = 2.0 * m * (deg + 1.0)
    elif variant is DiagonalVariant.EXACT_QUADRATIC:
        entries = deg + 1.0
    elif variant is DiagonalVariant.ASYMMETRIC:
        entries = m * (deg + 1.0)
    else:
        D11 = g.d11(x)
        entries = 1.0 + _costs(f).d2(x) + np.where(A, D11, 0.0).sum(axis=1)
    return DominatingDiagonal(entries, variant)


class LyapunovFamily(str, enum.Enum):
    """Which Lyapunov functional accompanies a dynamics family.

    ``MAJORIZE``    ``sum f_i + 1/2 sum_{i,j} min(g_ij, 0)``
    ``EXACT``       ``sum f_i + sum_{i,j} min(g_ij, 0)`` (unhalved closed-form
                    HK Lyapunov for the exact quadratic case)
    ``ASYMMETRIC``  ``sum_{i,j} min(g_ij, 0)`` (unhalved, no costs)
    ``TRANSFER``    ``sum_{i != j} F_ij(g_ij)`` with ``F_ij`` the antiderivative
                    of the transfer function
    ``PENALTY``     ``sum f_i + 1/2 sum_{i,j} max(g_ij, 0)``
    """

    MAJORIZE = "majorize"
    EXACT = "exact"
    ASYMMETRIC = "asymmetric"
    TRANSFER = "transfer"
    PENALTY = "penalty"


def lyapunov(x, family, g, f=None, transfers=None):
    family = LyapunovFamily(family)
    x = np.asarray(x, dtype=float)
    mask = offdiag_mask(x.shape[0])
    G = measurement_matrix(x, g)
    fsum = float(_costs(f).value(x).sum())
    if family is LyapunovFamily.MAJORIZE:
        return fsum + 0.5 * float(np.minimum(G[mask], 0.0).sum())
    if family is LyapunovFamily.EXACT:
        return fsum + float(np.minimum(G[mask], 0.0).sum())
    if family is LyapunovFamily.ASYMMETRIC:
        return float(np.minimum(G[mask], 0.0).sum())
    if family is LyapunovFamily.TRANSFER:
        if transfers is None:
            raise ConfigError("the transfer Lyapunov needs a transfer function set with antiderivatives")
        return float(transfers.antiderivative(G[mask]).sum())
    return penalty_phi(x, g, f)


def penalty_phi(x, g, f=None):
    """``Phi(x) = f(x) + 1/2 sum_{i,j} max(g_ij, 0)``."""
    x = np.asarray(x, dtype=float)
    G = measurement_matrix(x, g)
    mask = offdiag_mask(x.shape[0])
    return float(_costs(f).value(x).sum() + 0.5 * np.maximum(G[mask], 0.0).sum())


def penalty_subgradient(x, g, f=None):
    """A subgradient of :func:`penalty_phi`.

    Pairs sitting exactly on ``g_ij = 0`` take the zero branch.
    """
    x = np.asarray(x, dtype=float)
    G = measurement_matrix(x, g)
    act = (G > 0.0) & offdiag_mask(x.shape[0])
    D1 = g.d1(x)
    D2 = g.d2(x)
    return _costs(f).d1(x) + 0.5 * (np.where(act, D1, 0.0).sum(axis=1) + np.where(act, D2, 0.0).sum(axis=0))


def sorted_gap_vector(x):
    """All pairwise gaps ``|x_i - x_j|`` (``i < j``) in nonincreasing order."""
    x = np.asarray(x, dtype=float)
    iu = np.triu_indices(x.shape[0], 1)
    gaps = np.abs(x[:, None] - x[None, :])[iu]
    return np.sort(gaps)[::-1]


def lex_compare(a, b, tol=0.0):
    """Return -1, 0 or 1 comparing two sorted vectors lexicographically."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    diff = np.flatnonzero(np.abs(a - b) > tol)
    if diff.size == 0:
        return 0
    k = diff[0]
    return -1 if a[k] < b[k] else 1


# --- mirror maps -----------------------------------------------------------

class MirrorMap:
    """Separable convex function ``Psi(x) = sum_i psi(x_i)`` with closed-form
    gradient inverse."""

    name = "mirror"

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def inv_grad(self, y):
        raise NotImplementedError

    def hess_diag(self, x):
        raise NotImplementedError

    def in_domain(self, x):
        return bool(np.all(np.isfinite(x)))


class QuadraticMap(MirrorMap):
    """``Psi(x) = scale/2 * ||x||^2``."""

    name = "quadratic"

    def __init__(self, scale=1.0):
        if not scale > 0:
            raise ConfigError("quadratic mirror map scale must be positive")
        self.scale = float(scale)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * self.scale * float(np.dot(x, x))

    def grad(self, x):
        return self.scale * np.asarray(x, dtype=float)

    def inv_grad(self, y):
        return np.asarray(y, dtype=float) / self.scale

    def hess_diag(self, x):
        return np.full(np.shape(x), self.scale)


class NegativeEntropy(MirrorMap):
    """``Psi(x) = sum_i x_i ln x_i`` on the positive orthant."""

    name = "entropy"

    def in_domain(self, x):
        x = np.asarray(x, dtype=float)
        return bool(np.all(np.isfinite(x)) and np.all(x > 0.0))

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if not self.in_domain(x):
            raise ValueError("negative entropy is only defined for strictly positive states")
        return x

    def value(self, x):
        x = self._check(x)
        return float(np.sum(x * np.log(x)))

    def grad(self, x):
        return 1.0 + np.log(self._check(x))

    def inv_grad(self, y):
        return np.exp(np.asarray(y, dtype=float) - 1.0)

    def hess_diag(self, x):
        return 1.0 / self._check(x)


def bregman(psi, a, b):
    """``D(a, b) = Psi(a) - Psi(b) - <grad Psi(b), a - b>``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(psi.value(a) - psi.value(b) - np.dot(psi.grad(b), a - b))


# --- transfer functions ----------------------------------------------------

class TransferFunctions:
    """Nonnegative decreasing ``f(lam)`` with closed-form ``F(u) = int_0^u f``.

    The same transfer is used for every ordered pair, which keeps the set
    symmetric.
    """

    name = "transfer"
    symmetric = True

    def value(self, lam):
        raise NotImplementedError

    def deriv(self, lam):
        raise NotImplementedError

    def antiderivative(self, u):
        raise NotImplementedError


class ExpTransfer(TransferFunctions):
    """``f(lam) = exp(-rate * lam)``."""

    name = "exp"

    def __init__(self, rate=1.0):
        if not rate > 0:
            raise ConfigError("exp transfer rate must be positive")
        self.rate = float(rate)

    def value(self, lam):
        return np.exp(-self.rate * np.asarray(lam, dtype=float))

    def deriv(self, lam):
        return -self.rate * self.value(lam)

    def antiderivative(self, u):
        return -np.expm1(-self.rate * np.asarray(u, dtype=float)) / self.rate


class ReciprocalTransfer(TransferFunctions):
    """``f(lam) = 1 / (1 + lam)`` on ``lam > -1``."""

    name = "reciprocal"

    def _check(self, lam):
        lam = np.asarray(lam, dtype=float)
        if np.any(lam <= -1.0):
            raise ValueError("reciprocal transfer is only defined for arguments > -1")
        return lam

    def value(self, lam):
        return 1.0 / (1.0 + self._check(lam))

    def deriv(self, lam):
        return -1.0 / (1.0 + self._check(lam)) ** 2

    def antiderivative(self, u):
        return np.log1p(self._check(u))


class SoftHingeTransfer(TransferFunctions):
    """Smoothed ``max(1 - lam, 0)``: ``f(lam) = log(1 + exp(beta (1 - lam))) / beta``.

    The antiderivative is expressed through the dilogarithm
    ``Li2(z) = spence(1 - z)``.
    """

    name = "soft_hinge"

    def __init__(self, beta=4.0):
        if not beta > 0:
            raise ConfigError("soft hinge sharpness must be positive")
        self.beta = float(beta)

    def value(self, lam):
        return np.logaddexp(0.0, self.beta * (1.0 - np.asarray(lam, dtype=float))) / self.beta

    def deriv(self, lam):
        return -special.expit(self.beta * (1.0 - np.asarray(lam, dtype=float)))

    def _li2_neg_exp(self, t):
        return special.spence(1.0 + np.exp(t))

    def antiderivative(self, u):
        u = np.asarray(u, dtype=float)
        b = self.beta
        return (self._li2_neg_exp(b * (1.0 - u)) - self._li2_neg_exp(b)) / (b * b)


TRANSFERS = {
    "exp": ExpTransfer,
    "reciprocal": ReciprocalTransfer,
    "soft_hinge": SoftHingeTransfer,
}
