"""Domain types for agent states, pairwise measurements, private costs and
the state-to-network map.

All pairwise quantities are evaluated as dense ``(n, n)`` matrices whose
entry ``[i, j]`` is the measurement ``g_ij(x_i, x_j)`` held by agent ``i``
about agent ``j``. The diagonal carries no meaning and is always masked.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class ConfigError(ValueError):
    """Raised when a model, preset or dynamics configuration is invalid."""


class EvaluationError(ArithmeticError):
    """Raised when a measurement evaluates to a non-finite value."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class NeighborhoodRule(str, enum.Enum):
    """How the sign of ``g_ij`` translates into an edge.

    ``ATTRACT``: ``j`` is a neighbor of ``i`` iff ``g_ij <= 0`` (agents close
    to each other interact). ``REPEL``: ``j`` is a neighbor iff ``g_ij > 0``
    (agents far apart interact). The two modes partition every pair.
    """

    ATTRACT = "attract"
    REPEL = "repel"


def check_state(x, name="x"):
    """Validate an agent state profile and return it as a 1-d float array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size < 1:
        raise ValueError(f"{name} must contain at least one agent")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def offdiag_mask(n):
    mask = np.ones((n, n), dtype=bool)
    np.fill_diagonal(mask, False)
    return mask


def _as_coef(c):
    c = np.asarray(c, dtype=float)
    if c.ndim not in (0, 2):
        raise ConfigError("coefficient tables must be scalars or (n, n) arrays")
    if not np.all(np.isfinite(c)):
        raise ConfigError("coefficient tables must be finite")
    return c


class MeasurementSet:
    """Base class for the pairwise measurement functions ``g_ij``.

    Subclasses evaluate every quantity for all ordered pairs at once. The
    declared bounds are used by the dynamics and audited by the harness,
    never inferred.

    Parameters
    ----------
    m : float, optional
        Bound on ``|d^2 g_ij / dx_i dx_j|`` (and on the private-cost
        curvature) used by the majorization dynamics.
    lipschitz : float, optional
        Lipschitz constant of the measurements.
    grad_bound : float, optional
        Bound on the gradient norm of every ``g_ij``.
    """

    def __init__(self, m=None, lipschitz=None, grad_bound=None):
        for name, val in (("m", m), ("lipschitz", lipschitz), ("grad_bound", grad_bound)):
            if val is not None and not val > 0:
                raise ConfigError(f"declared bound {name} must be positive, got {val}")
        self.m = m
        self.lipschitz = lipschitz
        self.grad_bound = grad_bound

    def value(self, x):
        raise NotImplementedError

    def d1(self, x):
        """Partial derivative with respect to the holder's state ``x_i``."""
        raise NotImplementedError

    def d2(self, x):
        """Partial derivative with respect to the other agent's state ``x_j``."""
        raise NotImplementedError

    def d11(self, x):
        raise NotImplementedError

    def d12(self, x):
        raise NotImplementedError

    def d22(self, x):
        raise NotImplementedError

    @property
    def symmetric(self):
        return False

    def restrict(self, idx):
        """Measurement set for the sub-population ``idx`` (same functions, same bounds)."""
        raise NotImplementedError

    def check_symmetry(self, samples=50, low=-10.0, high=10.0, n=4, seed=0):
        """Sample random profiles and test ``g_ij(a, b) == g_ji(b, a)``."""
        rng = np.random.default_rng(seed)
        for _ in range(samples):
            x = rng.uniform(low, high, size=n)
            G = self.value(x)
            if not np.allclose(G, G.T, rtol=1e-12, atol=1e-12):
                return False
        return True


class QuadraticMeasurements(MeasurementSet):
    """Measurements that are polynomials of degree at most two::

        g_ij(a, b) = c0 + c1*a + c2*b + c11*a**2 + c12*a*b + c22*b**2

    Every coefficient may be a scalar or an ``(n, n)`` table indexed by the
    ordered pair ``(i, j)``.
    """

    def __init__(self, c0=0.0, c1=0.0, c2=0.0, c11=0.0, c12=0.0, c22=0.0,
                 m=None, lipschitz=None, grad_bound=None):
        super().__init__(m=m, lipschitz=lipschitz, grad_bound=grad_bound)
        self.c0 = _as_coef(c0)
        self.c1 = _as_coef(c1)
        self.c2 = _as_coef(c2)
        self.c11 = _as_coef(c11)
        self.c12 = _as_coef(c12)
        self.c22 = _as_coef(c22)
        shapes = {c.shape for c in self._coefs() if c.ndim == 2}
        if len(shapes) > 1:
            raise ConfigError(f"inconsistent coefficient table shapes {sorted(shapes)}")
        self.n = shapes.pop()[0] if shapes else None
        if self.n is not None and any(c.ndim == 2 and c.shape[0] != c.shape[1] for c in self._coefs()):
            raise ConfigError("coefficient tables must be square")

    def _coefs(self):
        return (self.c0, self.c1, self.c2, self.c11, self.c12, self.c22)

    def restrict(self, idx):
        idx = np.asarray(idx, dtype=int)

        def sub(c):
            return c[np.ix_(idx, idx)] if c.ndim == 2 else c

        return QuadraticMeasurements(*(sub(c) for c in self._coefs()), m=self.m,
                                     lipschitz=self.lipschitz, grad_bound=self.grad_bound)

    def _pairs(self, x):
        x = np.asarray(x, dtype=float)
        if self.n is not None and x.shape[0] != self.n:
            raise ConfigError(f"measurement tables are sized for n={self.n}, state has n={x.shape[0]}")
        return x[:, None], x[None, :]

    def _full(self, arr, x):
        n = np.asarray(x).shape[0]
        return np.broadcast_to(arr, (n, n)).copy()

    def value(self, x):
        a, b = self._pairs(x)
        out = (self.c0 + self.c1 * a + self.c2 * b
               + self.c11 * a * a + self.c12 * a * b + self.c22 * b * b)
        return self._full(out, x)

    def d1(self, x):
        a, b = self._pairs(x)
        return self._full(self.c1 + 2.0 * self.c11 * a + self.c12 * b, x)

    def d2(self, x):
        a, b = self._pairs(x)
        return self._full(self.c2 + self.c12 * a + 2.0 * self.c22 * b, x)

    def d11(self, x):
        return self._full(2.0 * self.c11, x)

    def d12(self, x):
        return self._full(self.c12, x)

    def d22(self, x):
        return self._full(2.0 * self.c22, x)

    @property
    def symmetric(self):
        def tr(c):
            return c.T if c.ndim == 2 else c

        pairs = ((self.c0, tr(self.c0)), (self.c1, tr(self.c2)),
                 (self.c11, tr(self.c22)), (self.c12, tr(self.c12)))
        n = self.n or 1
        mask = offdiag_mask(n) if self.n is not None else True
        for a, b in pairs:
            diff = np.broadcast_to(np.asarray(a) - np.asarray(b), (n, n))
            if np.any(np.abs(diff[mask]) > 1e-15):
                return False
        return True


class DifferencePolynomial(MeasurementSet):
    """``g_ij = c0_ij + P(x_i - x_j)`` for a polynomial ``P`` with ``P(0) = 0``.

    Parameters
    ----------
    coefs : sequence of float
        Coefficients of ``P`` in increasing degree, starting at degree 1.
    c0 : float or (n, n) array
        Offset; a table makes the thresholds pair specific.
    """

    def __init__(self, coefs, c0=0.0, m=None, lipschitz=None, grad_bound=None):
        super().__init__(m=m, lipschitz=lipschitz, grad_bound=grad_bound)
        coefs = np.asarray(coefs, dtype=float)
        if coefs.ndim != 1 or coefs.size < 1 or not np.all(np.isfinite(coefs)):
            raise ConfigError("polynomial coefficients must be a nonempty finite sequence")
        self.poly = np.polynomial.Polynomial(np.concatenate([[0.0], coefs]))
        self._dp = self.poly.deriv()
        self._ddp = self._dp.deriv()
        self.c0 = _as_coef(c0)
        self.n = self.c0.shape[0] if self.c0.ndim == 2 else None

    def restrict(self, idx):
        idx = np.asarray(idx, dtype=int)
        c0 = self.c0[np.ix_(idx, idx)] if self.c0.ndim == 2 else self.c0
        return DifferencePolynomial(self.poly.coef[1:], c0=c0, m=self.m,
                                    lipschitz=self.lipschitz, grad_bound=self.grad_bound)

    def _diff(self, x):
        x = np.asarray(x, dtype=float)
        if self.n is not None and x.shape[0] != self.n:
            raise ConfigError(f"measurement tables are sized for n={self.n}, state has n={x.shape[0]}")
        return x[:, None] - x[None, :]

    def value(self, x):
        return self.c0 + self.poly(self._diff(x))

    def d1(self, x):
        return self._dp(self._diff(x))

    def d2(self, x):
        return -self._dp(self._diff(x))

    def d11(self, x):
        return self._ddp(self._diff(x))

    def d12(self, x):
        return -self._ddp(self._diff(x))

    def d22(self, x):
        return self._ddp(self._diff(x))

    @property
    def symmetric(self):
        odd = self.poly.coef[1::2]
        if np.any(odd != 0.0):
            return False
        return self.c0.ndim == 0 or bool(np.all(self.c0 == self.c0.T))


def bounded_confidence(eps, m=1.0, **bounds):
    """``g_ij = (x_i - x_j)^2 / 2 - eps^2 / 2``.

    ``eps`` may be a scalar (homogeneous), a length-``n`` vector of per-agent
    confidence bounds (heterogeneous, row-wise) or an ``(n, n)`` table.
    """
    eps = np.asarray(eps, dtype=float)
    if np.any(eps < 0):
        raise ConfigError("confidence bounds must be nonnegative")
    if eps.ndim == 1:
        eps = np.repeat(eps[:, None], eps.shape[0], axis=1)
    return QuadraticMeasurements(c0=-0.5 * eps ** 2, c11=0.5, c12=-1.0, c22=0.5, m=m, **bounds)


@dataclass(frozen=True)
class PrivateCosts:
    """Separable private costs ``f_i(x_i) = c0 + c1*x_i + c2*x_i**2``.

    Coefficients are scalars or length-``n`` vectors.
    """

    c0: object = 0.0
    c1: object = 0.0
    c2: object = 0.0

    def __post_init__(self):
        for name in ("c0", "c1", "c2"):
            val = np.asarray(getattr(self, name), dtype=float)
            if val.ndim > 1 or not np.all(np.isfinite(val)):
                raise ConfigError(f"cost coefficient {name} must be a finite scalar or vector")
            object.__setattr__(self, name, val)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.c0 + self.c1 * x + self.c2 * x * x, x.shape).astype(float)

    def d1(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.c1 + 2.0 * self.c2 * x, x.shape).astype(float)

    def d2(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(2.0 * self.c2, x.shape).astype(float)

    def restrict(self, idx):
        idx = np.asarray(idx, dtype=int)
        return PrivateCosts(*(c[idx] if c.ndim == 1 else c for c in (self.c0, self.c1, self.c2)))

    @property
    def is_zero(self):
        return all(not np.any(getattr(self, k)) for k in ("c0", "c1", "c2"))


ZERO_COSTS = PrivateCosts()


def measurement_matrix(x, g):
    """Evaluate ``g`` on all ordered pairs and reject non-finite values."""
    x = np.asarray(x, dtype=float)
    G = g.value(x)
    bad = ~np.isfinite(G) & offdiag_mask(x.shape[0])
    if bad.any():
        i, j = map(int, np.argwhere(bad)[0])
        raise EvaluationError(f"measurement g[{i},{j}] is not finite at the current state", pair=(i, j))
    return G


def adjacency(x, g, rule=NeighborhoodRule.ATTRACT, G=None):
    """Boolean ``(n, n)`` matrix with ``A[i, j]`` true iff ``j`` is in ``N_i(x)``."""
    rule = NeighborhoodRule(rule)
    if G is None:
        G = measurement_matrix(x, g)
    if rule is NeighborhoodRule.ATTRACT:
        A = G <= 0.0
    else:
        A = G > 0.0
    np.fill_diagonal(A, False)
    return A


def neighborhoods(x, g, rule=NeighborhoodRule.ATTRACT):
    """Neighbor sets ``N_i(x)`` as a list of frozensets of agent indices."""
    x = check_state(x)
    A = adjacency(x, g, rule)
    return [frozenset(np.flatnonzero(row).tolist()) for row in A]


@dataclass(frozen=True)
class DualNetwork:
    """Edge weights ``lambda_ij`` in ``[0, 1]`` on ordered pairs ``i != j``."""

    weights: np.ndarray
    discrete: bool = True

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError("dual weights must be a square matrix")
        np.fill_diagonal(w, 0.0)
        if np.any(w < 0.0) or np.any(w > 1.0) or not np.all(np.isfinite(w)):
            raise ValueError("dual weights must lie in [0, 1]")
        if self.discrete and not np.all((w == 0.0) | (w == 1.0)):
            raise ValueError("discrete dual weights must be binary")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n(self):
        return self.weights.shape[0]

    def edges(self):
        return [tuple(map(int, e)) for e in np.argwhere(self.weights > 0)]


def dual_from_state(x, g, rule=NeighborhoodRule.ATTRACT):
    """Binary dual network that optimizes the Lagrangian at fixed state.

    In ``ATTRACT`` mode this is the minimizer over the unit box, in ``REPEL``
    mode the maximizer; in both cases ``lambda_ij = 1`` iff ``j in N_i(x)``.
    """
    x = check_state(x)
    return DualNetwork(adjacency(x, g, rule).astype(float), discrete=True)
