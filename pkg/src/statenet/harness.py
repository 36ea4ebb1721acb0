"""Verification instruments.

Lyapunov drift ledgers, finite-difference gradient checks, an exhaustive
dual oracle, cluster analysis, the epsilon-equilibrium iteration bound and
a sampling audit of declared smoothness bounds. Everything here reads
trajectories and models; nothing mutates them.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .continuous import FlowProblem, FlowState, flow_rhs
from .core import (
    ConfigError,
    NeighborhoodRule,
    dual_from_state,
    measurement_matrix,
    offdiag_mask,
)
from .discrete import DRIFT_TOL, Family, Status, drift_requirement
from .lagrangian import (
    LyapunovFamily,
    lagrangian_grad_x,
    lyapunov,
    penalty_phi,
    penalty_subgradient,
)

ROUNDTRIP_TOL = 1e-12


# --- drift ledgers ------------------------------------------------------------

@dataclass
class DriftLedger:
    family: LyapunovFamily
    values: np.ndarray
    drift: np.ndarray
    bound: np.ndarray
    satisfied: np.ndarray
    certified: np.ndarray
    observational: bool

    @property
    def violations(self):
        return int(np.count_nonzero(~self.satisfied))

    @property
    def certified_violations(self):
        return int(np.count_nonzero(~self.satisfied & self.certified))

    @property
    def exceptions(self):
        """Iterations (0-based step index) whose drift fell short of the bound."""
        return np.flatnonzero(~self.satisfied).tolist()

    @property
    def max_violation(self):
        short = self.bound - self.drift
        return float(max(0.0, short.max())) if short.size else 0.0

    @property
    def decrease_fraction(self):
        """Fraction of steps with ``V_{k+1} <= V_k`` (up to the drift tolerance)."""
        if self.drift.size == 0:
            return 1.0
        return float(np.mean(self.drift >= -DRIFT_TOL))

    @property
    def strict_decrease_fraction(self):
        if self.drift.size == 0:
            return 1.0
        return float(np.mean(self.drift > 0.0))

    def rows(self):
        for k in range(self.drift.size):
            yield k, self.values[k + 1], self.drift[k], self.bound[k], bool(self.satisfied[k])


def monitor(traj, g, f=None, family=None, coefficient=None, check_roundtrip=True):
    """Recompute the Lyapunov ledger of a trajectory from its stored states.

    Parameters
    ----------
    traj : TrajectoryRecord
    g, f : measurement set and private costs used for the run
    family : LyapunovFamily or str, optional
        Monitor a functional other than the family's own. The required drop
        is then ``coefficient * ||dx||^2`` (0 and observational when
        ``coefficient`` is None).
    check_roundtrip : bool
        Assert that the recomputed values reproduce the ledger stored in the
        trajectory to ``1e-12`` (relative to ``1 + |V|``).

    Returns
    -------
    DriftLedger
    """
    spec = traj.spec
    own = spec.lyapunov_family
    if family is not None:
        try:
            fam = LyapunovFamily(family)
        except ValueError:
            raise ConfigError(f"no Lyapunov functional is defined for {family!r}") from None
    else:
        fam = own
    S = traj.internal_states()
    V = np.array([lyapunov(x, fam, g, f, transfers=spec.transfers) for x in S])
    K = S.shape[0] - 1
    drift = V[:-1] - V[1:]
    bound = np.zeros(K)
    cert = np.zeros(K, dtype=bool)
    for k in range(K):
        if fam is own and family is None:
            bound[k], cert[k] = drift_requirement(spec, g, f, S[k], S[k + 1])
        elif coefficient is not None:
            dx = S[k + 1] - S[k]
            bound[k], cert[k] = coefficient * float(np.dot(dx, dx)), True
    if check_roundtrip and fam is own:
        scale = 1.0 + np.abs(V)
        if np.any(np.abs(V - traj.lyapunov) > ROUNDTRIP_TOL * scale):
            raise AssertionError("stored Lyapunov values do not match recomputation from states")
        if K and np.any(np.abs(drift - traj.drift) > ROUNDTRIP_TOL * scale[:-1]):
            raise AssertionError("stored drifts do not match recomputation from states")
    satisfied = drift >= bound - DRIFT_TOL
    observational = not bool(cert.any()) if K else fam in (LyapunovFamily.ASYMMETRIC,)
    if family is None and spec.family in (Family.ASYMMETRIC, Family.SUBGRADIENT):
        observational = True
    return DriftLedger(fam, V, drift, bound, satisfied, cert, observational)


# --- finite differences ---------------------------------------------------------

def _central(fun, x, h, coords=None):
    """Central differences of a scalar function whose terms are returned as an array.

    Differencing term by term before summing keeps large constant offsets
    from swamping the result. The step is scaled by ``max(1, |x_i|)``.
    """
    coords = range(x.shape[0]) if coords is None else coords
    out = np.full_like(x, np.nan)
    for i in coords:
        hi = h * max(1.0, abs(x[i]))
        e = np.zeros_like(x)
        e[i] = hi
        out[i] = float(np.sum(fun(x + e) - fun(x - e))) / (2.0 * hi)
    return out


def _terms_lagrangian(g, f, lam, s):
    mask = offdiag_mask(lam.shape[0])

    def terms(y):
        fv = np.zeros_like(y) if f is None else f.value(y)
        return np.concatenate([fv, s * (lam * g.value(y))[mask]])

    return terms


def _terms_penalty(g, f):
    def terms(y):
        mask = offdiag_mask(y.shape[0])
        fv = np.zeros_like(y) if f is None else f.value(y)
        return np.concatenate([fv, 0.5 * np.maximum(g.value(y)[mask], 0.0)])

    return terms


def _near_kink(x, g, h, coords=None):
    G = measurement_matrix(x, g)
    h = h * max(1.0, float(np.max(np.abs(x))))
    D1 = np.abs(g.d1(x)) + np.abs(g.d2(x))
    mask = offdiag_mask(x.shape[0])
    if coords is not None:
        # only pairs touching a differenced component can put a kink in the stencil
        touch = np.zeros(x.shape[0], dtype=bool)
        touch[np.asarray(coords, dtype=int)] = True
        mask &= touch[:, None] | touch[None, :]
    # a kink is within reach of the stencil when |g| <= 1e-7 or |g| <= 4 h |grad g|
    return bool(np.any((np.abs(G) < 1e-7)[mask]) or np.any((np.abs(G) <= 4.0 * h * D1)[mask]))


def fd_gradient_check(g, f, x, lam=None, h=1e-5, target="lagrangian", rng=None, max_resample=100,
                      coords=None):
    """Max relative error ``|analytic - central| / (1 + |analytic|)``.

    ``target`` selects the function: ``"lagrangian"`` (``L(x, lam)`` with
    the symmetric prefactor), ``"penalty"`` (``Phi``) or ``"flow"`` (the
    state drift of the projected flow against ``-dL/dx`` of the unhalved
    Lagrangian). Points close to a kink of ``Phi`` are resampled by small
    random perturbations. ``coords`` limits the comparison to a subset of
    components, which keeps large populations affordable.
    """
    x = np.asarray(x, dtype=float).copy()
    n = x.shape[0]
    lam = np.zeros((n, n)) if lam is None else np.array(lam, dtype=float)
    np.fill_diagonal(lam, 0.0)
    if target == "penalty":
        rng = np.random.default_rng(0) if rng is None else rng
        tries = 0
        while _near_kink(x, g, h, coords):
            tries += 1
            if tries > max_resample:
                raise RuntimeError("could not find a differentiable evaluation point")
            x = x + rng.normal(scale=1e-3 * (1.0 + np.abs(x)))
        analytic = penalty_subgradient(x, g, f)
        numeric = _central(_terms_penalty(g, f), x, h, coords)
    elif target == "lagrangian":
        analytic = lagrangian_grad_x(x, lam, g, f)
        numeric = _central(_terms_lagrangian(g, f, lam, 0.5), x, h, coords)
    elif target == "flow":
        dx, _ = flow_rhs(FlowState(x, lam), FlowProblem(g=g, f=f))
        analytic = -dx
        numeric = _central(_terms_lagrangian(g, f, lam, 1.0), x, h, coords)
    else:
        raise ValueError(f"unknown target {target!r}")
    sel = slice(None) if coords is None else np.asarray(coords, dtype=int)
    return float(np.max(np.abs(analytic[sel] - numeric[sel]) / (1.0 + np.abs(analytic[sel]))))


# --- exhaustive dual oracle -------------------------------------------------------

@dataclass
class DualOracleResult:
    weights: np.ndarray
    ties: np.ndarray
    agrees: bool
    value: float


def bcd_dual_oracle(x, g, f=None, rule=NeighborhoodRule.ATTRACT, tie_tol=0.0):
    """Optimize ``L(x, lam)`` over all binary ``lam`` by enumeration (``n <= 4``).

    Attract mode minimizes, repel mode maximizes. Pairs with ``|g_ij| <=
    tie_tol`` are ties and are excluded from the comparison with
    :func:`~statenet.core.dual_from_state`.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n > 4:
        raise ConfigError("the exhaustive dual oracle is limited to n <= 4")
    rule = NeighborhoodRule(rule)
    mask = offdiag_mask(n)
    G = measurement_matrix(x, g)
    gvec = G[mask]
    base = 0.0 if f is None else float(np.sum(f.value(x)))
    combos = np.array(list(itertools.product((0.0, 1.0), repeat=gvec.size)))
    values = base + 0.5 * combos @ gvec
    best = int(np.argmin(values) if rule is NeighborhoodRule.ATTRACT else np.argmax(values))
    W = np.zeros((n, n))
    W[mask] = combos[best]
    ties = (np.abs(G) <= tie_tol) & mask
    ref = dual_from_state(x, g, rule).weights
    agrees = bool(np.all((W == ref) | ties))
    return DualOracleResult(W, ties, agrees, float(values[best]))


# --- equilibrium analysis ----------------------------------------------------------

@dataclass
class ClusterReport:
    status: Status
    diverged: bool
    values: list = field(default_factory=list)
    sizes: list = field(default_factory=list)
    separations: list = field(default_factory=list)
    residual: float = float("nan")
    separated_by_eps: bool | None = None
    sign_groups: dict = field(default_factory=dict)
    labels: np.ndarray | None = None

    @property
    def n_clusters(self):
        return len(self.values)


def cluster_labels(x, gap):
    """Single-linkage labels on the line: split wherever consecutive sorted states differ by > ``gap``."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="stable")
    breaks = np.diff(x[order]) > gap
    lab_sorted = np.concatenate([[0], np.cumsum(breaks)])
    labels = np.empty(x.shape[0], dtype=int)
    labels[order] = lab_sorted
    return labels


def _sign_groups(traj):
    x = traj.final_state
    if traj.iterations:
        step = traj.states[-1] - traj.states[-2]
    else:
        step = np.zeros_like(x)
    out = {}
    for name, sel in (("positive", x > 0), ("negative", x < 0)):
        out[name] = {
            "size": int(sel.sum()),
            "mean_step": float(step[sel].mean()) if sel.any() else 0.0,
        }
    return out


def analyze_equilibrium(traj, gap=None, eps=None):
    """Cluster the final profile of a trajectory.

    Parameters
    ----------
    traj : TrajectoryRecord
    gap : float, optional
        Single-linkage threshold; defaults to ``eps / 2`` when ``eps`` is
        given, otherwise ``1e-6 * (1 + spread)``.
    eps : float, optional
        Confidence bound; when given, checks that distinct clusters are more
        than ``eps`` apart.
    """
    x = traj.final_state
    residual = float(np.linalg.norm(traj.states[-1] - traj.states[-2])) if traj.iterations else 0.0
    groups = _sign_groups(traj)
    if traj.status is Status.DIVERGED:
        return ClusterReport(traj.status, True, residual=residual, sign_groups=groups)
    if gap is None:
        gap = 0.5 * float(eps) if eps is not None else 1e-6 * (1.0 + float(np.ptp(x)))
    labels = cluster_labels(x, gap)
    k = labels.max() + 1
    values = [float(x[labels == c].mean()) for c in range(k)]
    sizes = [int(np.count_nonzero(labels == c)) for c in range(k)]
    seps = [values[c + 1] - values[c] for c in range(k - 1)]
    separated = None
    if eps is not None:
        lows = [float(x[labels == c].min()) for c in range(k)]
        highs = [float(x[labels == c].max()) for c in range(k)]
        separated = all(lows[c + 1] - highs[c] > eps for c in range(k - 1))
    return ClusterReport(traj.status, False, values, sizes, seps, residual, separated, groups, labels)


# --- epsilon equilibrium ----------------------------------------------------------

@dataclass
class EpsEquilibriumReport:
    hit_iteration: int | None
    bound: float
    closest: float
    distance: float

    @property
    def passed(self):
        return self.hit_iteration is not None and self.hit_iteration <= self.bound


def eps_iteration_bound(distance, n, G, eps):
    """``d(x0, X) n^2 G^2 / eps^2``."""
    return float(distance) * n * n * G * G / (eps * eps)


def witness_distance(x0, witness):
    """Upper bound on ``d(x0, X)`` from any feasible point ``witness``."""
    return float(np.linalg.norm(np.asarray(x0, dtype=float) - np.asarray(witness, dtype=float)))


def eps_equilibrium_check(traj, g, eps, G, distance):
    """First iteration whose every ``g_ij`` is at most ``eps`` versus the bound."""
    S = traj.states
    n = S.shape[1]
    mask = offdiag_mask(n)
    worst = np.array([measurement_matrix(x, g)[mask].max() if n > 1 else -np.inf for x in S])
    hits = np.flatnonzero(worst <= eps)
    hit = int(hits[0]) if hits.size else None
    return EpsEquilibriumReport(hit, eps_iteration_bound(distance, n, G, eps), float(worst.min()), float(distance))


# --- subgradient distance monitor ---------------------------------------------------

@dataclass
class DistanceReport:
    distances: np.ndarray
    in_range: np.ndarray
    increased: np.ndarray

    @property
    def certified_increases(self):
        return int(np.count_nonzero(self.in_range & self.increased))


def distance_monotonicity(traj, x_star, phi_star, g, f=None, tol=1e-12):
    """Track ``||x^k - x*||`` and whether ``alpha_k`` is in the range
    ``[0, 2 (Phi(x^k) - Phi*) / ||g^k||^2]`` that guarantees non-expansion."""
    S = traj.states
    x_star = np.asarray(x_star, dtype=float)
    dist = np.linalg.norm(S - x_star, axis=1)
    K = S.shape[0] - 1
    in_range = np.zeros(K, dtype=bool)
    for k in range(K):
        sub = penalty_subgradient(S[k], g, f)
        nrm2 = float(np.dot(sub, sub))
        if nrm2 == 0.0:
            continue
        limit = 2.0 * (penalty_phi(S[k], g, f) - phi_star) / nrm2
        in_range[k] = traj.step_sizes[k] <= limit
    increased = dist[1:] > dist[:-1] + tol
    return DistanceReport(dist, in_range, increased)


# --- smoothness audit ----------------------------------------------------------------

@dataclass
class SmoothnessAudit:
    m: float
    max_d11: float
    max_d12: float
    max_d22: float
    max_f2: float

    @property
    def passed(self):
        return max(self.max_d11, self.max_d12, self.max_d22, self.max_f2) <= self.m * (1.0 + 1e-12)


def audit_smoothness(g, f, m, box, n=4, samples=200, seed=0):
    """Sample states in ``box`` and compare every second partial with ``m``."""
    if m is None:
        raise ConfigError("no smoothness bound declared")
    lo, hi = box
    rng = np.random.default_rng(seed)
    size = getattr(g, "n", None) or n
    mask = offdiag_mask(size)
    acc = np.zeros(4)
    for _ in range(samples):
        x = rng.uniform(lo, hi, size=size)
        acc[0] = max(acc[0], np.abs(g.d11(x))[mask].max())
        acc[1] = max(acc[1], np.abs(g.d12(x))[mask].max())
        acc[2] = max(acc[2], np.abs(g.d22(x))[mask].max())
        if f is not None:
            acc[3] = max(acc[3], float(np.abs(f.d2(x)).max()))
    return SmoothnessAudit(float(m), *map(float, acc))
