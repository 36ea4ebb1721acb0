"""Discrete-time state-dependent network dynamics.

Every update family is a primal step on the Lagrangian taken at the network
induced by the current state. Neighborhoods are recomputed from ``x^k``
before each synchronous step and never cached.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    ConfigError,
    EvaluationError,
    NeighborhoodRule,
    adjacency,
    check_state,
    measurement_matrix,
    offdiag_mask,
)
from .lagrangian import (
    DiagonalVariant,
    LyapunovFamily,
    MirrorMap,
    NegativeEntropy,
    TransferFunctions,
    bregman,
    dominating_diagonal,
    lyapunov,
    network_gradient,
    penalty_phi,
)

DRIFT_TOL = 1e-9


class DegenerateStepError(ArithmeticError):
    """A step denominator vanished or lost positivity."""


class Family(str, enum.Enum):
    BCD_MAJORIZE = "bcd_majorize"
    EXACT_QUADRATIC = "exact_quadratic"
    MIRROR = "mirror"
    ASYMMETRIC = "asymmetric"
    TRANSFER = "transfer"
    SUBGRADIENT = "subgradient"
    QUASI_NEWTON = "quasi_newton"


class Status(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    DIVERGED = "diverged"


class ScheduleKind(str, enum.Enum):
    DIMINISHING = "diminishing"
    CONSTANT_EPS = "constant_eps"
    UNIT = "unit"
    FIXED = "fixed"


@dataclass(frozen=True)
class StepSchedule:
    """Step-size rule.

    ``diminishing``: ``alpha_k = gamma_k / ||g^k||`` with ``gamma_k = c/(k+1)``
    (for the quasi-Newton family ``t_k = gamma_k``).
    ``constant_eps``: ``alpha_k = eps / (n^2 G^2)``.
    ``unit``: ``1``. ``fixed``: ``t``.
    """

    kind: ScheduleKind = ScheduleKind.UNIT
    c: float = 1.0
    eps: float | None = None
    grad_bound: float | None = None
    t: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ScheduleKind(self.kind))
        if self.kind is ScheduleKind.DIMINISHING and not self.c > 0:
            raise ConfigError("diminishing schedule needs c > 0")
        if self.kind is ScheduleKind.CONSTANT_EPS:
            if self.eps is None or not self.eps > 0:
                raise ConfigError("constant_eps schedule needs eps > 0")
            if self.grad_bound is None or not self.grad_bound > 0:
                raise ConfigError("constant_eps schedule needs a declared gradient bound G")
        if self.kind is ScheduleKind.FIXED and (self.t is None or not self.t > 0):
            raise ConfigError("fixed schedule needs t > 0")

    def gamma(self, k):
        return self.c / (k + 1.0)

    def step_size(self, k, direction=None, n=None):
        """Step length at iteration ``k`` for a (sub)gradient ``direction``."""
        if self.kind is ScheduleKind.UNIT:
            return 1.0
        if self.kind is ScheduleKind.FIXED:
            return float(self.t)
        if self.kind is ScheduleKind.CONSTANT_EPS:
            if n is None:
                n = len(direction)
            return self.eps / (n * n * self.grad_bound ** 2)
        norm = float(np.linalg.norm(direction)) if direction is not None else 1.0
        if norm == 0.0:
            return 0.0
        return self.gamma(k) / norm


_DEFAULT_RULE = {
    Family.SUBGRADIENT: NeighborhoodRule.REPEL,
    Family.QUASI_NEWTON: NeighborhoodRule.REPEL,
}

_LYAPUNOV = {
    Family.BCD_MAJORIZE: LyapunovFamily.MAJORIZE,
    Family.EXACT_QUADRATIC: LyapunovFamily.MAJORIZE,
    Family.MIRROR: LyapunovFamily.MAJORIZE,
    Family.ASYMMETRIC: LyapunovFamily.ASYMMETRIC,
    Family.TRANSFER: LyapunovFamily.TRANSFER,
    Family.SUBGRADIENT: LyapunovFamily.PENALTY,
    Family.QUASI_NEWTON: LyapunovFamily.PENALTY,
}


@dataclass(frozen=True)
class DynamicsSpec:
    """Which update family to run and with what parameters.

    Parameters
    ----------
    family : Family
    rule : NeighborhoodRule, optional
        Defaults to ``repel`` for the saddle-point families and ``attract``
        otherwise.
    m : float, optional
        Smoothness bound; falls back to the measurement set's declared ``m``.
    schedule : StepSchedule, optional
        Step rule for the subgradient and quasi-Newton families.
    mirror : MirrorMap, optional
        Mirror map for the mirror family (negative entropy by default).
    transfers : TransferFunctions, optional
        Transfer function set for the transfer family.
    transfer_form : {"majorized", "normalized"}
        ``majorized`` divides by ``2 + 4 m sum_j f_ij``; ``normalized`` by
        ``2 m sum_j f_ij`` and is not descent-certified.
    exact_variant : {"degree", "identity"}
        Diagonal used by the exact quadratic family.
    exact_coefficient : float
        Certified drift coefficient ``c`` in ``V drop >= c ||dx||^2`` for the
        exact quadratic family.
    line_search : bool
        Backtracking (halving, Armijo 1e-4) on ``Phi`` for quasi-Newton.
    max_iter : int
    tol : float, optional
        Stop once ``||x^{k+1} - x^k|| < tol``; defaults to
        ``1e-9 * (1 + ||x^0||_inf)``.
    divergence_threshold : float
    log_states : bool
        Run the dynamics on ``ln x`` and report ``exp`` of the iterates.
    penalty_map : MirrorMap, optional
        Bregman coupling map for the asymmetric family; only used to audit
        the hypothesis ``||y - x||_1 <= D_f(y, x) / (n L)`` on each step.
    record_neighbors : bool, optional
        Store full neighbor sets per iteration (default: only when n <= 200).
    """

    family: Family
    rule: NeighborhoodRule | None = None
    m: float | None = None
    schedule: StepSchedule | None = None
    mirror: MirrorMap | None = None
    transfers: TransferFunctions | None = None
    transfer_form: str = "majorized"
    exact_variant: str = "degree"
    exact_coefficient: float = 1.0
    line_search: bool = False
    max_iter: int = 100
    tol: float | None = None
    divergence_threshold: float = 1e12
    log_states: bool = False
    penalty_map: MirrorMap | None = None
    record_neighbors: bool | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        rule = _DEFAULT_RULE.get(self.family, NeighborhoodRule.ATTRACT) if self.rule is None else self.rule
        object.__setattr__(self, "rule", NeighborhoodRule(rule))
        if self.family is Family.MIRROR and self.mirror is None:
            object.__setattr__(self, "mirror", NegativeEntropy())
        if self.family in (Family.SUBGRADIENT, Family.QUASI_NEWTON) and self.schedule is None:
            default = StepSchedule(ScheduleKind.DIMINISHING) if self.family is Family.SUBGRADIENT else StepSchedule()
            object.__setattr__(self, "schedule", default)
        if self.transfer_form not in ("majorized", "normalized"):
            raise ConfigError(f"unknown transfer form {self.transfer_form!r}")
        if self.exact_variant not in ("degree", "identity"):
            raise ConfigError(f"unknown exact variant {self.exact_variant!r}")
        if self.max_iter < 0:
            raise ConfigError("max_iter must be nonnegative")
        if self.tol is not None and not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.family is Family.TRANSFER and self.transfers is None:
            raise ConfigError("the transfer family needs a transfer function set")

    @property
    def lyapunov_family(self):
        return _LYAPUNOV[self.family]

    def resolve_m(self, g):
        m = self.m if self.m is not None else getattr(g, "m", None)
        if self.family in (Family.BCD_MAJORIZE, Family.ASYMMETRIC, Family.TRANSFER, Family.MIRROR):
            if m is None or not m > 0:
                raise ConfigError(f"family {self.family.value} needs a positive smoothness bound m")
        return m

    def with_(self, **changes):
        return replace(self, **changes)


# --- single steps ------------------------------------------------------------

def step_bcd_majorize(x, g, f=None, m=None, rule=NeighborhoodRule.ATTRACT):
    """Majorization step ``x_i - grad_i / (2 m (|N_i| + 1))``."""
    x = np.asarray(x, dtype=float)
    m = g.m if m is None else m
    A = adjacency(x, g, rule)
    Q = dominating_diagonal(x, g, f, m, DiagonalVariant.MAJORIZE, rule=rule).entries
    return x - network_gradient(x, A, g, f) / Q


def step_exact_quadratic(x, g, f=None, variant="degree", rule=NeighborhoodRule.ATTRACT):
    """Exact step for quadratic measurements, ``x - Q^{-1} grad L_k``.

    ``variant="degree"`` uses ``Q = diag(|N_i| + 1)`` (homogeneous HK for
    the bounded-confidence measurement); ``variant="identity"`` uses
    ``Q = I`` (weighted consensus ``x' = (D + A) x``).
    """
    x = np.asarray(x, dtype=float)
    A = adjacency(x, g, rule)
    grad = network_gradient(x, A, g, f)
    if variant == "identity":
        return x - grad
    return x - grad / (A.sum(axis=1) + 1.0)


def step_mirror(x, g, f=None, mirror=None, rule=NeighborhoodRule.ATTRACT):
    """Mirror step solving ``grad Psi(x') = grad Psi(x) - grad L_k(x)``."""
    x = np.asarray(x, dtype=float)
    mirror = NegativeEntropy() if mirror is None else mirror
    if not mirror.in_domain(x):
        raise ValueError(f"state left the domain of the {mirror.name} mirror map")
    A = adjacency(x, g, rule)
    grad = network_gradient(x, A, g, f)
    if isinstance(mirror, NegativeEntropy):
        out = x * np.exp(-grad)
    else:
        out = mirror.inv_grad(mirror.grad(x) - grad)
    if not np.all(np.isfinite(out)) or not mirror.in_domain(out):
        raise EvaluationError("mirror inverse-gradient failed to return a state in the domain")
    return out


def step_asymmetric(x, g, m=None, rule=NeighborhoodRule.ATTRACT):
    """Asymmetric step ``x_i - sum_{j in N_i} dg_ij/dx_i / (m (|N_i| + 1))``."""
    x = np.asarray(x, dtype=float)
    m = g.m if m is None else m
    A = adjacency(x, g, rule)
    return x - network_gradient(x, A, g) / (m * (A.sum(axis=1) + 1.0))


def transfer_weights(x, g, transfers):
    x = np.asarray(x, dtype=float)
    G = measurement_matrix(x, g)
    return transfers.value(np.where(offdiag_mask(x.shape[0]), G, 0.0)) * offdiag_mask(x.shape[0])


def step_transfer(x, g, transfers, m=None, form="majorized"):
    """Change-of-network-variable step with weights ``w_ij = f_ij(g_ij)``.

    ``form="normalized"``: ``x_i - sum_j w_ij dg_ij/dx_i / (2 m sum_j w_ij)``.
    ``form="majorized"``: ``x_i - 2 sum_j w_ij dg_ij/dx_i / (2 + 4 m sum_j w_ij)``.
    """
    x = np.asarray(x, dtype=float)
    m = g.m if m is None else m
    W = transfer_weights(x, g, transfers)
    num = (W * g.d1(x)).sum(axis=1)
    wsum = W.sum(axis=1)
    if form == "normalized":
        if np.any(wsum <= 0.0):
            raise DegenerateStepError("transfer weights sum to zero; the normalized denominator degenerates")
        return x - num / (2.0 * m * wsum)
    if form != "majorized":
        raise ConfigError(f"unknown transfer form {form!r}")
    return x - 2.0 * num / (2.0 + 4.0 * m * wsum)


def step_subgradient(x, g, f=None, schedule=None, k=0, rule=NeighborhoodRule.REPEL):
    """Subgradient step ``x - alpha_k g^k`` on the penalty objective."""
    x = np.asarray(x, dtype=float)
    schedule = StepSchedule(ScheduleKind.DIMINISHING) if schedule is None else schedule
    A = adjacency(x, g, rule)
    direction = network_gradient(x, A, g, f)
    return x - schedule.step_size(k, direction, x.shape[0]) * direction


def quasi_newton_direction(x, g, f=None, rule=NeighborhoodRule.REPEL, A=None):
    x = np.asarray(x, dtype=float)
    if A is None:
        A = adjacency(x, g, rule)
    grad = network_gradient(x, A, g, f)
    denom = 1.0 + (f.d2(x) if f is not None else 0.0) + np.where(A, g.d11(x), 0.0).sum(axis=1)
    if np.any(denom <= 0.0):
        raise DegenerateStepError("quasi-Newton diagonal lost positivity (Hessian dominance violated)")
    return grad / denom, grad


def step_quasi_newton(x, g, f=None, t=1.0, rule=NeighborhoodRule.REPEL):
    """Diagonal quasi-Newton step with the identity added to the Hessian diagonal."""
    x = np.asarray(x, dtype=float)
    d, _ = quasi_newton_direction(x, g, f, rule)
    return x - t * d


def backtracking(x, d, grad, g, f=None, t0=1.0, shrink=0.5, armijo=1e-4, max_halvings=60):
    """Largest ``t = t0 * shrink^p`` with ``Phi(x - t d) <= Phi(x) - armijo t <grad, d>``."""
    phi0 = penalty_phi(x, g, f)
    slope = float(np.dot(grad, d))
    t = t0
    for _ in range(max_halvings):
        if penalty_phi(x - t * d, g, f) <= phi0 - armijo * t * slope:
            return t
        t *= shrink
    return 0.0


# --- drift requirements --------------------------------------------------------

def drift_requirement(spec, g, f, x_prev, x_next):
    """Required Lyapunov drop for one step and whether theory certifies it.

    Returns ``(bound, certified)``; uncertified steps are monitored but a
    shortfall is reported rather than treated as a failure.
    """
    dx = np.asarray(x_next, dtype=float) - np.asarray(x_prev, dtype=float)
    sq = float(np.dot(dx, dx))
    fam = spec.family
    if fam is Family.BCD_MAJORIZE:
        return spec.resolve_m(g) * sq, True
    if fam is Family.EXACT_QUADRATIC:
        return spec.exact_coefficient * sq, True
    if fam is Family.MIRROR:
        m = spec.resolve_m(g)
        n = len(x_prev)
        psi = spec.mirror
        ok = psi.in_domain(x_prev) and psi.in_domain(x_next)
        if ok:
            curv = np.minimum(psi.hess_diag(x_prev), psi.hess_diag(x_next))
            ok = bool(np.all(curv >= 2.0 * m * n))
        return 0.0, ok
    if fam is Family.TRANSFER:
        if spec.transfer_form == "majorized":
            Q = dominating_diagonal(x_prev, g, m=spec.resolve_m(g), variant=DiagonalVariant.TRANSFER,
                                    transfers=spec.transfers).entries
            return 0.5 * float(np.dot(Q * dx, dx)), True
        return 0.0, False
    if fam is Family.QUASI_NEWTON:
        return 0.0, bool(spec.line_search)
    return 0.0, False


def _lyap(spec, g, f, x):
    return lyapunov(x, spec.lyapunov_family, g, f, transfers=spec.transfers)


# --- trajectories ----------------------------------------------------------------

@dataclass
class TrajectoryRecord:
    """Everything recorded along one run.

    ``states`` has ``iterations + 1`` rows; the per-step arrays have
    ``iterations`` entries. ``drift[k] = lyapunov[k] - lyapunov[k + 1]``.
    """

    spec: DynamicsSpec
    states: np.ndarray
    lyapunov: np.ndarray
    drift: np.ndarray
    bound: np.ndarray
    ok: np.ndarray
    certified: np.ndarray
    step_sizes: np.ndarray
    degrees: np.ndarray
    status: Status
    neighbors: list | None = None
    boundary_hits: list = field(default_factory=list)
    hypothesis_ok: np.ndarray | None = None
    message: str = ""

    @property
    def iterations(self):
        return self.states.shape[0] - 1

    @property
    def final_state(self):
        return self.states[-1]

    @property
    def violations(self):
        return int(np.count_nonzero(~self.ok))

    @property
    def certified_violations(self):
        return int(np.count_nonzero(~self.ok & self.certified))

    def internal_states(self):
        """States in the coordinates the dynamics act on (``ln x`` for log runs)."""
        return np.log(self.states) if self.spec.log_states else self.states


def _advance(spec, x, g, f, k, A, m):
    fam = spec.family
    if fam is Family.BCD_MAJORIZE:
        Q = 2.0 * m * (A.sum(axis=1) + 1.0)
        return x - network_gradient(x, A, g, f) / Q, 1.0
    if fam is Family.EXACT_QUADRATIC:
        grad = network_gradient(x, A, g, f)
        if spec.exact_variant == "identity":
            return x - grad, 1.0
        return x - grad / (A.sum(axis=1) + 1.0), 1.0
    if fam is Family.MIRROR:
        return step_mirror(x, g, f, spec.mirror, spec.rule), 1.0
    if fam is Family.ASYMMETRIC:
        return x - network_gradient(x, A, g) / (m * (A.sum(axis=1) + 1.0)), 1.0
    if fam is Family.TRANSFER:
        return step_transfer(x, g, spec.transfers, m, spec.transfer_form), 1.0
    if fam is Family.SUBGRADIENT:
        direction = network_gradient(x, A, g, f)
        alpha = spec.schedule.step_size(k, direction, x.shape[0])
        return x - alpha * direction, alpha
    d, grad = quasi_newton_direction(x, g, f, spec.rule, A=A)
    sched = spec.schedule
    if sched.kind is ScheduleKind.DIMINISHING:
        t = sched.gamma(k)
    else:
        t = sched.step_size(k, grad, x.shape[0])
    if spec.line_search and np.any(d):
        t = backtracking(x, d, grad, g, f, t0=t)
    return x - t * d, t


def run(spec, x0, g, f=None):
    """Iterate ``spec.family`` from ``x0`` and record the Lyapunov ledger.

    Stops when ``||x^{k+1} - x^k|| < tol`` (converged), after ``max_iter``
    steps, or when the state becomes non-finite or exceeds the divergence
    threshold (diverged; the offending state is not stored).
    """
    x = check_state(x0, "x0")
    if spec.log_states:
        if np.any(x <= 0.0):
            raise ConfigError("log-state dynamics need strictly positive initial states")
        x = np.log(x)
    m = spec.resolve_m(g)
    n = x.shape[0]
    tol = spec.tol if spec.tol is not None else 1e-9 * (1.0 + float(np.max(np.abs(x))))
    keep_nbrs = spec.record_neighbors if spec.record_neighbors is not None else n <= 200
    if spec.family is Family.MIRROR and not spec.mirror.in_domain(x):
        raise ConfigError(f"initial state is outside the domain of the {spec.mirror.name} mirror map")

    states = [x.copy()]
    values = [_lyap(spec, g, f, x)]
    drift, bound, ok, cert, steps, degrees, hyp = [], [], [], [], [], [], []
    neighbors = [] if keep_nbrs else None
    hits = []
    status = Status.MAX_ITERS
    message = ""
    for k in range(spec.max_iter):
        G = measurement_matrix(x, g)
        A = adjacency(x, g, spec.rule, G=G)
        if spec.family is Family.QUASI_NEWTON and np.any(G[offdiag_mask(n)] == 0.0):
            hits.append(k)
        try:
            x_new, alpha = _advance(spec, x, g, f, k, A, m)
        except (EvaluationError, FloatingPointError, OverflowError) as exc:
            status, message = Status.DIVERGED, str(exc)
            break
        if not np.all(np.isfinite(x_new)):
            status, message = Status.DIVERGED, f"non-finite state at iteration {k + 1}"
            break
        try:
            v_new = _lyap(spec, g, f, x_new)
        except EvaluationError as exc:
            status, message = Status.DIVERGED, str(exc)
            break
        b, c = drift_requirement(spec, g, f, x, x_new)
        d = values[-1] - v_new
        states.append(x_new)
        values.append(v_new)
        drift.append(d)
        bound.append(b)
        ok.append(d >= b - DRIFT_TOL)
        cert.append(c)
        steps.append(alpha)
        degrees.append(A.sum(axis=1))
        if keep_nbrs:
            neighbors.append([frozenset(np.flatnonzero(row).tolist()) for row in A])
        if spec.family is Family.ASYMMETRIC and spec.penalty_map is not None and g.lipschitz:
            dx = x_new - x
            hyp.append(bregman(spec.penalty_map, x_new, x) >= n * g.lipschitz * np.abs(dx).sum())
        step_norm = float(np.linalg.norm(x_new - x))
        x = x_new
        if np.max(np.abs(x)) > spec.divergence_threshold:
            status, message = Status.DIVERGED, f"|x| exceeded {spec.divergence_threshold:g} at iteration {k + 1}"
            break
        if step_norm < tol:
            status = Status.CONVERGED
            break

    S = np.array(states)
    if spec.log_states:
        S = np.exp(S)
    return TrajectoryRecord(
        spec=spec,
        states=S,
        lyapunov=np.array(values),
        drift=np.array(drift, dtype=float),
        bound=np.array(bound, dtype=float),
        ok=np.array(ok, dtype=bool),
        certified=np.array(cert, dtype=bool),
        step_sizes=np.array(steps, dtype=float),
        degrees=np.array(degrees, dtype=int).reshape(len(degrees), n),
        status=status,
        neighbors=neighbors,
        boundary_hits=hits,
        hypothesis_ok=np.array(hyp, dtype=bool) if hyp else None,
        message=message,
    )
