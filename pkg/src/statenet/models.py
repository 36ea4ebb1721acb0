"""Named model presets.

Each preset wires a measurement set, private costs, a neighborhood rule and
a recommended :class:`~statenet.discrete.DynamicsSpec`. Parameters are
validated strictly: unknown keys and out-of-range values raise
:class:`~statenet.core.ConfigError`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .continuous import FlowProblem
from .core import (
    ConfigError,
    DifferencePolynomial,
    NeighborhoodRule,
    PrivateCosts,
    QuadraticMeasurements,
    bounded_confidence,
)
from .discrete import DynamicsSpec, Family, StepSchedule
from .lagrangian import TRANSFERS, NegativeEntropy, QuadraticMap


@dataclass(frozen=True)
class ModelPreset:
    """A fully wired model.

    Attributes
    ----------
    name : str
    g : MeasurementSet
    f : PrivateCosts or None
    rule : NeighborhoodRule
    dynamics : DynamicsSpec or None
        Recommended discrete dynamics (``None`` for flow-only presets).
    box : tuple of float
        Default initialization interval; also the region on which the
        declared smoothness bound is audited.
    eps : float or ndarray, optional
        Confidence bound(s), used for cluster thresholds.
    expect_convergence : bool
    min_state : float, optional
        Initial states must be strictly larger than this value.
    flow : FlowProblem, optional
    saddle : tuple, optional
        Analytic saddle ``(xbar, lambar)`` of the flow.
    """

    name: str
    g: object
    f: object
    rule: NeighborhoodRule
    dynamics: DynamicsSpec | None
    params: dict = field(default_factory=dict)
    box: tuple = (0.0, 1.0)
    eps: object = None
    expect_convergence: bool = True
    min_state: float | None = None
    flow: FlowProblem | None = None
    saddle: tuple | None = None
    n: int | None = None

    @property
    def m(self):
        return self.g.m

    @property
    def gap_threshold(self):
        """Single-linkage gap for cluster analysis (``eps / 2`` for HK models)."""
        if self.eps is None:
            return None
        return 0.5 * float(np.min(self.eps))

    def check_initial(self, x0):
        x0 = np.asarray(x0, dtype=float)
        if self.n is not None and x0.shape[0] != self.n:
            raise ConfigError(f"preset {self.name} is sized for n={self.n}, got {x0.shape[0]} agents")
        if self.min_state is not None and np.any(x0 <= self.min_state):
            raise ConfigError(f"preset {self.name} needs all initial states > {self.min_state}")
        return x0


def _positive(name, val):
    if val is None or not np.all(np.asarray(val, dtype=float) > 0):
        raise ConfigError(f"parameter {name} must be positive")
    return val


def _nonneg(name, val):
    if not np.all(np.asarray(val, dtype=float) >= 0):
        raise ConfigError(f"parameter {name} must be nonnegative")
    return val


def _box(val):
    lo, hi = (float(v) for v in val)
    if not lo < hi:
        raise ConfigError("box must satisfy lo < hi")
    return lo, hi


def _quadratic_cost(weight, center):
    if not weight:
        return None
    return PrivateCosts(c0=weight * np.asarray(center) ** 2, c1=-2.0 * weight * np.asarray(center), c2=weight)


def _homogeneous_hk(p, n, rng):
    eps = _positive("eps", p["eps"])
    g = bounded_confidence(eps, m=1.0)
    spec = DynamicsSpec(Family.EXACT_QUADRATIC, exact_variant="degree", exact_coefficient=1.0)
    return dict(g=g, f=None, rule=NeighborhoodRule.ATTRACT, dynamics=spec, box=_box(p["box"]), eps=eps)


def _lazy_hk(p, n, rng):
    eps = _positive("eps", p["eps"])
    m = _positive("m", p["m"])
    w = _nonneg("cost_weight", p["cost_weight"])
    # m is taken as declared; audit_smoothness flags a bound below max(1, 2 * cost_weight)
    g = bounded_confidence(eps, m=m)
    spec = DynamicsSpec(Family.BCD_MAJORIZE, m=m)
    return dict(g=g, f=_quadratic_cost(w, p["cost_center"]), rule=NeighborhoodRule.ATTRACT,
                dynamics=spec, box=_box(p["box"]), eps=eps)


def _quartic_hk(p, n, rng):
    eps = _positive("eps", p["eps"])
    lo, hi = _box(p["box"])
    w = _nonneg("cost_weight", p["cost_weight"])
    # |d2 g| = 3 (x_i - x_j)^2 <= 3 * width^2 inside the box, which the dynamics never leave
    m = p["m"] if p["m"] is not None else max(3.0 * (hi - lo) ** 2, 2.0 * w)
    _positive("m", m)
    g = DifferencePolynomial([0.0, 0.0, 0.0, 0.25], c0=-0.25 * eps ** 4, m=m)
    spec = DynamicsSpec(Family.BCD_MAJORIZE, m=m)
    center = p["cost_center"] if p["cost_center"] is not None else 0.5 * (lo + hi)
    return dict(g=g, f=_quadratic_cost(w, center), rule=NeighborhoodRule.ATTRACT,
                dynamics=spec, box=(lo, hi), eps=eps)


def consensus_weights(graph, n, self_weight=0.5):
    """Symmetric row-stochastic weights on a named graph, self-weights on the diagonal."""
    if n is None or n < 2:
        raise ConfigError("a named consensus graph needs n >= 2")
    if not 0.0 <= self_weight < 1.0:
        raise ConfigError("self_weight must lie in [0, 1)")
    adj = np.zeros((n, n))
    if graph == "complete":
        adj[:] = 1.0
    elif graph == "ring":
        for i in range(n):
            adj[i, (i + 1) % n] = adj[(i + 1) % n, i] = 1.0
    elif graph == "path":
        for i in range(n - 1):
            adj[i, i + 1] = adj[i + 1, i] = 1.0
    else:
        raise ConfigError(f"unknown graph {graph!r}; expected complete, ring or path")
    np.fill_diagonal(adj, 0.0)
    # equal off-diagonal weight sized by the largest degree keeps W symmetric
    a = (1.0 - self_weight) / adj.sum(axis=1).max()
    W = a * adj
    np.fill_diagonal(W, 1.0 - W.sum(axis=1))
    return W


def check_consensus_weights(W):
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ConfigError("consensus weights must be a square matrix")
    if np.any(W < 0):
        raise ConfigError("consensus weights must be nonnegative")
    if not np.allclose(W, W.T, atol=1e-12):
        raise ConfigError("consensus weights must be symmetric")
    if not np.allclose(W.sum(axis=1), 1.0, atol=1e-12):
        raise ConfigError("consensus weights must have unit row sums including the self-weight")
    return W


def _weighted_consensus(p, n, rng):
    if p["weights"] is not None:
        W = check_consensus_weights(p["weights"])
    else:
        W = check_consensus_weights(consensus_weights(p["graph"], n, p["self_weight"]))
    n = W.shape[0]
    K = _positive("K", p["K"])
    lo, hi = _box(p["box"])
    A = W.copy()
    np.fill_diagonal(A, 0.0)
    edge = A > 0
    if np.any(0.5 * A[edge] * (hi - lo) ** 2 >= K):
        raise ConfigError("K is too small to keep the graph fixed on the state box")
    c0 = np.where(edge, -K, 1.0)
    g = QuadraticMeasurements(c0=c0, c11=0.5 * A, c12=-A, c22=0.5 * A, m=1.0)
    coef = float(np.min(np.diag(W)))
    spec = DynamicsSpec(Family.EXACT_QUADRATIC, exact_variant="identity", exact_coefficient=coef)
    return dict(g=g, f=None, rule=NeighborhoodRule.ATTRACT, dynamics=spec, box=(lo, hi), n=n,
                params_extra={"weights": W})


def _geometric_averaging(p, n, rng):
    eps = _positive("eps", p["eps"])
    lo, hi = _box(p["box"])
    if lo < 1.0:
        raise ConfigError("geometric averaging needs states > 1")
    g = bounded_confidence(eps, m=1.0)
    spec = DynamicsSpec(Family.EXACT_QUADRATIC, log_states=True)
    return dict(g=g, f=None, rule=NeighborhoodRule.ATTRACT, dynamics=spec, box=(lo, hi),
                eps=eps, min_state=1.0)


def _entropy_multiplicative(p, n, rng):
    if n is None:
        raise ConfigError("entropy_multiplicative needs the number of agents n")
    m = _positive("m", p["m"])
    top = 1.0 / (2.0 * m * n)
    eps = _positive("eps", p["eps"] if p["eps"] is not None else 0.25 * top)
    g = bounded_confidence(eps, m=m)
    spec = DynamicsSpec(Family.MIRROR, mirror=NegativeEntropy(), m=m)
    box = _box(p["box"]) if p["box"] is not None else (0.1 * top, top)
    return dict(g=g, f=None, rule=NeighborhoodRule.ATTRACT, dynamics=spec, box=box, eps=eps, min_state=0.0)


def _complement_hk(p, n, rng):
    eps = np.asarray(_positive("eps", p["eps"]), dtype=float)
    if eps.ndim == 2 and not np.allclose(eps, eps.T):
        raise ConfigError("pairwise confidence bounds must be symmetric")
    if eps.ndim == 1:
        raise ConfigError("complement_hk takes a scalar or a symmetric (n, n) eps table")
    g = bounded_confidence(eps if eps.ndim else float(eps), m=1.0, grad_bound=p["grad_bound"])
    spec = DynamicsSpec(Family.QUASI_NEWTON, schedule=StepSchedule("unit"), line_search=bool(p["line_search"]))
    return dict(g=g, f=None, rule=NeighborhoodRule.REPEL, dynamics=spec, box=_box(p["box"]),
                eps=eps if eps.ndim else float(eps), n=eps.shape[0] if eps.ndim else None)


def _anchored_complement_hk(p, n, rng):
    eps = _positive("eps", p["eps"])
    anchors = np.asarray(p["anchors"], dtype=float)
    if anchors.ndim != 1 or anchors.size < 2:
        raise ConfigError("anchors must list one target per agent")
    w = _positive("cost_weight", p["cost_weight"])
    g = bounded_confidence(eps, m=max(1.0, 2.0 * w))
    spec = DynamicsSpec(Family.SUBGRADIENT, schedule=StepSchedule("diminishing", c=p["c"]))
    return dict(g=g, f=_quadratic_cost(w, anchors), rule=NeighborhoodRule.REPEL, dynamics=spec,
                box=_box(p["box"]), eps=eps, n=anchors.size)


def _heterogeneous_hk(p, n, rng):
    if p["eps"] is not None:
        eps = np.asarray(p["eps"], dtype=float)
        if eps.ndim != 1:
            raise ConfigError("heterogeneous eps must be a vector")
    else:
        lo, hi = (float(v) for v in p["eps_range"])
        if not 0.0 <= lo <= hi:
            raise ConfigError("eps_range must satisfy 0 <= lo <= hi")
        if n is None:
            raise ConfigError("drawing heterogeneous bounds needs n")
        rng = np.random.default_rng(p["eps_seed"]) if p["eps_seed"] is not None else rng
        if rng is None:
            raise ConfigError("drawing heterogeneous bounds needs a seed")
        eps = rng.uniform(lo, hi, size=n)
    _nonneg("eps", eps)
    g = bounded_confidence(eps, m=1.0)
    spec = DynamicsSpec(Family.ASYMMETRIC, m=1.0, penalty_map=QuadraticMap())
    return dict(g=g, f=None, rule=NeighborhoodRule.ATTRACT, dynamics=spec, box=_box(p["box"]),
                eps=eps, n=eps.shape[0], params_extra={"eps": eps})


def _polarization(p, n, rng):
    threshold = float(p["threshold"])
    g = QuadraticMeasurements(c0=-threshold, c12=1.0, m=1.0)
    f = PrivateCosts(c2=0.5)
    # exact quadratic step with Q = diag(|N_i| + 1); the certified drift is 1/2 ||dx||^2
    spec = DynamicsSpec(Family.EXACT_QUADRATIC, exact_variant="degree", exact_coefficient=0.5,
                        max_iter=40)
    return dict(g=g, f=f, rule=NeighborhoodRule.ATTRACT, dynamics=spec, box=_box(p["box"]),
                expect_convergence=False)


def _transfer_hk(p, n, rng):
    eps = _nonneg("eps", p["eps"])
    name = p["transfer"]
    if name not in TRANSFERS:
        raise ConfigError(f"unknown transfer {name!r}; expected one of {sorted(TRANSFERS)}")
    kwargs = {} if p["transfer_param"] is None else {"rate" if name == "exp" else "beta": p["transfer_param"]}
    if name == "reciprocal":
        kwargs = {}
    transfers = TRANSFERS[name](**kwargs)
    g = QuadraticMeasurements(c0=-0.5 * eps ** 2, c11=0.5, c12=-1.0, c22=0.5, m=1.0)
    spec = DynamicsSpec(Family.TRANSFER, transfers=transfers, transfer_form=p["form"], m=1.0)
    return dict(g=g, f=None, rule=NeighborhoodRule.ATTRACT, dynamics=spec, box=_box(p["box"]),
                eps=eps if eps > 0 else None)


def two_agent_saddle(c, eps, halved=False):
    """Analytic saddle of ``f_i = (x_i - c_i)^2 / 2``, ``c = (-c, c)``,
    ``g = (x_1 - x_2)^2 / 2 - eps^2 / 2`` on both ordered pairs.

    Returns ``(xbar, lambar)`` with the symmetric choice ``lambar_12 = lambar_21``.
    """
    s = 0.5 if halved else 1.0
    if c <= eps / 2.0:
        a, lam = c, 0.0
    elif c / (1.0 + 4.0 * s) >= eps / 2.0:
        a, lam = c / (1.0 + 4.0 * s), 1.0
    else:
        a = eps / 2.0
        lam = (c - a) / (4.0 * s * a)
    xbar = np.array([-a, a])
    lambar = np.array([[0.0, lam], [lam, 0.0]])
    return xbar, lambar


def _two_agent_flow(p, n, rng):
    c = _nonneg("c", p["c"])
    eps = _positive("eps", p["eps"])
    g = bounded_confidence(eps, m=1.0)
    f = _quadratic_cost(0.5, np.array([-c, c]))
    problem = FlowProblem(g=g, f=f, halved=bool(p["halved"]))
    return dict(g=g, f=f, rule=NeighborhoodRule.ATTRACT, dynamics=None, box=_box(p["box"]), eps=eps,
                n=2, flow=problem, saddle=two_agent_saddle(c, eps, bool(p["halved"])))


_PRESETS = {
    "homogeneous_hk": (_homogeneous_hk, {"eps": 1.0, "box": (0.0, 100.0)}),
    "lazy_hk": (_lazy_hk, {"eps": 1.0, "m": 1.0, "cost_weight": 0.0, "cost_center": 0.0, "box": (0.0, 100.0)}),
    "quartic_hk": (_quartic_hk, {"eps": 0.3, "m": None, "cost_weight": 0.0, "cost_center": None,
                                 "box": (0.0, 1.0)}),
    "weighted_consensus": (_weighted_consensus, {"weights": None, "graph": "ring", "self_weight": 0.5,
                                                 "K": 1e4, "box": (0.0, 100.0)}),
    "geometric_averaging": (_geometric_averaging, {"eps": 0.5, "box": (1.0, 100.0)}),
    "entropy_multiplicative": (_entropy_multiplicative, {"eps": None, "m": 1.0, "box": None}),
    "complement_hk": (_complement_hk, {"eps": 20.0, "box": (0.0, 100.0), "line_search": False,
                                       "grad_bound": None}),
    "anchored_complement_hk": (_anchored_complement_hk, {"eps": 1.0, "anchors": (0.0, 1.0, 4.0),
                                                         "cost_weight": 0.5, "c": 1.0, "box": (-1.0, 5.0)}),
    "heterogeneous_hk": (_heterogeneous_hk, {"eps": None, "eps_range": (0.0, 10.0), "eps_seed": None,
                                             "box": (0.0, 100.0)}),
    "polarization": (_polarization, {"threshold": 1.0, "box": (-1.0, 1.0)}),
    "transfer_hk": (_transfer_hk, {"eps": 0.0, "transfer": "exp", "transfer_param": None, "form": "majorized",
                                   "box": (0.0, 10.0)}),
    "two_agent_flow": (_two_agent_flow, {"c": 1.0, "eps": 1.0, "halved": False, "box": (-2.0, 2.0)}),
}

PRESET_NAMES = tuple(sorted(_PRESETS))


def preset_defaults(name):
    if name not in _PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {', '.join(PRESET_NAMES)}")
    return dict(_PRESETS[name][1])


def build_preset(name, params=None, n=None, seed=None):
    """Construct a preset by name.

    Parameters
    ----------
    name : str
        One of :data:`PRESET_NAMES`.
    params : dict, optional
        Overrides for the preset's documented parameters.
    n : int, optional
        Number of agents, needed by presets that size tables from it.
    seed : int, optional
        Seed for presets that draw parameters at random.

    Returns
    -------
    ModelPreset
    """
    defaults = preset_defaults(name)
    builder = _PRESETS[name][0]
    params = dict(params or {})
    unknown = sorted(set(params) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown parameter(s) for preset {name}: {', '.join(unknown)}")
    merged = {**defaults, **params}
    # spawned stream so drawn parameters are independent of initial states sharing the seed
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0]) if seed is not None else None
    parts = builder(merged, n, rng)
    extra = parts.pop("params_extra", {})
    resolved = {**merged, **extra}
    preset = ModelPreset(name=name, params=resolved, **parts)
    if n is not None and preset.n is not None and preset.n != n:
        raise ConfigError(f"preset {name} is sized for n={preset.n}, config asks for n={n}")
    return preset
