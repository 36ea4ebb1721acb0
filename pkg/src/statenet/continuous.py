"""Projected primal-dual gradient flow over states and edge weights.

The flow descends the Lagrangian in the transformed states ``p(x)`` and
ascends it in the transformed edge weights ``q(lambda)``; the edge
derivative is projected so that ``lambda`` never leaves ``[0, 1]``.

Convention: by default the Lagrangian is ``sum f_i + sum_{i != j}
lambda_ij g_ij`` (no halving), so ``dlambda_ij/dt = [g_ij]``. With
``halved=True`` the state drift uses the symmetric ``1/2`` prefactor while
the edge drift stays ``[g_ij]``; the Bregman Lyapunov function then weights
its edge term by ``1/2`` so that it remains nonincreasing.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .core import ZERO_COSTS, EvaluationError, check_state, offdiag_mask


class VariableTransform:
    """Nondecreasing scalar map with ``p(0) = 0`` and closed-form antiderivative."""

    name = "transform"

    def value(self, s):
        raise NotImplementedError

    def deriv(self, s):
        raise NotImplementedError

    def primitive(self, s):
        """An antiderivative ``Pi(s)`` with ``Pi' = p``."""
        raise NotImplementedError

    def inverse(self, u):
        raise NotImplementedError

    def antiderivative(self, s, ref):
        """``int_ref^s p(t) dt``."""
        return self.primitive(s) - self.primitive(ref)

    def bregman(self, a, ref):
        """``D(a, ref) = int_ref^a (p(t) - p(ref)) dt`` elementwise."""
        a = np.asarray(a, dtype=float)
        ref = np.asarray(ref, dtype=float)
        return self.antiderivative(a, ref) - self.value(ref) * (a - ref)


class IdentityTransform(VariableTransform):
    name = "identity"

    def value(self, s):
        return np.asarray(s, dtype=float)

    def deriv(self, s):
        return np.ones_like(np.asarray(s, dtype=float))

    def primitive(self, s):
        s = np.asarray(s, dtype=float)
        return 0.5 * s * s

    def inverse(self, u):
        return np.asarray(u, dtype=float)

    def bregman(self, a, ref):
        d = np.asarray(a, dtype=float) - np.asarray(ref, dtype=float)
        return 0.5 * d * d


class OddPowerTransform(VariableTransform):
    """``p(s) = s |s|^(k-1)`` for an odd integer ``k >= 1``."""

    name = "odd_power"

    def __init__(self, k=3):
        if int(k) != k or k < 1 or k % 2 == 0:
            raise ValueError("odd power transform needs an odd integer k >= 1")
        self.k = int(k)

    def value(self, s):
        return np.asarray(s, dtype=float) ** self.k

    def deriv(self, s):
        return self.k * np.asarray(s, dtype=float) ** (self.k - 1)

    def primitive(self, s):
        return np.asarray(s, dtype=float) ** (self.k + 1) / (self.k + 1)

    def inverse(self, u):
        u = np.asarray(u, dtype=float)
        return np.sign(u) * np.abs(u) ** (1.0 / self.k)


class SinhTransform(VariableTransform):
    """``p(s) = sinh(s)``."""

    name = "sinh"

    def value(self, s):
        return np.sinh(np.asarray(s, dtype=float))

    def deriv(self, s):
        return np.cosh(np.asarray(s, dtype=float))

    def primitive(self, s):
        return np.cosh(np.asarray(s, dtype=float))

    def inverse(self, u):
        return np.arcsinh(np.asarray(u, dtype=float))


TRANSFORMS = {
    "identity": IdentityTransform,
    "odd_power": OddPowerTransform,
    "sinh": SinhTransform,
}


def project_box(a, lam):
    """Projection ``[a]^{[0,1]}_lam`` of an edge derivative.

    At ``lam = 1`` only decrease is allowed (``min(0, a)``), at ``lam = 0``
    only increase (``max(0, a)``); interior values pass through.
    """
    a = np.asarray(a, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0.0) or np.any(lam > 1.0):
        raise AssertionError("edge weights left [0, 1]; projection invariant violated")
    out = np.where(lam >= 1.0, np.minimum(0.0, a), a)
    out = np.where(lam <= 0.0, np.maximum(0.0, out), out)
    return out if out.ndim else float(out)


@dataclass
class FlowState:
    x: np.ndarray
    lam: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.x = check_state(self.x, "x")
        lam = np.array(self.lam, dtype=float)
        n = self.x.shape[0]
        if lam.shape != (n, n):
            raise ValueError(f"edge weights must have shape {(n, n)}, got {lam.shape}")
        np.fill_diagonal(lam, 0.0)
        if np.any(lam < 0.0) or np.any(lam > 1.0):
            raise ValueError("edge weights must lie in [0, 1]")
        self.lam = lam
        if not self.t >= 0:
            raise ValueError("time must be nonnegative")

    @classmethod
    def zeros(cls, x):
        x = check_state(x)
        return cls(x, np.zeros((x.shape[0], x.shape[0])))


@dataclass
class FlowProblem:
    """Measurements, costs and variable transforms defining one flow.

    The Lagrangian is evaluated at ``u = p(x)`` and ``v = q(lambda)``, i.e.
    ``f`` and ``g`` are written as functions of the transformed states.
    """

    g: object
    f: object = None
    p: VariableTransform = field(default_factory=IdentityTransform)
    q: VariableTransform = field(default_factory=IdentityTransform)
    halved: bool = False

    @property
    def scale(self):
        return 0.5 if self.halved else 1.0

    def costs(self):
        return ZERO_COSTS if self.f is None else self.f


def flow_rhs(state, problem):
    """Right-hand side ``(dx/dt, dlambda/dt)`` of the projected flow.

    ``dx_i/dt = -dL/du_i`` collects both argument slots of every
    measurement; ``dlambda_ij/dt = [g_ij(u_i, u_j)]^{[0,1]}_{lambda_ij}``.
    """
    u = problem.p.value(state.x)
    v = problem.q.value(state.lam)
    n = u.shape[0]
    mask = offdiag_mask(n)
    v = np.where(mask, v, 0.0)
    s = problem.scale
    G = problem.g.value(u)
    D1 = problem.g.d1(u)
    D2 = problem.g.d2(u)
    bad = ~np.isfinite(G) & mask
    if bad.any():
        i, j = map(int, np.argwhere(bad)[0])
        raise EvaluationError(f"measurement g[{i},{j}] is not finite", pair=(i, j))
    grad = problem.costs().d1(u) + s * ((v * np.where(mask, D1, 0.0)).sum(axis=1)
                                        + (v * np.where(mask, D2, 0.0)).sum(axis=0))
    dx = -grad
    dlam = np.where(mask, project_box(np.where(mask, G, 0.0), state.lam), 0.0)
    if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(dlam))):
        raise EvaluationError("flow right-hand side is not finite")
    return dx, dlam


class Integrator(str, enum.Enum):
    EULER = "euler"
    RK4 = "rk4"


class FlowStatus(str, enum.Enum):
    COMPLETED = "completed"
    DIVERGED = "diverged"


@dataclass
class FlowTrajectory:
    times: np.ndarray
    states: np.ndarray
    lams: np.ndarray
    status: FlowStatus
    message: str = ""

    def state_at(self, k):
        return FlowState(self.states[k], self.lams[k], float(self.times[k]))

    @property
    def final(self):
        return self.state_at(-1)


def _clamp(lam):
    lam = np.clip(lam, 0.0, 1.0)
    np.fill_diagonal(lam, 0.0)
    return lam


def euler_step(state, problem, dt):
    dx, dlam = flow_rhs(state, problem)
    return FlowState(state.x + dt * dx, _clamp(state.lam + dt * dlam), state.t + dt)


def rk4_step(state, problem, dt):
    """Classical RK4; the box clamp is applied to the combined increment only.

    Intermediate stage states are clipped to ``[0, 1]`` solely so that the
    projected edge derivative is defined there.
    """
    def shifted(dx, dlam, h):
        st = object.__new__(FlowState)
        st.x, st.lam, st.t = state.x + h * dx, np.clip(state.lam + h * dlam, 0.0, 1.0), state.t + h
        return st

    k1 = flow_rhs(state, problem)
    k2 = flow_rhs(shifted(*k1, dt / 2), problem)
    k3 = flow_rhs(shifted(*k2, dt / 2), problem)
    k4 = flow_rhs(shifted(*k3, dt), problem)
    dx = (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]) / 6.0
    dlam = (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]) / 6.0
    return FlowState(state.x + dt * dx, _clamp(state.lam + dt * dlam), state.t + dt)


def integrate(s0, problem, dt=1e-3, T=50.0, method=Integrator.EULER, stride=1,
              divergence_threshold=1e12):
    """Integrate the projected flow on ``[0, T]`` with a fixed step.

    Every ``stride``-th state is stored, plus the last one. A step that would
    push any ``|x_i|`` past ``divergence_threshold`` is rejected and the
    run ends with status ``diverged``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not T >= dt:
        raise ValueError("T must be at least dt")
    if stride < 1:
        raise ValueError("stride must be a positive integer")
    step = euler_step if Integrator(method) is Integrator.EULER else rk4_step
    nsteps = int(round(T / dt))
    state = FlowState(s0.x.copy(), s0.lam.copy(), s0.t)
    times, xs, lams = [state.t], [state.x.copy()], [state.lam.copy()]
    status, message = FlowStatus.COMPLETED, ""
    for k in range(1, nsteps + 1):
        try:
            nxt = step(state, problem, dt)
        except (EvaluationError, ValueError) as exc:
            status, message = FlowStatus.DIVERGED, str(exc)
            break
        if np.max(np.abs(nxt.x)) > divergence_threshold:
            status, message = FlowStatus.DIVERGED, f"step {k} rejected: |x| exceeded {divergence_threshold:g}"
            break
        state = nxt
        if k % stride == 0 or k == nsteps:
            times.append(state.t)
            xs.append(state.x.copy())
            lams.append(state.lam.copy())
    return FlowTrajectory(np.array(times), np.array(xs), np.array(lams), status, message)


def continuous_lyapunov(state, saddle, problem, dual_weight=None):
    """Bregman Lyapunov ``sum_i D_P(x_i, xbar_i) + w sum_{i != j} D_Q(lam_ij, lambar_ij)``.

    ``saddle`` is ``(xbar, lambar)``. The edge weight ``w`` defaults to the
    Lagrangian prefactor (1, or 1/2 for ``halved`` problems).
    """
    xbar, lambar = saddle
    xbar = np.asarray(xbar, dtype=float)
    lambar = np.asarray(lambar, dtype=float)
    w = problem.scale if dual_weight is None else dual_weight
    mask = offdiag_mask(state.x.shape[0])
    vx = float(np.sum(problem.p.bregman(state.x, xbar)))
    vl = float(np.sum(problem.q.bregman(state.lam[mask], lambar[mask])))
    return vx + w * vl


def rhs_norm(state, problem):
    dx, dlam = flow_rhs(state, problem)
    return float(np.sqrt(np.dot(dx, dx) + np.sum(dlam * dlam)))


@dataclass
class SaddleSearch:
    x: np.ndarray
    lam: np.ndarray
    residual: float
    converged: bool


def find_saddle(s0, problem, dt=1e-3, horizon=None, tol=1e-8):
    """Approximate a saddle by integrating to ``horizon`` (default ``1e4 * dt``).

    The result is flagged unconverged when the final projected right-hand
    side is not below ``tol``.
    """
    horizon = 1e4 * dt if horizon is None else horizon
    traj = integrate(s0, problem, dt=dt, T=horizon, stride=max(1, int(round(horizon / dt))))
    end = traj.final
    res = rhs_norm(end, problem)
    return SaddleSearch(end.x, end.lam, res, bool(res < tol and traj.status is FlowStatus.COMPLETED))
