"""Evolution flows on positive conformal factors.

yamabe   du/dt = -u^(-4/(n-2)) * ((-k/-r) L u - K u^q), decreases J on X
exit     du/dt = (K - kbar) u, kbar the K-average in the metric of u; keeps
         the critical volume and pushes k upward
inverse  the exit flow run backwards

All steps are explicit RK4. The yamabe step size is capped by the spectral
stability bound of its diffusion term.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .conformal import CurvatureField, compute_rk, exponents, grad_J, in_X, normalize
from .errors import DomainError, NoProgressError, PositivityError, StallError
from .grid import TorusGrid

DT_MIN = 1e-12
MAX_HALVINGS = 20
CROSSING_TOL = 1e-8
RK4_STABILITY = 2.5  # below the 2.785 real-axis limit


class FlowKind(enum.Enum):
    YAMABE = "yamabe"
    EXIT = "exit"
    INVERSE = "inverse"


def _kind(kind) -> FlowKind:
    return kind if isinstance(kind, FlowKind) else FlowKind(kind)


def k_bar(grid: TorusGrid, u, K: CurvatureField) -> float:
    p, _ = exponents(grid.n)
    up = u**p
    return grid.integrate(K.K * up) / grid.integrate(up)


def rhs(grid: TorusGrid, u, K: CurvatureField, kind) -> np.ndarray:
    kind = _kind(kind)
    if np.any(u <= 0):
        raise PositivityError("right-hand side needs u > 0")
    if kind is FlowKind.YAMABE:
        n = grid.n
        _, q = exponents(n)
        r, k = compute_rk(grid, u, K)
        if not in_X(r, k):
            raise DomainError(f"yamabe flow left X: r = {r:.3e}, k = {k:.3e}")
        return -u ** (-4.0 / (n - 2)) * ((k / r) * grid.apply_L(u) - K.K * u**q)
    sign = 1.0 if kind is FlowKind.EXIT else -1.0
    return sign * (K.K - k_bar(grid, u, K)) * u


def flow_step(grid: TorusGrid, u, K: CurvatureField, kind, dt: float, renormalize: bool = False) -> np.ndarray:
    """One RK4 step; PositivityError if the result is not strictly positive."""
    f = lambda x: rhs(grid, x, K, kind)
    k1 = f(u)
    k2 = f(u + 0.5 * dt * k1)
    k3 = f(u + 0.5 * dt * k2)
    k4 = f(u + dt * k3)
    out = u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(out > 0):
        raise PositivityError(f"min u = {out.min():.3e} after step dt = {dt:.3e}")
    if renormalize:
        out = normalize(grid, out)
    return out


def dtk_closed_form(grid: TorusGrid, u, K: CurvatureField, kind) -> float:
    """Time derivative of k along the flow, from its integral formula."""
    kind = _kind(kind)
    p, _ = exponents(grid.n)
    if np.any(u <= 0):
        raise PositivityError("dtk needs u > 0")
    up = u**p
    if kind is FlowKind.YAMABE:
        r, k = compute_rk(grid, u, K)
        if not in_X(r, k):
            raise DomainError("yamabe dtk needs u in X")
        return p * (grid.integrate(K.K**2 * up) - (k / r) * grid.integrate(K.K * grid.apply_L(u) * u))
    sign = 1.0 if kind is FlowKind.EXIT else -1.0
    return sign * p * grid.integrate(K.K * (K.K - k_bar(grid, u, K)) * up)


def stable_dt(grid: TorusGrid, u, K: CurvatureField) -> float:
    """Largest yamabe RK4 step the stiffest Fourier mode tolerates."""
    r, k = compute_rk(grid, u, K)
    coeff = (k / r) * float(np.max(u ** (-4.0 / (grid.n - 2))))
    stiff = coeff * grid.cn * grid.n * (np.pi / grid.h) ** 2
    return RK4_STABILITY / stiff


# traces -------------------------------------------------------------------------
@dataclass
class FlowConfig:
    dt: float = 1e-3
    t_max: float = 1.0
    sample_every: int = 1
    renormalize: bool = True
    k_level: float | None = None
    j_level: float | None = None
    grad_tol: float | None = None
    max_steps: int = 10**7

    def __post_init__(self):
        if not self.dt > 0 or not self.t_max >= 0:
            raise ValueError("dt must be positive and t_max non-negative")
        if self.sample_every < 1:
            raise ValueError("sample_every must be >= 1")


@dataclass
class FlowTrace:
    kind: str
    samples: list = field(default_factory=list)
    event: str = "failed"
    event_level: float | None = None
    t_end: float = 0.0
    u: np.ndarray | None = None
    steps: int = 0
    max_J_increase: float = 0.0
    message: str = ""
    phases: list = field(default_factory=list)

    COLUMNS = ("t", "r", "k", "J", "min_u", "max_u", "volume", "event")

    def column(self, name: str) -> np.ndarray:
        return np.array([s[name] for s in self.samples], dtype=float)

    def rows(self):
        return [[s[c] if c != "event" else s.get("event", "") for c in self.COLUMNS] for s in self.samples]

    def extend(self, other: "FlowTrace", t0: float):
        for s in other.samples[1:] if self.samples else other.samples:
            self.samples.append(dict(s, t=s["t"] + t0))


def diagnostics(grid: TorusGrid, u, K: CurvatureField, t: float) -> dict:
    p, _ = exponents(grid.n)
    r, k = compute_rk(grid, u, K)
    J = (-k) / (-r) ** (grid.n / (grid.n - 2.0)) if in_X(r, k) else float("nan")
    return {"t": t, "r": r, "k": k, "J": J, "min_u": float(u.min()), "max_u": float(u.max()),
            "volume": grid.integrate(u**p)}


def _level_gap(diag, config: FlowConfig, kind: FlowKind) -> dict:
    """Signed distances to each armed level; a crossing is a sign change to >= 0."""
    out = {}
    if config.k_level is not None:
        out["k"] = diag["k"] - config.k_level
    if config.j_level is not None and kind is FlowKind.YAMABE:
        out["J"] = config.j_level - diag["J"]
    return out


def _event_name(which: str, config: FlowConfig) -> tuple[str, float]:
    if which == "k":
        return ("hit_k_zero" if config.k_level == 0 else "hit_k_level"), config.k_level
    return "hit_J_level", config.j_level


def run_flow(grid: TorusGrid, u0, K: CurvatureField, kind, config: FlowConfig | None = None,
             stop: Callable | None = None) -> FlowTrace:
    """Integrate until a level is crossed, the gradient is small, t_max, or ``stop`` fires.

    ``stop(t, u, diag)`` returns an event name to end the run, or None.
    """
    kind = _kind(kind)
    config = config or FlowConfig()
    u = grid.check_field(u0).copy()
    if np.any(u <= 0):
        raise PositivityError("initial state is not positive")
    renorm = config.renormalize and kind is FlowKind.YAMABE
    if renorm:
        u = normalize(grid, u)
    trace = FlowTrace(kind.value)
    t = 0.0
    diag = diagnostics(grid, u, K, t)
    trace.samples.append(diag)

    def finish(event, level=None, message=""):
        trace.event, trace.event_level, trace.t_end, trace.u = event, level, t, u
        if trace.samples[-1]["t"] != t:
            trace.samples.append(diagnostics(grid, u, K, t))
        trace.samples[-1]["event"] = event
        trace.message = message
        return trace

    gaps = _level_gap(diag, config, kind)
    for which, g in gaps.items():
        if g >= 0:
            return finish(*_event_name(which, config))
    dt = config.dt
    for step in range(1, config.max_steps + 1):
        if t >= config.t_max - 1e-15:
            return finish("time_limit")
        if kind is FlowKind.YAMABE:
            if config.grad_tol is not None:
                if grid.w_neg1(grad_J(grid, u, K)) <= config.grad_tol:
                    return finish("converged")
            dt_try = min(config.dt, stable_dt(grid, u, K), config.t_max - t)
        else:
            dt_try = min(config.dt, config.t_max - t)
        for _ in range(MAX_HALVINGS + 1):
            if dt_try < DT_MIN:
                raise StallError(f"step size collapsed below {DT_MIN:g} at t = {t:.6g}")
            try:
                u_new = flow_step(grid, u, K, kind, dt_try, renorm)
                break
            except (PositivityError, DomainError):
                dt_try *= 0.5
        else:
            raise StallError(f"{MAX_HALVINGS} halvings did not give an admissible step at t = {t:.6g}")
        dt = dt_try
        new = diagnostics(grid, u_new, K, t + dt)
        new_gaps = _level_gap(new, config, kind)
        crossed = [w for w, g in new_gaps.items() if g >= 0]
        if crossed:
            which = crossed[0]
            u, t, new = _bisect_crossing(grid, u, K, kind, t, dt, renorm, config, which)
            if kind is FlowKind.YAMABE and np.isfinite(new["J"]):
                trace.max_J_increase = max(trace.max_J_increase, new["J"] - trace.samples[-1]["J"])
            trace.samples.append(new)
            trace.steps = step
            return finish(*_event_name(which, config))
        if kind is not FlowKind.INVERSE and np.isfinite(new["J"]) and np.isfinite(diag["J"]):
            trace.max_J_increase = max(trace.max_J_increase, new["J"] - diag["J"])
        u, t, diag = u_new, t + dt, new
        trace.steps = step
        if step % config.sample_every == 0:
            trace.samples.append(diag)
        if stop is not None:
            ev = stop(t, u, diag)
            if ev:
                if trace.samples[-1] is not diag:
                    trace.samples.append(diag)
                return finish(ev)
    return finish("failed", message="step budget exhausted")


def _bisect_crossing(grid, u, K, kind, t, dt, renorm, config, which):
    """Shrink the last step until the level is met to CROSSING_TOL in time."""
    lo, hi = 0.0, dt
    best = None
    while hi - lo > CROSSING_TOL:
        mid = 0.5 * (lo + hi)
        trial = flow_step(grid, u, K, kind, mid, renorm)
        d = diagnostics(grid, trial, K, t + mid)
        if _level_gap(d, config, kind)[which] >= 0:
            hi, best = mid, (trial, d)
        else:
            lo = mid
    if best is None:
        trial = flow_step(grid, u, K, kind, hi, renorm)
        best = (trial, diagnostics(grid, trial, K, t + hi))
    return best[0], t + hi, best[1]


# region-switching flow ---------------------------------------------------------
@dataclass
class CombinedConfig:
    gamma0: float = 0.05
    L_cap: float = np.inf
    dt: float = 1e-3
    t_max: float = 50.0
    renormalize: bool = True
    grad_tol: float = 1e-14
    zero_tol: float = 1e-10

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise ValueError("gamma0 must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")


def region_of(r: float, k: float, config: CombinedConfig) -> str:
    if abs(k) <= config.zero_tol and r < 0:
        return "D3"
    if -k > config.gamma0:
        return "D1"
    if 0 < -k <= config.gamma0:
        return "D2"
    raise DomainError(f"state with r = {r:.3e}, k = {k:.3e} lies in no region")


def combined_flow(grid: TorusGrid, u0, K: CurvatureField, config: CombinedConfig | None = None) -> FlowTrace:
    """Yamabe flow down to the strip -k = gamma0, then exit flow to k = 0."""
    config = config or CombinedConfig()
    u = grid.check_field(u0)
    r, k = compute_rk(grid, u, K)
    region = region_of(r, k, config)
    out = FlowTrace("combined")
    phases = []
    t0 = 0.0
    if region == "D1":
        J = (-k) / (-r) ** (grid.n / (grid.n - 2.0))
        if J > config.L_cap:
            raise DomainError(f"J = {J:.4g} exceeds the cap {config.L_cap:.4g}")
        fc = FlowConfig(dt=config.dt, t_max=config.t_max, renormalize=config.renormalize,
                        k_level=-config.gamma0, grad_tol=config.grad_tol)
        tr = run_flow(grid, u, K, FlowKind.YAMABE, fc)
        phases.append("yamabe")
        out.extend(tr, t0)
        t0 += tr.t_end
        u = tr.u
        out.max_J_increase = tr.max_J_increase
        if tr.event != "hit_k_level":
            # a critical point of J in the sublevel: the flow cannot reach the strip
            out.event = tr.event
            out.message = str(NoProgressError("yamabe phase ended without reaching the strip")) \
                if tr.event == "converged" else tr.message
            out.u, out.t_end = u, t0
            out.phases = phases
            return out
        region = "D2"
    if region == "D2":
        fc = FlowConfig(dt=config.dt, t_max=config.t_max, renormalize=False, k_level=0.0)
        tr = run_flow(grid, u, K, FlowKind.EXIT, fc)
        phases.append("exit")
        out.extend(tr, t0)
        t0 += tr.t_end
        out.event, out.u, out.t_end = tr.event, tr.u, t0
        out.phases = phases
        return out
    out.samples.append(dict(diagnostics(grid, u, K, 0.0), event="hit_k_zero"))
    out.event, out.u, out.t_end = "hit_k_zero", u, 0.0
    out.phases = phases
    return out


# homotopy to the constant --------------------------------------------------------
def homotopy_path(grid: TorusGrid, u, tau: float) -> np.ndarray:
    """(tau + (1 - tau) u^p)^(1/p) before normalization."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    p, _ = exponents(grid.n)
    return (tau + (1.0 - tau) * u**p) ** (1.0 / p)


def null_homotopy(grid: TorusGrid, u, K: CurvatureField, tau: float) -> np.ndarray:
    u = grid.check_field(u)
    if np.any(u <= 0):
        raise DomainError("homotopy needs u > 0")
    r, k = compute_rk(grid, u, K)
    if not in_X(r, k):
        raise DomainError(f"u is not in X: r = {r:.3e}, k = {k:.3e}")
    return normalize(grid, homotopy_path(grid, u, tau))
