"""Direct time integration of lattice ODEs.

Independent oracle for the boundary-value solver: fixed-step RK4
trajectories, level-crossing speed measurement, co-moving profile
extraction, and monotonicity checks.  Speed sign follows the wave
ansatz u_n(t) = phi(n + c t) used by the rest of the package, so the
reported c is minus the drift slope of a level crossing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import LatticeModel

__all__ = [
    "SimState",
    "Trajectory",
    "SpeedMeasurement",
    "MonotonicityReport",
    "BlowUpError",
    "NoFrontError",
    "stability_dt_max",
    "front_state",
    "integrate",
    "measure_speed",
    "extract_profile",
    "check_monotonicity",
]


class BlowUpError(RuntimeError):
    def __init__(self, msg, time=None):
        super().__init__(msg)
        self.time = time


class NoFrontError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimState:
    sites: np.ndarray        # shape (M,)
    t: float
    left_values: np.ndarray  # periodic pattern pinned at the left end
    right_values: np.ndarray


@dataclass(frozen=True)
class Trajectory:
    model: LatticeModel
    times: np.ndarray
    states: np.ndarray       # shape (num_snapshots, M)
    left_values: np.ndarray
    right_values: np.ndarray

    @property
    def sites(self) -> int:
        return self.states.shape[1]


@dataclass(frozen=True)
class SpeedMeasurement:
    c_measured: float
    fit_residual: float
    window: tuple[float, float]
    level: float
    component: int


@dataclass(frozen=True)
class MonotonicityReport:
    monotone: bool
    direction: int
    worst_violation: float
    worst_index: int


def _max_reaction_slope(model: LatticeModel, lo=-0.5, hi=1.5) -> float:
    u = np.linspace(lo, hi, 257)
    return max(float(np.max(np.abs(c.deriv(u)))) for c in model.cubics)


def stability_dt_max(model: LatticeModel) -> float:
    """Explicit-step guard 0.25 / (stencil magnitude + reaction slope)."""
    per_site = np.zeros(model.period)
    for (n, _k), a in model.couplings.items():
        per_site[n] += abs(a)
    return 0.25 / (float(np.max(per_site)) + _max_reaction_slope(model))


def front_state(model: LatticeModel, M: int, front_at: float = 0.25,
                left=0.0, right=1.0, width: float = 2.0) -> SimState:
    """Logistic step between the two (periodic) boundary equilibria."""
    left_v = np.resize(np.asarray(left, dtype=float), model.period)
    right_v = np.resize(np.asarray(right, dtype=float), model.period)
    n = np.arange(M)
    s = 1.0 / (1.0 + np.exp(-(n - front_at * M) / width))
    lp = left_v[n % model.period]
    rp = right_v[n % model.period]
    return SimState(sites=lp + s * (rp - lp), t=0.0,
                    left_values=left_v, right_values=right_v)


def _rhs(model: LatticeModel, u: np.ndarray, left_v, right_v, pinned: int) -> np.ndarray:
    M = len(u)
    p = model.k_max
    idx = np.arange(-p, M + p)
    padded = np.empty(M + 2 * p)
    padded[p: p + M] = u
    if p > 0:
        padded[:p] = left_v[idx[:p] % model.period]
        padded[p + M:] = right_v[idx[p + M:] % model.period]
    out = np.zeros(M)
    for (n, k), a in model.couplings.items():
        sel = np.arange(n, M, model.period)
        out[sel] += a * padded[sel + k + p]
    for n in range(model.period):
        sel = np.arange(n, M, model.period)
        out[sel] -= model.cubics[n](u[sel])
    if pinned > 0:
        out[:pinned] = 0.0
        out[-pinned:] = 0.0
    return out


def integrate(model: LatticeModel, init: SimState, dt: float, T: float,
              stride: int = 1) -> Trajectory:
    """Classical RK4 with fixed step; boundary cells pinned every stage."""
    dt_max = stability_dt_max(model)
    if dt > dt_max:
        raise ValueError(f"dt={dt} exceeds the stability guard dt_max={dt_max:.6g}")
    pinned = max(model.k_max, 1)
    u = np.array(init.sites, dtype=float)
    steps = int(round(T / dt))
    times = [init.t]
    states = [u.copy()]
    lv, rv = init.left_values, init.right_values
    for step in range(1, steps + 1):
        k1 = _rhs(model, u, lv, rv, pinned)
        k2 = _rhs(model, u + 0.5 * dt * k1, lv, rv, pinned)
        k3 = _rhs(model, u + 0.5 * dt * k2, lv, rv, pinned)
        k4 = _rhs(model, u + dt * k3, lv, rv, pinned)
        u = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(u)):
            raise BlowUpError(f"non-finite state at t={init.t + step * dt:.6g}",
                              time=init.t + step * dt)
        if step % stride == 0 or step == steps:
            times.append(init.t + step * dt)
            states.append(u.copy())
    return Trajectory(model=model, times=np.array(times), states=np.array(states),
                      left_values=lv, right_values=rv)


def _crossing_position(chain: np.ndarray, positions: np.ndarray, level: float):
    above = chain >= level
    idx = np.flatnonzero(above[:-1] != above[1:])
    if len(idx) == 0:
        return None
    i = idx[0]
    v0, v1 = chain[i], chain[i + 1]
    return float(positions[i] + (level - v0) / (v1 - v0) * (positions[i + 1] - positions[i]))


def measure_speed(traj: Trajectory, level: float = 0.5, component: int = 0,
                  window: float = 0.5) -> SpeedMeasurement:
    """Least-squares drift of the level crossing over the trailing window.

    Returns c in the phi(n + c t) convention (minus the crossing slope).
    """
    N = traj.model.period
    sel = np.arange(component, traj.sites, N)
    n_keep = max(2, int(round(len(traj.times) * window)))
    times = traj.times[-n_keep:]
    positions = []
    for snap in traj.states[-n_keep:]:
        pos = _crossing_position(snap[sel], sel.astype(float), level)
        if pos is None:
            raise NoFrontError(
                f"component {component} does not span level {level} in the fit window")
        positions.append(pos)
    positions = np.array(positions)
    slope, intercept = np.polyfit(times, positions, 1)
    rms = float(np.sqrt(np.mean((positions - (slope * times + intercept)) ** 2)))
    return SpeedMeasurement(c_measured=float(-slope), fit_residual=rms,
                            window=(float(times[0]), float(times[-1])),
                            level=level, component=component)


def extract_profile(traj: Trajectory, c: float, window: float = 0.5,
                    h_out: float = 0.1, margin: float = 2.0):
    """Resample the trajectory onto the co-moving coordinate xi = j + c t.

    Returns (xi grid, mean profile (len(xi), N), scatter, warning flag);
    scatter is the max deviation of any snapshot from the mean, and the
    flag is set when scatter exceeds 0.05 (not a clean traveling wave).
    """
    N = traj.model.period
    n_keep = max(2, int(round(len(traj.times) * window)))
    times = traj.times[-n_keep:]
    snaps = traj.states[-n_keep:]
    j_idx = np.arange(traj.sites // N, dtype=float)
    lo = max(j_idx[0] + c * t for t in times) + margin
    hi = min(j_idx[-1] + c * t for t in times) - margin
    if hi - lo < 10 * h_out:
        raise NoFrontError("co-moving windows of the snapshots barely overlap; "
                           "shorten T or enlarge the lattice")
    xi = np.arange(lo, hi, h_out)
    stacks = np.empty((len(snaps), len(xi), N))
    for s, (t, snap) in enumerate(zip(times, snaps)):
        for i in range(N):
            vals = snap[np.arange(i, traj.sites, N)]
            stacks[s, :, i] = np.interp(xi, j_idx[: len(vals)] + c * t, vals)
    mean = stacks.mean(axis=0)
    scatter = float(np.max(np.abs(stacks - mean[None])))
    return xi, mean, scatter, bool(scatter > 0.05)


def check_monotonicity(values: np.ndarray, tol: float = 1e-8) -> MonotonicityReport:
    """Uniform sign of successive differences, per component, up to tol."""
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    d = np.diff(v, axis=0)
    direction = 1 if float(np.sum(d)) >= 0.0 else -1
    signed = direction * d
    worst = float(np.min(signed))
    flat_index = int(np.argmin(signed))
    return MonotonicityReport(monotone=bool(worst >= -tol), direction=direction,
                              worst_violation=max(0.0, -worst),
                              worst_index=flat_index // v.shape[1])
