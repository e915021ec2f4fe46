"""Event-driven exact solution of the 1-D dry-friction oscillator.

Solves ``m x'' + alpha x' + beta x in -sign(x')`` where ``sign(0) = [-1, 1]``.
While sliding with direction ``s`` the shifted coordinate ``x + s/beta``
obeys a damped linear oscillator, solved in closed form. Velocity zeros are
bracketed on a scan grid and refined by bisection. At a velocity zero with
``|beta x| <= 1`` the mass sticks for good.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import OracleFailureError
from .integrate import Trajectory

BISECT_TOL = 1e-12
EVENT_CAP = 10_000


@dataclass(frozen=True)
class _Segment:
    """Sliding (``s = +-1``) or sticking (``s = 0``) on ``[t0, t1]``."""

    t0: float
    t1: float
    s: int
    x0: float
    v0: float


class _Damped:
    """Closed form of ``m y'' + alpha y' + beta y = 0``."""

    def __init__(self, m, alpha, beta, y0, v0):
        self.g = alpha / (2.0 * m)
        w2 = beta / m
        disc = self.g * self.g - w2
        scale = max(self.g * self.g, w2)
        if abs(disc) <= 1e-14 * scale:
            self.kind = "critical"
            self.A, self.B = y0, v0 + self.g * y0
        elif disc < 0:
            self.kind = "under"
            self.wd = math.sqrt(-disc)
            self.A, self.B = y0, (v0 + self.g * y0) / self.wd
        else:
            self.kind = "over"
            sq = math.sqrt(disc)
            self.r1, self.r2 = -self.g + sq, -self.g - sq
            # c1 + c2 = y0, r1 c1 + r2 c2 = v0
            self.c1 = (v0 - self.r2 * y0) / (self.r1 - self.r2)
            self.c2 = y0 - self.c1

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "under":
            e = np.exp(-self.g * t)
            c, s = np.cos(self.wd * t), np.sin(self.wd * t)
            y = e * (self.A * c + self.B * s)
            v = e * ((self.B * self.wd - self.g * self.A) * c - (self.A * self.wd + self.g * self.B) * s)
        elif self.kind == "critical":
            e = np.exp(-self.g * t)
            y = e * (self.A + self.B * t)
            v = e * (self.B - self.g * (self.A + self.B * t))
        else:
            e1, e2 = np.exp(self.r1 * t), np.exp(self.r2 * t)
            y = self.c1 * e1 + self.c2 * e2
            v = self.c1 * self.r1 * e1 + self.c2 * self.r2 * e2
        return y, v

    def scan_step(self):
        if self.kind == "under":
            return math.pi / (16.0 * self.wd)
        if self.kind == "critical":
            return 1.0 / (16.0 * max(self.g, 1e-300))
        return 1.0 / (16.0 * max(abs(self.r1), abs(self.r2)))


@dataclass
class FrictionSolution:
    m: float
    alpha: float
    beta: float
    T: float
    segments: list = field(default_factory=list)

    @property
    def events(self) -> int:
        return max(0, len(self.segments) - 1)

    @property
    def stick_time(self) -> float | None:
        last = self.segments[-1]
        return last.t0 if last.s == 0 else None

    @property
    def limit(self) -> np.ndarray:
        last = self.segments[-1]
        if last.s == 0:
            return np.array([last.x0, 0.0])
        return self.state(self.T)

    def _eval(self, seg, t):
        tau = np.asarray(t, dtype=float) - seg.t0
        if seg.s == 0:
            return np.full_like(tau, seg.x0), np.zeros_like(tau)
        shift = seg.s / self.beta
        sol = _Damped(self.m, self.alpha, self.beta, seg.x0 + shift, seg.v0)
        y, v = sol(tau)
        return y - shift, v

    def state(self, t) -> np.ndarray:
        """``(x, v)`` at time(s) ``t``; shape ``(2,)`` or ``(len(t), 2)``."""
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((t.shape[0], 2))
        starts = np.array([s.t0 for s in self.segments])
        idx = np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(self.segments) - 1)
        for j in np.unique(idx):
            mask = idx == j
            x, v = self._eval(self.segments[j], t[mask])
            out[mask, 0] = x
            out[mask, 1] = v
        return out[0] if scalar else out

    def accel(self, states) -> np.ndarray:
        """Acceleration with the friction force chosen as the sliding sign (zero when stuck)."""
        x, v = states[:, 0], states[:, 1]
        fr = np.sign(v)
        stuck = v == 0.0
        fr[stuck] = -self.beta * x[stuck]
        return (-self.beta * x - self.alpha * v - fr) / self.m

    def trajectory(self, times) -> Trajectory:
        times = np.asarray(times, dtype=float)
        states = self.state(times)
        vel = np.column_stack([states[:, 1], self.accel(states)])
        z = np.zeros(times.shape[0])
        return Trajectory(times, states, vel, z, z.copy(), None,
                          diagnostics={"backend": "oracle", "events": self.events,
                                       "stick_time": self.stick_time, "limit": self.limit.tolist()})

    def energy(self, states, ybar: float = 0.0) -> np.ndarray:
        return 0.5 * self.beta / self.m * (states[:, 0] - ybar) ** 2 + 0.5 * states[:, 1] ** 2


def _next_zero(sol: _Damped, s: int, horizon: float) -> float | None:
    """First ``t in (0, horizon]`` where ``s * v`` stops being positive."""
    dt = sol.scan_step()
    t_prev = 0.0
    n = int(math.ceil(horizon / dt))
    for j in range(1, n + 1):
        t = min(j * dt, horizon)
        if s * float(sol(t)[1]) <= 0.0:
            lo, hi = t_prev, t
            while hi - lo > BISECT_TOL:
                mid = 0.5 * (lo + hi)
                if s * float(sol(mid)[1]) > 0.0:
                    lo = mid
                else:
                    hi = mid
            return hi
        t_prev = t
    return None


def solve_friction(m: float, alpha: float, beta: float, x0: float, v0: float, T: float,
                   event_cap: int = EVENT_CAP) -> FrictionSolution:
    """Piecewise closed-form solution on ``[0, T]``.

    Raises
    ------
    OracleFailureError
        If more than ``event_cap`` velocity zeros occur before ``T``.
    """
    for name, val in (("m", m), ("alpha", alpha), ("beta", beta), ("x0", x0), ("v0", v0), ("T", T)):
        if not math.isfinite(val):
            raise ValueError(f"{name} must be finite")
    if not (m > 0 and beta > 0 and alpha >= 0 and T > 0):
        raise ValueError("need m > 0, beta > 0, alpha >= 0, T > 0")
    out = FrictionSolution(m, alpha, beta, T)
    t, x, v = 0.0, float(x0), float(v0)
    for _ in range(event_cap + 1):
        if v == 0.0 and abs(beta * x) <= 1.0:
            out.segments.append(_Segment(t, T, 0, x, 0.0))
            return out
        s = int(np.sign(v)) if v != 0.0 else int(np.sign(-beta * x))
        shift = s / beta
        sol = _Damped(m, alpha, beta, x + shift, v)
        tz = _next_zero(sol, s, T - t)
        if tz is None:
            out.segments.append(_Segment(t, T, s, x, v))
            return out
        out.segments.append(_Segment(t, t + tz, s, x, v))
        y, _ = sol(tz)
        t, x, v = t + tz, float(y) - shift, 0.0
        if t >= T:
            out.segments.append(_Segment(T, T, 0 if abs(beta * x) <= 1.0 else s, x, 0.0))
            return out
    raise OracleFailureError(f"more than {event_cap} events before T={T}")


def integrate_friction_oracle(m: float, alpha: float, beta: float, x0: float, v0: float, T: float,
                              times=None, n_samples: int = 2001) -> Trajectory:
    """Exact trajectory sampled at ``times`` (default: ``n_samples`` uniform points on ``[0, T]``)."""
    sol = solve_friction(m, alpha, beta, x0, v0, T)
    if times is None:
        times = np.linspace(0.0, T, n_samples)
    traj = sol.trajectory(times)
    traj.diagnostics["solution"] = sol
    return traj
