"""Pure-Python twin of ``_ckernels``.

The arithmetic mirrors the compiled loops term by term (same summation
order, no fused operations) so both back ends agree to rounding.
"""

from __future__ import annotations

import math

import numpy as np

K_WHOLE = 0
K_POINT = 1
K_BALL = 2
K_BOX = 3
K_HALFSPACE = 4


class _SimpleSet:
    __slots__ = ("kind", "n", "a", "b", "r", "a_sq")

    def __init__(self, kind, n, a, b, r):
        self.kind = kind
        self.n = n
        self.a = [float(v) for v in a]
        self.b = [float(v) for v in b]
        self.r = float(r)
        self.a_sq = 0.0
        if kind == K_HALFSPACE:
            for v in self.a:
                self.a_sq += v * v

    def project(self, y):
        kind = self.kind
        n = self.n
        if kind == K_WHOLE:
            return list(y)
        if kind == K_POINT:
            return list(self.a)
        a = self.a
        if kind == K_BALL:
            nd = 0.0
            for i in range(n):
                t = y[i] - a[i]
                nd += t * t
            nd = math.sqrt(nd)
            if nd <= self.r:
                return list(y)
            t = self.r / nd
            return [a[i] + (y[i] - a[i]) * t for i in range(n)]
        if kind == K_BOX:
            b = self.b
            out = []
            for i in range(n):
                t = y[i]
                if t < a[i]:
                    t = a[i]
                if t > b[i]:
                    t = b[i]
                out.append(t)
            return out
        t = 0.0
        for i in range(n):
            t += a[i] * y[i]
        t -= self.r
        if t <= 0.0:
            return list(y)
        t = t / self.a_sq
        return [y[i] - t * a[i] for i in range(n)]


class _Flow:
    def __init__(self, M, c, sel, pen, inv_lam):
        self.n = len(c)
        self.M = [[float(v) for v in row] for row in M]
        self.c = [float(v) for v in c]
        self.sel = sel  # (start, length, scale, delta, set) or None
        self.pen = pen  # set or None
        self.inv_lam = inv_lam
        self.sel_r_last = math.inf

    def rhs(self, y, with_penalty):
        n = self.n
        out = []
        for i in range(n):
            acc = self.c[i]
            row = self.M[i]
            for j in range(n):
                acc += row[j] * y[j]
            out.append(acc)
        if self.sel is not None:
            start, length, scale, delta, target, scale2_over_delta = self.sel
            if length == 1 and target.kind == K_POINT:
                acc = y[start] - target.a[0]
                r = abs(acc)
                self.sel_r_last = r
                if r >= delta:
                    out[start] -= scale * acc / r
                elif 2.0 * r > delta:
                    out[start] -= (scale2_over_delta - scale / r) * acc
            else:
                block = y[start:start + length]
                p = target.project(block)
                w = [block[i] - p[i] for i in range(length)]
                r = 0.0
                for v in w:
                    r += v * v
                r = math.sqrt(r)
                self.sel_r_last = r
                if r >= delta:
                    coef = scale / r
                elif 2.0 * r > delta:
                    coef = scale2_over_delta - scale / r
                else:
                    coef = 0.0
                if coef != 0.0:
                    for i in range(length):
                        out[start + i] -= coef * w[i]
        dist = 0.0
        if self.pen is not None:
            p = self.pen.project(y)
            w = [y[i] - p[i] for i in range(n)]
            acc = 0.0
            for v in w:
                acc += v * v
            dist = math.sqrt(acc)
            if with_penalty:
                for i in range(n):
                    out[i] -= self.inv_lam * w[i]
        return out, dist


def _norm(v):
    acc = 0.0
    for x in v:
        acc += x * x
    return math.sqrt(acc)


def _rk4(flow, y, hh, k1, with_pen):
    n = flow.n
    half = 0.5 * hh
    sixth = hh / 6.0
    min_r = math.inf
    k2 = flow.rhs([y[i] + half * k1[i] for i in range(n)], with_pen)[0]
    min_r = min(min_r, flow.sel_r_last)
    k3 = flow.rhs([y[i] + half * k2[i] for i in range(n)], with_pen)[0]
    min_r = min(min_r, flow.sel_r_last)
    k4 = flow.rhs([y[i] + hh * k3[i] for i in range(n)], with_pen)[0]
    min_r = min(min_r, flow.sel_r_last)
    y = [y[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) for i in range(n)]
    return y, min_r


def _relax(flow, y, decay):
    q = flow.pen.project(y)
    return [q[i] + (y[i] - q[i]) * decay for i in range(flow.n)]


def integrate_affine(M, c, sel_kind, sel_start, sel_len, sel_a, sel_b, sel_r,
                     sel_scale, sel_delta, pen_kind, pen_a, pen_b, pen_r,
                     lam, split, y0, h, n_blocks, block, stride, beta_bound,
                     coarse_rmin):
    """Reference implementation of the compiled ``integrate_affine``."""
    n = len(y0)
    sel = None
    if sel_kind >= 0 and sel_len > 0 and sel_scale != 0.0:
        sel = (sel_start, sel_len, float(sel_scale), float(sel_delta),
               _SimpleSet(sel_kind, sel_len, sel_a, sel_b, sel_r),
               2.0 * float(sel_scale) / float(sel_delta))
    has_pen = pen_kind > 0 and lam > 0.0
    pen = _SimpleSet(pen_kind, n, pen_a, pen_b, pen_r) if has_pen else None
    inv_lam = 1.0 / lam if lam > 0.0 else 0.0
    flow = _Flow(M, c, sel, pen, inv_lam)

    times, states, vel, vns, pens, dists = [], [], [], [], [], []
    y = [float(v) for v in y0]
    max_vel = 0.0
    max_pen = 0.0
    max_excess = -math.inf
    H = h * block
    decay = math.exp(-h / lam) if lam > 0.0 else 0.0
    decay_H = math.exp(-H / lam) if lam > 0.0 else 0.0
    status = 0
    fail_block = -1
    coarse = 0
    fine = 0
    since_rec = 0
    with_pen = 0 if split else 1
    for blk in range(n_blocks + 1):
        for j in range(block):
            t = (blk * block + j) * h
            vnow, d = flow.rhs(y, True)
            r_now = flow.sel_r_last
            vn = _norm(vnow)
            p = inv_lam * d
            if vn > max_vel:
                max_vel = vn
            if p > max_pen:
                max_pen = p
            if has_pen:
                excess = p - beta_bound * (1.0 - math.exp(-t / lam))
                if excess > max_excess:
                    max_excess = excess
            if j == 0:
                if since_rec == 0 or blk == n_blocks:
                    times.append(t)
                    states.append(list(y))
                    vel.append(list(vnow))
                    vns.append(vn)
                    pens.append(p)
                    dists.append(d)
                since_rec += 1
                if since_rec == stride:
                    since_rec = 0
                if blk == n_blocks:
                    break
                if block > 1 and r_now >= coarse_rmin + H * vn:
                    k1 = flow.rhs(y, False)[0] if split else vnow
                    y_try, min_r = _rk4(flow, y, H, k1, with_pen)
                    min_r = min(min_r, r_now)
                    if split and has_pen:
                        y_try = _relax(flow, y_try, decay_H)
                    flow.rhs(y_try, False)
                    min_r = min(min_r, flow.sel_r_last)
                    if min_r >= coarse_rmin:
                        y = y_try
                        coarse += 1
                        break
            k1 = flow.rhs(y, False)[0] if split else vnow
            y, _ = _rk4(flow, y, h, k1, with_pen)
            if split and has_pen:
                y = _relax(flow, y, decay)
            fine += 1
        if blk == n_blocks:
            break
        if not all(math.isfinite(v) for v in y):
            status = 1
            fail_block = blk + 1
            break
    return {
        "times": np.asarray(times, dtype=float),
        "states": np.asarray(states, dtype=float).reshape(len(states), n),
        "velocities": np.asarray(vel, dtype=float).reshape(len(vel), n),
        "velocity_norm": np.asarray(vns, dtype=float),
        "penalty": np.asarray(pens, dtype=float),
        "dist": np.asarray(dists, dtype=float),
        "max_velocity": max_vel,
        "max_penalty": max_pen,
        "max_penalty_excess": max_excess if has_pen else 0.0,
        "status": status,
        "fail_block": fail_block,
        "coarse_steps": coarse,
        "fine_steps": fine,
    }


def dykstra(A, c, x0, tol, max_iter):
    """Reference implementation of the compiled ``dykstra``."""
    A = np.ascontiguousarray(A, dtype=float)
    m, n = A.shape
    rows = [list(map(float, r)) for r in A]
    cc = [float(v) for v in c]
    norms = [sum(v * v for v in r) for r in rows]
    x = [float(v) for v in x0]
    q = [[0.0] * n for _ in range(m)]
    converged = False
    it = 0
    for it in range(max_iter):
        change = 0.0
        for i in range(m):
            a = rows[i]
            qi = q[i]
            s = 0.0
            yv = [0.0] * n
            for j in range(n):
                yv[j] = x[j] + qi[j]
                s += a[j] * yv[j]
            s -= cc[i]
            s = s / norms[i] if s > 0.0 else 0.0
            for j in range(n):
                xn = yv[j] - s * a[j]
                dq = yv[j] - xn
                change += abs(xn - x[j]) + abs(dq - qi[j])
                x[j] = xn
                qi[j] = dq
        if change <= tol:
            converged = True
            break
    return np.asarray(x, dtype=float), it + 1, converged
