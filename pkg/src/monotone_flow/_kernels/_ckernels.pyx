# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: affine penalty-flow stepping and Dykstra projection.

``_pykernels`` is the reference implementation of the same arithmetic; the
two are kept operation-for-operation identical so results agree to rounding.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp, fabs, isfinite, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()

# simple-set kinds shared with _pykernels
DEF K_WHOLE = 0
DEF K_POINT = 1
DEF K_BALL = 2
DEF K_BOX = 3
DEF K_HALFSPACE = 4


cdef struct SimpleSet:
    int kind
    int n
    double* a
    double* b
    double r
    double a_sq


cdef inline void _project(const SimpleSet* s, const double* y, double* out) noexcept nogil:
    cdef int i
    cdef double nd, t
    if s.kind == K_WHOLE:
        for i in range(s.n):
            out[i] = y[i]
    elif s.kind == K_POINT:
        for i in range(s.n):
            out[i] = s.a[i]
    elif s.kind == K_BALL:
        nd = 0.0
        for i in range(s.n):
            t = y[i] - s.a[i]
            nd += t * t
        nd = sqrt(nd)
        if nd <= s.r:
            for i in range(s.n):
                out[i] = y[i]
        else:
            t = s.r / nd
            for i in range(s.n):
                out[i] = s.a[i] + (y[i] - s.a[i]) * t
    elif s.kind == K_BOX:
        for i in range(s.n):
            t = y[i]
            if t < s.a[i]:
                t = s.a[i]
            if t > s.b[i]:
                t = s.b[i]
            out[i] = t
    else:
        t = 0.0
        for i in range(s.n):
            t += s.a[i] * y[i]
        t -= s.r
        if t <= 0.0:
            for i in range(s.n):
                out[i] = y[i]
        else:
            t = t / s.a_sq
            for i in range(s.n):
                out[i] = y[i] - t * s.a[i]


cdef struct Flow:
    int n
    double* M
    double* c
    int has_sel
    int sel_start
    int sel_len
    double sel_scale
    double sel_delta
    double sel_scale2_over_delta
    SimpleSet target
    int has_pen
    double inv_lam
    SimpleSet domain
    double sel_r_last  # selection distance at the last evaluation
    double* work_b     # sel_len scratch
    double* work_n     # n scratch


cdef inline double _rhs(Flow* f, const double* y, double* out, int with_penalty) noexcept nogil:
    """Write the vector field into ``out``; return the penalty distance."""
    cdef int i, j, n = f.n
    cdef double acc, r, coef, dist = 0.0
    for i in range(n):
        acc = f.c[i]
        for j in range(n):
            acc += f.M[i * n + j] * y[j]
        out[i] = acc
    if f.has_sel:
        if f.sel_len == 1 and f.target.kind == K_POINT:
            # scalar block around a point: skip the generic projection
            acc = y[f.sel_start] - f.target.a[0]
            r = fabs(acc)
            f.sel_r_last = r
            if r >= f.sel_delta:
                out[f.sel_start] -= f.sel_scale * acc / r
            elif 2.0 * r > f.sel_delta:
                out[f.sel_start] -= (f.sel_scale2_over_delta - f.sel_scale / r) * acc
        else:
            _project(&f.target, y + f.sel_start, f.work_b)
            r = 0.0
            for i in range(f.sel_len):
                f.work_b[i] = y[f.sel_start + i] - f.work_b[i]
                r += f.work_b[i] * f.work_b[i]
            r = sqrt(r)
            f.sel_r_last = r
            if r >= f.sel_delta:
                coef = f.sel_scale / r
            elif 2.0 * r > f.sel_delta:
                coef = f.sel_scale2_over_delta - f.sel_scale / r
            else:
                coef = 0.0
            if coef != 0.0:
                for i in range(f.sel_len):
                    out[f.sel_start + i] -= coef * f.work_b[i]
    if f.has_pen:
        _project(&f.domain, y, f.work_n)
        acc = 0.0
        for i in range(n):
            f.work_n[i] = y[i] - f.work_n[i]
            acc += f.work_n[i] * f.work_n[i]
        dist = sqrt(acc)
        if with_penalty:
            for i in range(n):
                out[i] -= f.inv_lam * f.work_n[i]
    return dist


cdef inline double _norm(const double* v, int n) noexcept nogil:
    cdef int i
    cdef double acc = 0.0
    for i in range(n):
        acc += v[i] * v[i]
    return sqrt(acc)


cdef void _fill_set(SimpleSet* s, int kind, int n, double[::1] a, double[::1] b, double r):
    cdef int i
    s.kind = kind
    s.n = n
    s.a = &a[0] if a.shape[0] > 0 else NULL
    s.b = &b[0] if b.shape[0] > 0 else NULL
    s.r = r
    s.a_sq = 0.0
    if kind == K_HALFSPACE:
        for i in range(n):
            s.a_sq += a[i] * a[i]


cdef inline void _rk4(Flow* f, double* y, double hh, const double* k1, double* k2,
                      double* k3, double* k4, double* tmp, int with_pen, double* min_r) noexcept nogil:
    """One classical 4-stage step in place; ``min_r`` collects the stage selection distances."""
    cdef int i, n = f.n
    cdef double half = 0.5 * hh, sixth = hh / 6.0
    for i in range(n):
        tmp[i] = y[i] + half * k1[i]
    _rhs(f, tmp, k2, with_pen)
    if f.sel_r_last < min_r[0]:
        min_r[0] = f.sel_r_last
    for i in range(n):
        tmp[i] = y[i] + half * k2[i]
    _rhs(f, tmp, k3, with_pen)
    if f.sel_r_last < min_r[0]:
        min_r[0] = f.sel_r_last
    for i in range(n):
        tmp[i] = y[i] + hh * k3[i]
    _rhs(f, tmp, k4, with_pen)
    if f.sel_r_last < min_r[0]:
        min_r[0] = f.sel_r_last
    for i in range(n):
        y[i] = y[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


cdef inline void _relax(Flow* f, double* y, double* tmp, double decay) noexcept nogil:
    """Exact decay of the penalty part toward the frozen projection."""
    cdef int i
    _project(&f.domain, y, tmp)
    for i in range(f.n):
        y[i] = tmp[i] + (y[i] - tmp[i]) * decay


def integrate_affine(double[:, ::1] M, double[::1] c,
                     int sel_kind, int sel_start, int sel_len,
                     double[::1] sel_a, double[::1] sel_b, double sel_r,
                     double sel_scale, double sel_delta,
                     int pen_kind, double[::1] pen_a, double[::1] pen_b, double pen_r,
                     double lam, int split,
                     double[::1] y0, double h, long n_blocks, long block, long stride,
                     double beta_bound, double coarse_rmin):
    """Fixed-step integration of an affine field with distance selection and penalty.

    Time advances in blocks of ``block`` fine steps of size ``h``. A block is
    taken as one coarse step when every stage keeps the selection distance at
    least ``coarse_rmin``, where the selection is smooth and non-stiff;
    otherwise it is resolved with fine steps. Samples are recorded every ``stride``
    blocks. A non-finite state stops the loop and sets ``status = 1``.
    """
    cdef int n = y0.shape[0]
    cdef long n_rec = n_blocks // stride + 1
    if n_blocks % stride != 0:
        n_rec += 1
    times_arr = np.empty(n_rec)
    states_arr = np.empty((n_rec, n))
    vel_arr = np.empty((n_rec, n))
    vn_arr = np.empty(n_rec)
    pen_arr = np.empty(n_rec)
    dist_arr = np.empty(n_rec)
    cdef double[::1] times = times_arr
    cdef double[:, ::1] states = states_arr
    cdef double[:, ::1] vel = vel_arr
    cdef double[::1] vel_norm = vn_arr
    cdef double[::1] pen = pen_arr
    cdef double[::1] dist_rec = dist_arr

    cdef Flow f
    f.n = n
    f.M = &M[0, 0]
    f.c = &c[0]
    f.has_sel = sel_kind >= 0 and sel_len > 0 and sel_scale != 0.0
    f.sel_start = sel_start
    f.sel_len = sel_len
    f.sel_scale = sel_scale
    f.sel_delta = sel_delta
    f.sel_scale2_over_delta = 2.0 * sel_scale / sel_delta
    f.sel_r_last = INFINITY
    _fill_set(&f.target, sel_kind if sel_kind >= 0 else K_WHOLE, sel_len, sel_a, sel_b, sel_r)
    f.has_pen = pen_kind > 0 and lam > 0.0
    f.inv_lam = 1.0 / lam if lam > 0.0 else 0.0
    _fill_set(&f.domain, pen_kind if pen_kind > 0 else K_WHOLE, n, pen_a, pen_b, pen_r)

    cdef double* buf = <double*> malloc((9 * n + sel_len + 1) * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    cdef double* y = buf
    cdef double* k1 = buf + n
    cdef double* k2 = buf + 2 * n
    cdef double* k3 = buf + 3 * n
    cdef double* k4 = buf + 4 * n
    cdef double* tmp = buf + 5 * n
    cdef double* vnow = buf + 6 * n
    cdef double* ysave = buf + 7 * n
    f.work_n = buf + 8 * n
    f.work_b = buf + 9 * n

    cdef int i, with_pen = 1 - split
    cdef long blk, j, rec = 0, fail_step = -1, since_rec = 0
    cdef long coarse = 0, fine = 0
    cdef int status = 0, coarse_ok
    cdef double t, d, p, excess, vn, r_now, min_r
    cdef double max_vel = 0.0, max_excess = -INFINITY, max_pen = 0.0
    cdef double H = h * block
    cdef double decay = exp(-h / lam) if lam > 0.0 else 0.0
    cdef double decay_H = exp(-H / lam) if lam > 0.0 else 0.0

    for i in range(n):
        y[i] = y0[i]

    with nogil:
        for blk in range(n_blocks + 1):
            for j in range(block):
                t = (blk * block + j) * h
                d = _rhs(&f, y, vnow, 1)
                r_now = f.sel_r_last
                vn = _norm(vnow, n)
                p = f.inv_lam * d
                if vn > max_vel:
                    max_vel = vn
                if p > max_pen:
                    max_pen = p
                if f.has_pen:
                    excess = p - beta_bound * (1.0 - exp(-t / lam))
                    if excess > max_excess:
                        max_excess = excess
                if j == 0:
                    if since_rec == 0 or blk == n_blocks:
                        times[rec] = t
                        for i in range(n):
                            states[rec, i] = y[i]
                        for i in range(n):
                            vel[rec, i] = vnow[i]
                        vel_norm[rec] = vn
                        pen[rec] = p
                        dist_rec[rec] = d
                        rec += 1
                    since_rec += 1
                    if since_rec == stride:
                        since_rec = 0
                    if blk == n_blocks:
                        break
                    coarse_ok = 0
                    if block > 1 and r_now >= coarse_rmin + H * vn:
                        for i in range(n):
                            ysave[i] = y[i]
                        if split:
                            _rhs(&f, y, k1, 0)
                        else:
                            for i in range(n):
                                k1[i] = vnow[i]
                        min_r = r_now
                        _rk4(&f, y, H, k1, k2, k3, k4, tmp, with_pen, &min_r)
                        if split and f.has_pen:
                            _relax(&f, y, tmp, decay_H)
                        _rhs(&f, y, tmp, 0)
                        if f.sel_r_last < min_r:
                            min_r = f.sel_r_last
                        if min_r >= coarse_rmin:
                            coarse_ok = 1
                        else:
                            for i in range(n):
                                y[i] = ysave[i]
                    if coarse_ok:
                        coarse += 1
                        break
                if split:
                    _rhs(&f, y, k1, 0)
                else:
                    for i in range(n):
                        k1[i] = vnow[i]
                min_r = INFINITY
                _rk4(&f, y, h, k1, k2, k3, k4, tmp, with_pen, &min_r)
                if split and f.has_pen:
                    _relax(&f, y, tmp, decay)
                fine += 1
            if blk == n_blocks:
                break
            for i in range(n):
                if not isfinite(y[i]):
                    status = 1
            if status:
                fail_step = blk + 1
                break
    free(buf)
    return {
        "times": times_arr[:rec],
        "states": states_arr[:rec],
        "velocities": vel_arr[:rec],
        "velocity_norm": vn_arr[:rec],
        "penalty": pen_arr[:rec],
        "dist": dist_arr[:rec],
        "max_velocity": max_vel,
        "max_penalty": max_pen,
        "max_penalty_excess": max_excess if f.has_pen else 0.0,
        "status": status,
        "fail_block": fail_step,
        "coarse_steps": coarse,
        "fine_steps": fine,
    }


def dykstra(double[:, ::1] A, double[::1] c, double[::1] x0, double tol, long max_iter):
    """Dykstra's cyclic projection onto ``{x : A x <= c}``.

    Stops when one full sweep moves the iterate and the correction terms by
    at most ``tol`` in total. Returns ``(x, sweeps, converged)``.
    """
    cdef int m = A.shape[0], n = A.shape[1]
    x_arr = np.array(x0, dtype=np.float64, copy=True)
    q_arr = np.zeros((m, n))
    norms_arr = np.einsum("ij,ij->i", np.asarray(A), np.asarray(A))
    cdef double[::1] x = x_arr
    cdef double[:, ::1] q = q_arr
    cdef double[::1] norms = norms_arr
    cdef double* yv = <double*> malloc(n * sizeof(double))
    if yv == NULL:
        raise MemoryError()
    cdef long it
    cdef int i, j
    cdef double s, change, dq, xn
    cdef bint converged = False
    with nogil:
        for it in range(max_iter):
            change = 0.0
            for i in range(m):
                s = 0.0
                for j in range(n):
                    yv[j] = x[j] + q[i, j]
                    s += A[i, j] * yv[j]
                s -= c[i]
                if s > 0.0:
                    s = s / norms[i]
                else:
                    s = 0.0
                for j in range(n):
                    xn = yv[j] - s * A[i, j]
                    dq = yv[j] - xn
                    change += fabs(xn - x[j]) + fabs(dq - q[i, j])
                    x[j] = xn
                    q[i, j] = dq
            if change <= tol:
                converged = True
                break
    free(yv)
    return x_arr, it + 1, bool(converged)
