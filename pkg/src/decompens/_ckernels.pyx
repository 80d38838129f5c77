# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sifting kernels. Semantics match ``_pykernels`` bit for bit."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


def extrema_indices(x):
    cdef const double[::1] v = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0]
    out_max = np.empty(n, dtype=np.intp)
    out_min = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] mx = out_max
    cdef Py_ssize_t[::1] mn = out_min
    cdef Py_ssize_t nmax = 0, nmin = 0
    cdef Py_ssize_t i = 0, prev = -1, start
    cdef int prev_up = 0, up
    cdef double d
    # prev: index of the last nonzero difference, prev_up its direction
    while i < n - 1:
        d = v[i + 1] - v[i]
        if d != 0.0:
            up = d > 0.0
            if prev >= 0 and up != prev_up:
                start = prev + 1
                if prev_up:
                    mx[nmax] = (start + i) // 2
                    nmax += 1
                else:
                    mn[nmin] = (start + i) // 2
                    nmin += 1
            prev = i
            prev_up = up
        i += 1
    return out_max[:nmax].copy(), out_min[:nmin].copy()


def zero_crossings(x):
    cdef const double[::1] v = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0], i
    cdef int last = 0, s
    cdef long count = 0
    for i in range(n):
        if v[i] > 0.0:
            s = 1
        elif v[i] < 0.0:
            s = -1
        else:
            continue
        if last != 0 and s != last:
            count += 1
        last = s
    return int(count)


def akima_eval(xk, yk, xq):
    cdef const double[::1] X = np.ascontiguousarray(xk, dtype=np.float64)
    cdef const double[::1] Y = np.ascontiguousarray(yk, dtype=np.float64)
    cdef const double[::1] Q = np.ascontiguousarray(xq, dtype=np.float64)
    cdef Py_ssize_t n = X.shape[0], nq = Q.shape[0], i, j = 0
    cdef double[::1] w = np.empty(3 * (n + 8))
    cdef double* t = &w[0]
    out = np.empty(nq)
    cdef double[::1] o = out
    cdef double h, s, s2, s3, q
    _akima_slopes_raw(&X[0], &Y[0], n, t, t + (n + 8), t + 2 * (n + 8))
    for i in range(nq):
        q = Q[i]
        j = _find_interval(&X[0], n, q, j)
        h = X[j + 1] - X[j]
        s = (q - X[j]) / h
        s2 = s * s
        s3 = s2 * s
        o[i] = ((2 * s3 - 3 * s2 + 1) * Y[j] + (s3 - 2 * s2 + s) * h * t[j]
                + (-2 * s3 + 3 * s2) * Y[j + 1] + (s3 - s2) * h * t[j + 1])
    return out


cdef inline Py_ssize_t _find_interval(const double* X, Py_ssize_t n, double q, Py_ssize_t j) noexcept:
    if q < X[j]:
        j = 0
    while j < n - 2 and X[j + 1] <= q:
        j += 1
    return j


def linear_eval(xk, yk, xq):
    cdef const double[::1] X = np.ascontiguousarray(xk, dtype=np.float64)
    cdef const double[::1] Y = np.ascontiguousarray(yk, dtype=np.float64)
    cdef const double[::1] Q = np.ascontiguousarray(xq, dtype=np.float64)
    out = np.empty(Q.shape[0])
    cdef double[::1] o = out
    _linear(&X[0], &Y[0], X.shape[0], &Q[0], Q.shape[0], &o[0])
    return out


cdef void _linear(const double* X, const double* Y, Py_ssize_t n, const double* Q,
                  Py_ssize_t nq, double* o) noexcept:
    cdef Py_ssize_t i, j = 0
    cdef double slope
    for i in range(nq):
        j = _find_interval(X, n, Q[i], j)
        slope = (Y[j + 1] - Y[j]) / (X[j + 1] - X[j])
        o[i] = slope * (Q[i] - X[j]) + Y[j]


cdef void _akima_slopes_raw(const double* xk, const double* yk, Py_ssize_t n, double* t,
                            double* m, double* dm) noexcept:
    cdef Py_ssize_t i
    cdef double f1, f2, f12, fmax = 0.0
    for i in range(n - 1):
        m[i + 2] = (yk[i + 1] - yk[i]) / (xk[i + 1] - xk[i])
    m[1] = 2.0 * m[2] - m[3]
    m[0] = 2.0 * m[1] - m[2]
    m[n + 1] = 2.0 * m[n] - m[n - 1]
    m[n + 2] = 2.0 * m[n + 1] - m[n]
    for i in range(n + 2):
        dm[i] = fabs(m[i + 1] - m[i])
    for i in range(n):
        f12 = dm[i + 2] + dm[i]
        if f12 > fmax:
            fmax = f12
    for i in range(n):
        f1 = dm[i + 2]
        f2 = dm[i]
        f12 = f1 + f2
        if f12 > 1e-9 * fmax:
            t[i] = (f1 * m[i + 1] + f2 * m[i + 2]) / f12
        else:
            t[i] = 0.5 * (m[i + 3] + m[i])


cdef void _akima_grid(const double* X, const double* Y, Py_ssize_t nk, double* t,
                      double* m, double* dm, Py_ssize_t n, double* o) noexcept:
    """Akima spline through (X, Y) evaluated at 0..n-1."""
    cdef Py_ssize_t i, j = 0
    cdef double h, s, s2, s3, q
    _akima_slopes_raw(X, Y, nk, t, m, dm)
    for i in range(n):
        q = <double>i
        j = _find_interval(X, nk, q, j)
        h = X[j + 1] - X[j]
        s = (q - X[j]) / h
        s2 = s * s
        s3 = s2 * s
        o[i] = ((2 * s3 - 3 * s2 + 1) * Y[j] + (s3 - 2 * s2 + s) * h * t[j]
                + (-2 * s3 + 3 * s2) * Y[j + 1] + (s3 - s2) * h * t[j + 1])


cdef int _spline_code(Py_ssize_t nk, int kind) noexcept:
    cdef int code
    cdef int mins[3]
    mins[0] = 5
    mins[1] = 4
    mins[2] = 2
    for code in range(kind, 3):
        if nk >= mins[code]:
            return code
    return -1


cdef int _envelope(const double* h, Py_ssize_t n, const Py_ssize_t* idx, Py_ssize_t m,
                   int kind, double* out, double* KX, double* KY, double* work,
                   double* grid) except -2:
    """Mirror-extend the knots at ``idx`` and interpolate over 0..n-1.

    ``KX``/``KY`` need room for n + 4 knots, ``work`` for 3 * (n + 8) values
    and ``grid`` holds 0..n-1.
    """
    cdef Py_ssize_t k = 2 if m >= 2 else m
    cdef Py_ssize_t nk = m + 2 * k, i
    for i in range(k):
        KX[i] = -(<double>idx[k - 1 - i])
        KY[i] = h[idx[k - 1 - i]]
    for i in range(m):
        KX[k + i] = <double>idx[i]
        KY[k + i] = h[idx[i]]
    for i in range(k):
        KX[k + m + i] = 2.0 * (n - 1) - <double>idx[m - 1 - i]
        KY[k + m + i] = h[idx[m - 1 - i]]
    cdef int code = _spline_code(nk, kind)
    cdef double[::1] res
    if code == 0:
        _akima_grid(KX, KY, nk, work, work + (n + 8), work + 2 * (n + 8), n, out)
    elif code == 1:
        from decompens._pykernels import cubic_eval
        kx = np.array(<double[:nk]> KX)
        ky = np.array(<double[:nk]> KY)
        res = cubic_eval(kx, ky, np.arange(n, dtype=np.float64))
        for i in range(n):
            out[i] = res[i]
    elif code == 2:
        _linear(KX, KY, nk, grid, n, out)
    else:
        return -1
    return 0


cdef void _extrema(const double* v, Py_ssize_t n, Py_ssize_t* mx, Py_ssize_t* nmax,
                   Py_ssize_t* mn, Py_ssize_t* nmin) noexcept:
    cdef Py_ssize_t i = 0, prev = -1, start
    cdef int prev_up = 0, up
    cdef double d
    nmax[0] = 0
    nmin[0] = 0
    while i < n - 1:
        d = v[i + 1] - v[i]
        if d != 0.0:
            up = d > 0.0
            if prev >= 0 and up != prev_up:
                start = prev + 1
                if prev_up:
                    mx[nmax[0]] = (start + i) // 2
                    nmax[0] += 1
                else:
                    mn[nmin[0]] = (start + i) // 2
                    nmin[0] += 1
            prev = i
            prev_up = up
        i += 1


cdef long _crossings(const double* v, Py_ssize_t n) noexcept:
    cdef Py_ssize_t i
    cdef int last = 0, s
    cdef long count = 0
    for i in range(n):
        if v[i] > 0.0:
            s = 1
        elif v[i] < 0.0:
            s = -1
        else:
            continue
        if last != 0 and s != last:
            count += 1
        last = s
    return count


cdef int _mean_env(const double* h, Py_ssize_t n, int kind, Py_ssize_t* mx, Py_ssize_t* mn,
                   double* up, double* lo, double* mean, Py_ssize_t* n_ext,
                   double* buf) except -2:
    cdef Py_ssize_t nmax, nmin, i
    _extrema(h, n, mx, &nmax, mn, &nmin)
    n_ext[0] = nmax + nmin
    if nmax == 0 or nmin == 0:
        return -1
    # buf layout: knots x | knots y | spline work | grid
    cdef double* kx = buf
    cdef double* ky = buf + (n + 4)
    cdef double* work = buf + 2 * (n + 4)
    cdef double* grid = work + 3 * (n + 8)
    if _envelope(h, n, mx, nmax, kind, up, kx, ky, work, grid) < 0:
        return -1
    if _envelope(h, n, mn, nmin, kind, lo, kx, ky, work, grid) < 0:
        return -1
    for i in range(n):
        mean[i] = (up[i] + lo[i]) / 2.0
    return 0


cdef bint _imf_ok(const double* h, const double* mean, Py_ssize_t n, Py_ssize_t n_ext,
                  double tol) noexcept:
    cdef long n_zc = _crossings(h, n)
    cdef double hmax = h[0], hmin = h[0], peak = 0.0, a, span, ratio
    cdef Py_ssize_t i
    for i in range(n):
        if h[i] > hmax:
            hmax = h[i]
        if h[i] < hmin:
            hmin = h[i]
        a = fabs(mean[i])
        if a > peak:
            peak = a
    span = hmax - hmin
    if span > 0:
        ratio = peak / span
    elif peak == 0:
        ratio = 0.0
    else:
        return False
    return (n_ext - n_zc <= 1 and n_zc - n_ext <= 1) and ratio <= tol


def emd_imfs(x, int kind, int max_sift, double tol, int max_imfs, int residue_extrema):
    cdef double[::1] r = np.array(x, dtype=np.float64)
    cdef Py_ssize_t n = r.shape[0], i, n_ext
    cdef Py_ssize_t nmax, nmin
    mx_a = np.empty(n, dtype=np.intp)
    mn_a = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] mx = mx_a
    cdef Py_ssize_t[::1] mn = mn_a
    cdef double[::1] up = np.empty(n)
    cdef double[::1] lo = np.empty(n)
    cdef double[::1] mean = np.empty(n)
    cdef double[::1] h
    cdef int it
    cdef bint forced
    cdef double[::1] buf = np.empty(2 * (n + 4) + 3 * (n + 8) + n)
    cdef double* bp = &buf[0]
    for i in range(n):
        bp[2 * (n + 4) + 3 * (n + 8) + i] = <double>i
    imfs, iters, flags = [], [], []
    while len(imfs) < max_imfs:
        _extrema(&r[0], n, &mx[0], &nmax, &mn[0], &nmin)
        if nmax + nmin <= residue_extrema:
            break
        if _mean_env(&r[0], n, kind, &mx[0], &mn[0], &up[0], &lo[0], &mean[0], &n_ext, bp) < 0:
            break
        h_arr = np.empty(n)
        h = h_arr
        for i in range(n):
            h[i] = r[i] - mean[i]
        it = 1
        while True:
            if _mean_env(&h[0], n, kind, &mx[0], &mn[0], &up[0], &lo[0], &mean[0], &n_ext, bp) < 0:
                forced = True
                break
            if _imf_ok(&h[0], &mean[0], n, n_ext, tol):
                forced = False
                break
            if it >= max_sift:
                forced = True
                break
            for i in range(n):
                h[i] = h[i] - mean[i]
            it += 1
        imfs.append(h_arr)
        iters.append(it)
        flags.append(bool(forced))
        for i in range(n):
            r[i] = r[i] - h[i]
    out = np.array(imfs) if imfs else np.zeros((0, n))
    return out, iters, flags
