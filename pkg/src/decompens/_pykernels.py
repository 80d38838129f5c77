"""Pure numpy implementations of the sifting kernels.

These mirror ``_ckernels.pyx`` exactly and are used whenever the compiled
extension is unavailable (or ``DECOMPENS_PURE_PYTHON=1`` is set).
"""
import numpy as np

_EMPTY = np.empty(0, dtype=np.intp)


def extrema_indices(x):
    """Indices of interior local maxima and minima.

    A flat run bounded by lower (higher) neighbours on both sides counts as a
    single maximum (minimum) located at its middle index.
    """
    x = np.asarray(x, dtype=np.float64)
    d = np.diff(x)
    nz = np.flatnonzero(d)
    if nz.size < 2:
        return _EMPTY.copy(), _EMPTY.copy()
    sgn = d[nz] > 0
    k = np.flatnonzero(sgn[1:] != sgn[:-1])
    mid = (nz[k] + 1 + nz[k + 1]) // 2
    up = sgn[k]
    return mid[up].astype(np.intp), mid[~up].astype(np.intp)


def zero_crossings(x):
    x = np.asarray(x, dtype=np.float64)
    s = np.sign(x[x != 0.0])
    if s.size < 2:
        return 0
    return int(np.count_nonzero(s[1:] != s[:-1]))


def akima_slopes(xk, yk):
    n = xk.size
    m = np.empty(n + 3)
    m[2:-2] = np.diff(yk) / np.diff(xk)
    m[1] = 2.0 * m[2] - m[3]
    m[0] = 2.0 * m[1] - m[2]
    m[-2] = 2.0 * m[-3] - m[-4]
    m[-1] = 2.0 * m[-2] - m[-3]
    t = 0.5 * (m[3:] + m[:-3])
    dm = np.abs(np.diff(m))
    f1 = dm[2:]
    f2 = dm[:-2]
    f12 = f1 + f2
    ok = f12 > 1e-9 * f12.max()
    t[ok] = (f1[ok] * m[1:-2][ok] + f2[ok] * m[2:-1][ok]) / f12[ok]
    return t


def hermite_eval(xk, yk, tk, xq):
    j = np.searchsorted(xk, xq, side="right") - 1
    j = np.clip(j, 0, xk.size - 2)
    h = xk[j + 1] - xk[j]
    s = (xq - xk[j]) / h
    s2 = s * s
    s3 = s2 * s
    return ((2 * s3 - 3 * s2 + 1) * yk[j] + (s3 - 2 * s2 + s) * h * tk[j]
            + (-2 * s3 + 3 * s2) * yk[j + 1] + (s3 - s2) * h * tk[j + 1])


def akima_eval(xk, yk, xq):
    """Evaluate the Akima spline through ``(xk, yk)`` at ``xq`` (needs >= 5 knots)."""
    xk = np.asarray(xk, dtype=np.float64)
    yk = np.asarray(yk, dtype=np.float64)
    xq = np.asarray(xq, dtype=np.float64)
    return hermite_eval(xk, yk, akima_slopes(xk, yk), xq)


def mirror_knots(idx, vals, n, nbsym):
    """Reflect the first/last ``nbsym`` knots about samples 0 and n-1."""
    idx = np.asarray(idx, dtype=np.float64)
    vals = np.asarray(vals, dtype=np.float64)
    k = min(nbsym, idx.size)
    left_x = -idx[:k][::-1]
    left_y = vals[:k][::-1]
    right_x = 2.0 * (n - 1) - idx[-k:][::-1] if k else idx[:0]
    right_y = vals[-k:][::-1] if k else vals[:0]
    return (np.concatenate([left_x, idx, right_x]),
            np.concatenate([left_y, vals, right_y]))


def linear_eval(xk, yk, xq):
    xk = np.asarray(xk, dtype=np.float64)
    yk = np.asarray(yk, dtype=np.float64)
    xq = np.asarray(xq, dtype=np.float64)
    j = np.clip(np.searchsorted(xk, xq, side="right") - 1, 0, xk.size - 2)
    slope = (yk[j + 1] - yk[j]) / (xk[j + 1] - xk[j])
    return slope * (xq - xk[j]) + yk[j]


def cubic_eval(xk, yk, xq):
    from scipy.interpolate import CubicSpline
    return CubicSpline(np.asarray(xk, dtype=np.float64), np.asarray(yk, dtype=np.float64))(
        np.asarray(xq, dtype=np.float64))


# spline codes shared with the compiled kernels
AKIMA, CUBIC, LINEAR = 0, 1, 2
_MIN_KNOTS = (5, 4, 2)


def spline_code(n_knots, kind):
    """Fallback ladder akima -> cubic -> linear; -1 when nothing fits."""
    for code in range(kind, 3):
        if n_knots >= _MIN_KNOTS[code]:
            return code
    return -1


def spline_eval(kind, xk, yk, n):
    code = spline_code(len(xk), kind)
    t = np.arange(n, dtype=np.float64)
    if code == AKIMA:
        return akima_eval(xk, yk, t)
    if code == CUBIC:
        return cubic_eval(xk, yk, t)
    if code == LINEAR:
        return linear_eval(xk, yk, t)
    return None


def _mean_env(h, kind):
    imax, imin = extrema_indices(h)
    if imax.size == 0 or imin.size == 0:
        return None, imax.size + imin.size
    n = h.size
    ux, uy = mirror_knots(imax, h[imax], n, 2)
    lx, ly = mirror_knots(imin, h[imin], n, 2)
    upper = spline_eval(kind, ux, uy, n)
    lower = spline_eval(kind, lx, ly, n)
    return (upper + lower) / 2.0, imax.size + imin.size


def imf_ok(h, mean, n_ext, tol):
    n_zc = zero_crossings(h)
    span = h.max() - h.min()
    peak = np.abs(mean).max()
    if span > 0:
        ratio = peak / span
    else:
        ratio = 0.0 if peak == 0 else np.inf
    return abs(n_ext - n_zc) <= 1 and ratio <= tol


def emd_imfs(x, kind, max_sift, tol, max_imfs, residue_extrema):
    """Sift ``x`` into at most ``max_imfs`` IMFs.

    Returns (imfs array, sift iterations per IMF, force-accepted flags).
    """
    residual = np.array(x, dtype=np.float64)
    n = residual.size
    imfs, iters, forced = [], [], []
    while len(imfs) < max_imfs:
        imax, imin = extrema_indices(residual)
        if imax.size + imin.size <= residue_extrema:
            break
        mean, _ = _mean_env(residual, kind)
        if mean is None:
            break
        h = residual - mean
        it = 1
        while True:
            mean, n_ext = _mean_env(h, kind)
            if mean is None:
                f = True
                break
            if imf_ok(h, mean, n_ext, tol):
                f = False
                break
            if it >= max_sift:
                f = True
                break
            h = h - mean
            it += 1
        imfs.append(h)
        iters.append(it)
        forced.append(f)
        residual = residual - h
    out = np.array(imfs) if imfs else np.zeros((0, n))
    return out, iters, forced
