"""Independent reference implementations used as test oracles.

Nothing here imports the package under test; each routine is a direct,
loop-level transcription of the defining formula.
"""
import math

import numpy as np
from scipy.interpolate import Akima1DInterpolator


def brute_extrema(x):
    """Strict interior maxima/minima by comparing each point with both neighbours."""
    maxima, minima = [], []
    for i in range(1, len(x) - 1):
        if x[i] > x[i - 1] and x[i] > x[i + 1]:
            maxima.append(i)
        elif x[i] < x[i - 1] and x[i] < x[i + 1]:
            minima.append(i)
    return maxima, minima


def loop_zero_crossings(x):
    count, last = 0, 0
    for v in x:
        sign = int(v > 0) - int(v < 0)
        if sign == 0:
            continue
        if last and sign != last:
            count += 1
        last = sign
    return count


def reflect(idx, vals, n, k=2):
    """Mirror the first/last k knots about samples 0 and n-1."""
    idx, vals = list(idx), list(vals)
    k = min(k, len(idx))
    left = [(-idx[j], vals[j]) for j in range(k - 1, -1, -1)]
    right = [(2 * (n - 1) - idx[-1 - j], vals[-1 - j]) for j in range(k)]
    pts = left + list(zip(idx, vals)) + right
    return np.array([p[0] for p in pts], float), np.array([p[1] for p in pts], float)


def akima_envelope(idx, vals, n):
    xk, yk = reflect(idx, vals, n)
    return Akima1DInterpolator(xk, yk)(np.arange(n, dtype=float))


def two_pass_rmse(p, t):
    total = 0.0
    for a, b in zip(p, t):
        total += (a - b) ** 2
    return math.sqrt(total / len(p))


def central_difference(f, params, eps=1e-5):
    """Numerical gradient of scalar ``f()`` w.r.t. every entry of ``params``."""
    grads = {}
    for name, arr in params.items():
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = arr[i]
            arr[i] = old + eps
            up = f()
            arr[i] = old - eps
            down = f()
            arr[i] = old
            g[i] = (up - down) / (2 * eps)
        grads[name] = g
    return grads


def relative_error(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(1e-6, np.abs(a) + np.abs(b))))


def pearson(a, b):
    a = np.asarray(a, float) - np.mean(a)
    b = np.asarray(b, float) - np.mean(b)
    return float((a * b).sum() / math.sqrt((a * a).sum() * (b * b).sum()))


def two_tone(n=512):
    t = np.arange(n)
    fast = np.sin(2 * np.pi * 8 * t / n)
    slow = 0.5 * np.sin(2 * np.pi * t / n)
    return fast + slow, fast, slow
