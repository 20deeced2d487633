"""Dormand-Prince 5(4) integrator with continuous extension, plus a bracketing root locator."""
from __future__ import annotations

import math

import numpy as np

__all__ = ["Dopri5", "IntegratorError", "locate_root"]


class IntegratorError(RuntimeError):
    """Step size underflow or a non-finite derivative."""

    def __init__(self, message, t=None, y=None):
        super().__init__(message)
        self.t = t
        self.y = y


# Butcher tableau
C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# difference between the 5th and embedded 4th order weights (7 stages, FSAL)
E = np.array([-71 / 57600, 0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# Shampine's 4th order dense output, coefficients of theta, theta^2, theta^3, theta^4
P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
ERR_EXP = -1 / 5


def _rms(v):
    return float(np.sqrt(np.mean(v * v))) if v.size else 0.0


class Dopri5:
    """Adaptive explicit RK45 stepping from ``t0`` towards ``t_bound``.

    After each accepted :meth:`step`, :meth:`dense` evaluates the 4th order
    interpolant anywhere in ``[t_old, t]``.
    """

    def __init__(self, fun, t0, y0, t_bound, rtol=1e-6, atol=1e-9, max_step=math.inf,
                 first_step=None):
        self.fun = fun
        self.t = float(t0)
        self.y = np.array(y0, dtype=float)
        self.t_bound = float(t_bound)
        self.rtol, self.atol = rtol, atol
        self.max_step = max_step
        self.n = self.y.size
        self.f = np.asarray(fun(self.t, self.y), dtype=float)
        self.K = np.empty((7, self.n))
        self.t_old = self.t
        self.y_old = self.y.copy()
        self.nfev = 1
        if first_step is None:
            self.h = self._initial_step()
        else:
            self.h = min(first_step, max_step)

    def _initial_step(self):
        span = self.t_bound - self.t
        if self.n == 0 or span <= 0:
            return min(span, self.max_step) if span > 0 else 0.0
        scale = self.atol + np.abs(self.y) * self.rtol
        d0, d1 = _rms(self.y / scale), _rms(self.f / scale)
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        h0 = min(h0, span)
        y1 = self.y + h0 * self.f
        f1 = self.fun(self.t + h0, y1)
        self.nfev += 1
        d2 = _rms((f1 - self.f) / scale) / h0
        if d1 <= 1e-15 and d2 <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** (1 / 5)
        return min(100 * h0, h1, span, self.max_step)

    def _stages(self, t, y, f, h):
        K = self.K
        K[0] = f
        for s in range(1, 6):
            dy = np.dot(K[:s].T, A[s]) * h
            K[s] = self.fun(t + C[s] * h, y + dy)
        y_new = y + h * np.dot(K[:6].T, B)
        f_new = np.asarray(self.fun(t + h, y_new), dtype=float)
        K[6] = f_new
        self.nfev += 6
        return y_new, f_new

    def step(self) -> bool:
        """Take one accepted step; False once ``t_bound`` has been reached."""
        t, y = self.t, self.y
        if t >= self.t_bound:
            return False
        min_step = 10 * abs(np.nextafter(t, math.inf) - t)
        h = min(self.h, self.max_step)
        rejected = False
        while True:
            if h < min_step:
                raise IntegratorError(f"step size underflow at t={t!r}", t, y.copy())
            t_new = t + h
            if t_new >= self.t_bound:
                t_new = self.t_bound
            h = t_new - t
            y_new, f_new = self._stages(t, y, self.f, h)
            if not np.all(np.isfinite(y_new)):
                raise IntegratorError(f"non-finite state at t={t_new!r}", t, y.copy())
            scale = self.atol + np.maximum(np.abs(y), np.abs(y_new)) * self.rtol
            err = _rms(np.dot(self.K.T, E) * h / scale) if self.n else 0.0
            if err < 1:
                if err == 0:
                    factor = MAX_FACTOR
                else:
                    factor = min(MAX_FACTOR, SAFETY * err ** ERR_EXP)
                if rejected:
                    factor = min(1.0, factor)
                self.h = h * factor
                break
            h *= max(MIN_FACTOR, SAFETY * err ** ERR_EXP)
            rejected = True
        self.t_old, self.y_old = t, y
        self.t, self.y, self.f = t_new, y_new, f_new
        self._Q = self.K.T.dot(P)
        self._h_last = h
        return True

    def dense(self, t):
        """Interpolated state at ``t`` within the last accepted step."""
        h = self._h_last
        theta = (t - self.t_old) / h if h else 0.0
        p = np.array([theta, theta ** 2, theta ** 3, theta ** 4])
        return self.y_old + h * self._Q.dot(p)


def locate_root(g, ta, ga, tb, gb, time_tol, value_tol, max_iter=200):
    """Illinois regula falsi on a bracket with ``g(ta) < 0 <= g(tb)``.

    Returns a time ``t`` with ``g(t) >= 0`` that is within ``time_tol`` of
    the earliest sign change in the bracket, or where ``g(t) <= value_tol``.
    """
    fa, fb = ga, gb  # working values; Illinois halves these, not the true g
    side = 0
    for _ in range(max_iter):
        if gb <= value_tol or tb - ta <= time_tol:
            return tb
        t = tb - fb * (tb - ta) / (fb - fa)
        if not (ta < t < tb):
            t = 0.5 * (ta + tb)
        gt = g(t)
        if gt >= 0:
            tb, gb, fb = t, gt, gt
            if side == -1:
                fa *= 0.5
            side = -1
        else:
            ta, fa = t, gt
            if side == 1:
                fb *= 0.5
            side = 1
    return tb
