"""Independent oracles shared by the test modules.

Nothing here calls into the package's numerical routines except to obtain
inputs, so agreement with the library is a genuine cross-check.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from hivlatent.model import CoreParams, Efficacy, LatentParams, State4

TABLE1_VALUES = {
    "lam": 1e4, "d_T": 0.01, "d_I": 1.0, "d_V": 23.0, "k": 2.4e-8, "N": 2000.0,
    "alpha": 0.01, "d_L": 4e-3,
}


def log_uniform(rng: np.random.Generator, centre: float, low: float = 0.1, high: float = 10.0) -> float:
    return float(centre * math.exp(rng.uniform(math.log(low), math.log(high))))


def random_latent_params(rng: np.random.Generator, p_range=(0.01, 0.5)) -> LatentParams:
    """Each Table 1 rate scaled log-uniformly within [0.1x, 10x]; ``p`` uniform in ``p_range``."""
    v = {name: log_uniform(rng, centre) for name, centre in TABLE1_VALUES.items()}
    v["N"] = max(v["N"], 1.0)
    core = CoreParams(v["lam"], v["d_T"], v["d_I"], v["d_V"], v["k"], v["N"])
    return LatentParams(core, float(rng.uniform(*p_range)), v["alpha"], v["d_L"])


def r_l_oracle(lp: LatentParams, eff: Efficacy = Efficacy()) -> float:
    c = lp.core
    eps = 1.0 - (1.0 - eff.eps_RT) * (1.0 - eff.eps_PI)
    return c.k * c.N * (1 - eps) * c.lam / (c.d_T * c.d_V) * ((1 - lp.p) * lp.d_L + lp.alpha) / (lp.d_L + lp.alpha)


def rhs4_oracle(lp: LatentParams, eff: Efficacy, s) -> list[float]:
    c = lp.core
    T, I, L, V = s
    kk = c.k * (1 - eff.eps_RT)
    NN = c.N * (1 - eff.eps_PI)
    infections = kk * T * V
    return [
        c.lam - c.d_T * T - infections,
        (1 - lp.p) * infections + lp.alpha * L - c.d_I * I,
        lp.p * infections - lp.alpha * L - lp.d_L * L,
        NN * c.d_I * I - c.d_V * V,
    ]


def endemic_oracle(lp: LatentParams, eff: Efficacy = Efficacy()) -> State4:
    """Endemic steady state solved from the steady-state equations by hand."""
    c = lp.core
    kk = c.k * (1 - eff.eps_RT)
    NN = c.N * (1 - eff.eps_PI)
    R = r_l_oracle(lp, eff)
    T = c.lam / (c.d_T * R)
    V = (c.lam - c.d_T * T) / (kk * T)
    L = lp.p * kk * T * V / (lp.alpha + lp.d_L)
    I = c.d_V * V / (NN * c.d_I)
    return State4(T, I, L, V)


def central_jacobian(f, x: np.ndarray, rel: float = 1e-4) -> np.ndarray:
    """Central finite differences with a per-component step ``rel * max(|x_j|, 1)``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    J = np.empty((n, n))
    for j in range(n):
        h = rel * max(abs(x[j]), 1.0)
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        J[:, j] = (np.asarray(f(xp)) - np.asarray(f(xm))) / (2 * h)
    return J


def faddeev_leverrier(J: np.ndarray) -> list[float]:
    """Characteristic polynomial coefficients ``[c1, ..., cn]`` of ``det(eta I - J)`` in exact arithmetic.

    The matrix entries are converted to exact rationals, so the only rounding
    is the final conversion back to floats.
    """
    A = [[Fraction(float(v)) for v in row] for row in np.asarray(J)]
    n = len(A)

    def matmul(X, Y):
        return [[sum(X[i][k] * Y[k][j] for k in range(n)) for j in range(n)] for i in range(n)]

    M = [[Fraction(0)] * n for _ in range(n)]
    coeffs = []
    c = Fraction(1)
    for k in range(1, n + 1):
        M = [[M[i][j] + (c if i == j else 0) for j in range(n)] for i in range(n)]
        AM = matmul(A, M)
        c = -sum(AM[i][i] for i in range(n)) / k
        coeffs.append(c)
        M = AM
    return [float(v) for v in coeffs]


def divide_linear(coeffs: list[float], root: float) -> list[float]:
    """Synthetic division of the monic ``eta^n + c1 eta^(n-1) + ...`` by ``(eta - root)``."""
    out = []
    acc = 1.0
    for c in coeffs[:-1]:
        acc = c + root * acc
        out.append(acc)
    return out


def u_noninfective_oracle(lp: LatentParams, eff: Efficacy, s) -> float:
    c = lp.core
    T, I, L, V = s
    T0 = c.lam / c.d_T
    NN = c.N * (1 - eff.eps_PI)
    return (
        ((1 - lp.p) * lp.d_L + lp.alpha) * (T - T0 - T0 * math.log(T / T0))
        + (lp.d_L + lp.alpha) * (I + V / NN)
        + lp.alpha * L
    )


def u_endemic_oracle(lp: LatentParams, eff: Efficacy, s) -> float:
    e = endemic_oracle(lp, eff)
    NN = lp.core.N * (1 - eff.eps_PI)

    def g(x, xs):
        return x - xs - xs * math.log(x / xs)

    T, I, L, V = s
    return (
        ((1 - lp.p) * lp.d_L + lp.alpha) * g(T, e.T)
        + (lp.d_L + lp.alpha) * (g(I, e.I) + g(V, e.V) / NN)
        + lp.alpha * g(L, e.L)
    )


def directional_derivative(u, s, direction, rel: float = 1e-6) -> float:
    """Central difference of ``u`` along ``direction`` with a step that moves each component by at most ``rel``."""
    s = np.asarray(s, dtype=float)
    d = np.asarray(direction, dtype=float)
    with np.errstate(divide="ignore"):
        ratios = np.where(d != 0, np.abs(s) / np.abs(d), np.inf)
    h = rel * float(np.min(ratios))
    return (u(s + h * d) - u(s - h * d)) / (2 * h)


def mp_lyapunov(lp: LatentParams, eff: Efficacy, endemic: bool):
    """The Lyapunov function rebuilt in 40-digit arithmetic; returns ``U(x) -> mpf``.

    High precision removes the cancellation that would otherwise swamp
    difference quotients when ``U`` is large compared with its change.
    """
    import mpmath

    mpmath.mp.dps = 40
    c = lp.core
    p, alpha, d_L = (mpmath.mpf(x) for x in (lp.p, lp.alpha, lp.d_L))
    a = (1 - p) * d_L + alpha
    b = d_L + alpha
    NN = mpmath.mpf(c.N) * (1 - mpmath.mpf(eff.eps_PI))
    if endemic:
        kk = mpmath.mpf(c.k) * (1 - mpmath.mpf(eff.eps_RT))
        lam, d_T, d_I, d_V = (mpmath.mpf(x) for x in (c.lam, c.d_T, c.d_I, c.d_V))
        R = kk * NN * lam / (d_T * d_V) * a / b
        Ts = lam / (d_T * R)
        Vs = (lam - d_T * Ts) / (kk * Ts)
        stars = (Ts, d_V * Vs / (NN * d_I), p * kk * Ts * Vs / b, Vs)
    else:
        stars = (mpmath.mpf(c.lam) / mpmath.mpf(c.d_T), 0, 0, 0)
    weights = (a, b, alpha, b / NN)

    def g(x, xs):
        if xs == 0:
            return x
        return x - xs - xs * mpmath.log(x / xs)

    def U(x):
        return sum(w * g(mpmath.mpf(xi) if not isinstance(xi, mpmath.mpf) else xi, xs)
                   for w, xi, xs in zip(weights, x, stars))

    return U


def mp_directional_derivative(lp: LatentParams, eff: Efficacy, s, direction, endemic: bool, rel: float = 1e-6) -> float:
    """Central difference of the Lyapunov function along ``direction`` in 40-digit arithmetic."""
    import mpmath

    U = mp_lyapunov(lp, eff, endemic)
    s_mp = [mpmath.mpf(float(v)) for v in s]
    d_mp = [mpmath.mpf(float(v)) for v in direction]
    ratios = [abs(si) / abs(di) for si, di in zip(s_mp, d_mp) if di != 0]
    h = mpmath.mpf(rel) * min(ratios)
    up = U([si + h * di for si, di in zip(s_mp, d_mp)])
    down = U([si - h * di for si, di in zip(s_mp, d_mp)])
    return float((up - down) / (2 * h))
