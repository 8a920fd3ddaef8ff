"""Large optical depth limit governed by the single parameter ``xi = sqrt(N beta (1 - beta))``."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .oracle import PowerBreakdown
from .params import SystemParams
from .specfun import hyp0f2

REGIME_THRESHOLD = 10.0
# beyond this value of xi*|x| the two 0F2 terms cancel to worse than ~1e-8
SERIES_LIMIT = 8.0


def xi(params: SystemParams) -> float:
    return math.sqrt(params.n_emitters * params.beta * (1.0 - params.beta))


@dataclass(frozen=True)
class AsymptoticScaling:
    xi: float
    gtilde_zero: float
    width_scale: float
    regime_ok: bool

    @classmethod
    def from_params(cls, params: SystemParams, threshold: float = REGIME_THRESHOLD) -> "AsymptoticScaling":
        x = xi(params)
        if x == 0:
            return cls(0.0, math.inf, math.inf, False)
        return cls(x, params.beta**2 / (4 * math.pi * x**2), 1.0 / (x * params.gamma_tot), x**2 >= threshold)


def pair_transmission(params: SystemParams, delta_k) -> np.ndarray:
    """Second-order approximation ``exp(-xi^2 / Delta^2)`` to ``t_Delta^N t_{-Delta}^N``."""
    d = np.asarray(delta_k, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(d == 0, 0.0, np.exp(-xi(params) ** 2 / np.where(d == 0, 1.0, d) ** 2))


def phi_asymp_k(params: SystemParams, delta_k) -> np.ndarray:
    d = np.asarray(delta_k, dtype=float)
    safe = np.where(d == 0, 1.0, d)
    return np.where(d == 0, 0.0, params.beta / safe**2 * pair_transmission(params, safe))


def _universal_quad(u: float) -> float:
    val, _ = integrate.quad(lambda k: math.exp(-1.0 / (k * k)) / (k * k) if k > 0 else 0.0, 0.0, np.inf, weight="cos", wvar=u, limlst=200)
    return 2.0 * val


def universal_g(u) -> np.ndarray:
    """``G(u) = int exp(-1/k^2) cos(k u) / k^2 dk`` over the whole real line."""
    u = np.abs(np.asarray(u, dtype=float))
    out = np.empty_like(u)
    for i, v in np.ndenumerate(u):
        if v <= SERIES_LIMIT:
            z = v * v / 4
            out[i] = math.sqrt(math.pi) * hyp0f2(0.5, 0.5, z) - math.pi * v * hyp0f2(1.0, 1.5, z)
        else:
            out[i] = _universal_quad(float(v))
    return out


def f_n_of_x(params: SystemParams, x) -> np.ndarray:
    """``F_N(x) = G(xi x) / xi`` with ``G`` from :func:`universal_g`."""
    s = xi(params)
    if s == 0:
        raise ValueError("F_N is undefined for xi = 0")
    return universal_g(s * np.asarray(x, dtype=float)) / s


def gtilde2_asymp(params: SystemParams, x) -> np.ndarray:
    return (params.beta / (2 * math.pi)) ** 2 * f_n_of_x(params, x) ** 2


def g2_asymp(params: SystemParams, x) -> np.ndarray:
    lin = (1.0 - 2.0 * params.beta) ** (4 * params.n_emitters)
    if lin == 0:
        raise ZeroDivisionError("linear transmission vanishes at beta = 1/2")
    return gtilde2_asymp(params, x) / lin


def pair_fraction(beta: float) -> float:
    """Asymptotic ratio of pair to single-photon (mixed) nonlinear power."""
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    return 1.0 / (2 * math.sqrt(2) - 1 + 4 * math.sqrt(2) / (1 - 2 * beta * (1 - beta)))


def power_asymp(params: SystemParams, threshold: float = REGIME_THRESHOLD) -> PowerBreakdown:
    """Linear part exact; pair and mixed parts from the leading ``xi^-3`` terms."""
    b, s = params.beta, xi(params)
    if s == 0:
        raise ValueError("asymptotic power needs xi > 0")
    q = 1 - 2 * b * (1 - b)
    base = params.drive * b / s**3
    pair = base / (8 * math.sqrt(2 * math.pi))
    mixed = base * ((2 * math.sqrt(2) - 1) / (8 * math.sqrt(2 * math.pi)) + 1 / (2 * math.sqrt(math.pi) * q))
    return PowerBreakdown((1 - 2 * b) ** (2 * params.n_emitters), pair, mixed, params.drive, b, params.n_emitters, regime_ok=s * s >= threshold)


def nonlinear_power_asymp(params: SystemParams) -> float:
    """Closed form of the total nonlinear term, independent of the pair/mixed split."""
    b, s = params.beta, xi(params)
    q = 1 - 2 * b * (1 - b)
    return params.drive * b / (4 * math.sqrt(math.pi) * s**3) * (3 - 2 * b * (1 - b)) / q


def _hurwitz_sum(n: int) -> float:
    """``sum_{M=0}^{N-1} (N + M)^{-5/2}`` via Hurwitz zeta differences."""
    return float(special.zeta(2.5, n) - special.zeta(2.5, 2 * n))
