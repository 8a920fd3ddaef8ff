"""Closed-form transport through a chiral chain of lossy two-level emitters.

All rates are in units of the total decay rate, so the waveguide rate is
``beta`` and positions ``x`` are in units of ``1/gamma_tot``.  The centre of
mass coordinate of the photon pair is fixed to zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .params import DerivedConstants, SystemParams
from .specfun import ScaledComplex, poisson_weights, regularized_gamma_upper_terms, scaled_dot

CONDITION_LIMIT = 1e12
MAX_CLOSED_FORM_N = 150
METHODS = ("closed-form", "quadrature", "asymptotic")


class PrecisionLossError(ArithmeticError):
    """The closed-form sum cancels too strongly to trust in double precision."""

    def __init__(self, message: str, condition: float):
        super().__init__(message)
        self.condition = condition


@dataclass(frozen=True)
class WavefunctionSamples:
    x_grid: np.ndarray
    values: np.ndarray
    method: str
    params: SystemParams

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method tag {self.method!r}")


def transmission_t(k, beta):
    """Single-photon transmission ``1 - 2 beta / (1 - 2 i k)``."""
    return 1.0 - 2.0 * beta / (1.0 - 2j * np.asarray(k, dtype=float))


def transmission_t_pole(k, beta):
    # pole form in the emitter's own decay rate
    k = np.asarray(k, dtype=float)
    return (k + 0.5j * (1 - 2 * beta)) / (k + 0.5j)


def bound_transmission(E, beta):
    """Bound-state transmission ``1 - 4 beta / (1 + beta - i E)``."""
    return 1.0 - 4.0 * beta / (1.0 + beta - 1j * np.asarray(E, dtype=float))


def bound_transmission_pole(E, beta):
    E = np.asarray(E, dtype=float)
    return (E + 1j * (1 - 3 * beta)) / (E + 1j * (1 + beta))


def _poles(params: SystemParams) -> tuple[complex, complex, complex]:
    """Return ``(gamma, c, c/d)`` where ``c = (gamma^2 - a^2)/(2 gamma)`` and ``d = -a0``."""
    d = DerivedConstants.from_params(params)
    g = d.gamma_pole
    c = 1j * params.beta * d.a0_pole / g
    ratio = -1j * params.beta / g
    return g, c, ratio


# Exact Gaussian-rational helpers: pairs of Fractions, or (int, int) numerators.

def _cmul(u, v):
    return (u[0] * v[0] - u[1] * v[1], u[0] * v[1] + u[1] * v[0])


def _cdiv(u, v):
    den = v[0] ** 2 + v[1] ** 2
    return ((u[0] * v[0] + u[1] * v[1]) / den, (u[1] * v[0] - u[0] * v[1]) / den)


def _to_gauss_int(u) -> tuple[tuple[int, int], int]:
    den = math.lcm(u[0].denominator, u[1].denominator)
    return (int(u[0] * den), int(u[1] * den)), den


def _gpowers(base: tuple[int, int], n: int) -> list[tuple[int, int]]:
    out = [(1, 0)]
    for _ in range(n):
        out.append(_cmul(out[-1], base))
    return out


@dataclass(frozen=True)
class _Expansion:
    alpha: tuple  # F(N,m) (-gamma)^{m-N} / m!
    fhat: tuple  # F(N,m) (-a0)^{m-N} / m!
    poly: tuple  # D_l with phi(x) = sum_l D_l exp(-z) z^l / l!,  z = -i gamma |x|


@lru_cache(maxsize=128)
def _expansion(n: int, beta: float, k0: float) -> _Expansion:
    """Leibniz coefficients and the resummed polynomial, all in exact arithmetic.

    Both halves of every chi kernel share ``exp(-z)`` times a truncated
    exponential series in ``z``, so the double sum over emitters and gamma
    orders collapses to one polynomial whose coefficients are exact rationals.
    Only the final rounding to double remains, which removes the binomial
    cancellation that otherwise grows like ``((1+2beta)/|1-2beta|)^N``.
    """
    b, k = Fraction(beta), Fraction(k0)
    g = (k, Fraction(1, 2))
    a0 = (k, (1 - b) / 2)
    s_frac = _cmul((Fraction(0), -b), _cdiv(a0, _cmul(g, g)))  # -c/gamma
    (S, ds), (R, dr), (P, dp) = (
        _to_gauss_int(s_frac),
        _to_gauss_int(_cdiv((Fraction(0), -b), g)),  # c/d
        _to_gauss_int(_cdiv(a0, g)),  # a0/gamma
    )
    s_pow = _gpowers(S, n)
    r_pow = _gpowers(R, n)
    two_ds = 2 * ds
    alpha_num, fhat_num = [], []
    for m in range(n):
        acc_a, acc_b = [0, 0], [0, 0]
        scale = 1
        for kk in range(m + 1):
            w = math.comb(n, kk) * math.comb(n - 1 + m - 2 * kk, m - kk) * scale
            acc_a[0] += w * s_pow[n - kk][0]
            acc_a[1] += w * s_pow[n - kk][1]
            acc_b[0] += w * s_pow[m - kk][0]
            acc_b[1] += w * s_pow[m - kk][1]
            scale *= two_ds
        # bring everything over the common denominator (2 ds dr)^N
        fa = 2 ** (n - m) * dr**n
        alpha_num.append((acc_a[0] * fa, acc_a[1] * fa))
        fb = dr**m * two_ds ** (n - m)
        rb = _cmul(r_pow[n - m], (acc_b[0], acc_b[1]))
        fhat_num.append((rb[0] * fb, rb[1] * fb))
    den = (two_ds * dr) ** n

    def conv(num, d):
        return ScaledComplex.from_gaussian_rational(num[0], num[1], d)

    poly = []
    cum_a, cum_b = [0, 0], [0, 0]
    partial_a, partial_b = [], []
    for m in range(n):
        cum_a = [cum_a[0] + alpha_num[m][0], cum_a[1] + alpha_num[m][1]]
        cum_b = [cum_b[0] + fhat_num[m][0], cum_b[1] + fhat_num[m][1]]
        partial_a.append(tuple(cum_a))
        partial_b.append(tuple(cum_b))
    p_pow = _gpowers(P, n)
    for ell in range(n):
        a_l, b_l = partial_a[n - 1 - ell], partial_b[n - 1 - ell]
        dpl = dp**ell
        pb = _cmul(p_pow[ell], b_l)
        poly.append(conv((2 * (a_l[0] * dpl - pb[0]), 2 * (a_l[1] * dpl - pb[1])), den * dpl))
    return _Expansion(
        alpha=tuple(conv(a, den) for a in alpha_num),
        fhat=tuple(conv(f, den) for f in fhat_num),
        poly=tuple(poly),
    )


def f_coefficient(n: int, m: int, params: SystemParams) -> ScaledComplex:
    """Leibniz coefficient ``F_{k0}(N, m)``: the m-th derivative of ``f^N`` at the pole."""
    if n < 1:
        raise ValueError("N must be at least 1")
    if not 0 <= m <= n - 1:
        raise ValueError(f"m must lie in [0, N-1], got m={m}, N={n}")
    g = DerivedConstants.from_params(params).gamma_pole
    alpha = _expansion(n, params.beta, params.k0).alpha[m]
    return alpha * ScaledComplex.from_complex(-g) ** (n - m) * ScaledComplex.from_int(math.factorial(m))


def chi_x(n: int, x, params: SystemParams) -> np.ndarray:
    """Residue kernel ``chi_{k0,n}(x)`` (requires ``beta < 1``)."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    d = DerivedConstants.from_params(params)
    ax = np.abs(np.asarray(x, dtype=float))
    g, a0 = d.gamma_pole, d.a0_pole
    q1 = regularized_gamma_upper_terms(n, -1j * g * ax)[n]
    q2 = regularized_gamma_upper_terms(n, -1j * a0 * ax)[n]
    fact = math.factorial(n)
    return fact * (2 * (-g) ** (-n - 1) * q1 - 2 * np.exp(-params.beta * ax / 2) * (-a0) ** (-n - 1) * q2)


def phi_x_exact(params: SystemParams, x, *, return_condition: bool = False):
    """Correlated part ``phi_N(x)`` from the closed form."""
    n = params.n_emitters
    x = np.asarray(x, dtype=float)
    if params.beta == 0 or n == 0:
        out = np.zeros(x.shape, dtype=complex)
        return (out, np.ones(x.shape)) if return_condition else out
    g = DerivedConstants.from_params(params).gamma_pole
    grid = np.concatenate([[0.0], np.abs(x).ravel()])
    weights = poisson_weights(n - 1, -1j * g * grid)
    values, cond = scaled_dot(_expansion(n, params.beta, params.k0).poly, list(weights))
    with np.errstate(invalid="ignore", over="ignore"):
        magnitude = np.where(np.isfinite(cond), cond * np.abs(values), 0.0)
    scale = max(abs(complex(transmission_t(params.k0, params.beta))) ** (2 * n), abs(values[0]))
    cond = magnitude / np.maximum(np.maximum(np.abs(values), scale), 1e-300)
    values, cond = values[1:].reshape(x.shape), cond[1:].reshape(x.shape)
    if return_condition:
        return values, cond
    worst = float(np.max(cond)) if cond.size else 0.0
    if worst > CONDITION_LIMIT:
        raise PrecisionLossError(
            f"closed-form sum for N={n}, beta={params.beta} has condition {worst:.3g}", worst
        )
    return values


def psi_exact(params: SystemParams, x) -> np.ndarray:
    """Two-photon wavefunction ``psi_N(0, x) = t^{2N} - phi_N(x)``."""
    t2n = complex(transmission_t(params.k0, params.beta)) ** (2 * params.n_emitters)
    return t2n - phi_x_exact(params, x)


def psi_samples(params: SystemParams, x_grid) -> WavefunctionSamples:
    x_grid = np.asarray(x_grid, dtype=float)
    return WavefunctionSamples(x_grid, psi_exact(params, x_grid), "closed-form", params)


def _pair_kernel_over_delta(j: int, dk: np.ndarray, g: complex, half_g: float) -> np.ndarray:
    """``[(-D-g)^{-j-1}/(D+ih) + (D-g)^{-j-1}/(D-ih)] / D`` including its removable limit."""
    p = j + 1
    out = np.empty(dk.shape, dtype=complex)
    small = np.abs(dk) < 1e-3 * min(half_g, abs(g))
    big = ~small
    d = dk[big]
    out[big] = ((-d - g) ** (-p) / (d + 1j * half_g) + (d - g) ** (-p) / (d - 1j * half_g)) / d
    if np.any(small):
        order = 8
        i = np.arange(order + 1)
        v = (-g) ** (-p) * np.array([math.comb(p + ii - 1, ii) for ii in i], dtype=float) / g**i
        u = v * (-1.0) ** i
        pc = (-1.0) ** i / (1j * half_g) ** (i + 1)
        qc = (-1.0) ** i / (-1j * half_g) ** (i + 1)
        h = np.convolve(u, pc)[: order + 1] + np.convolve(v, qc)[: order + 1]
        out[small] = np.polyval(h[1:][::-1], dk[small])
    return out


def chi_k(n: int, delta_k, params: SystemParams) -> np.ndarray:
    """k-space residue kernel ``chi_{n,k0}(Delta_k)``; finite at ``Delta_k = 0``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    dk = np.asarray(delta_k, dtype=float)
    d = DerivedConstants.from_params(params)
    half_g = params.beta / 2
    lorentz = 2.0 / (dk**2 + half_g**2) * (-1.0 / d.a0_pole) ** (n + 1)
    kern = _pair_kernel_over_delta(n, dk.ravel(), d.gamma_pole, half_g).reshape(dk.shape)
    return math.factorial(n) * params.beta * (kern - lorentz)


def phi_k_exact(params: SystemParams, delta_k, *, return_condition: bool = False):
    """Correlated k-space amplitude ``phi_N(Delta_k) = \\int phi_N(x) exp(i Delta_k x) dx``.

    Evaluated as the transform of the resummed polynomial, term by term:
    ``lam^l [(lam - i D)^{-l-1} + (lam + i D)^{-l-1}]`` with ``lam = -i gamma``.
    This is regular at ``Delta_k = 0`` so no limit has to be taken.
    """
    n = params.n_emitters
    dk = np.asarray(delta_k, dtype=float)
    if params.beta == 0 or n == 0:
        out = np.zeros(dk.shape, dtype=complex)
        return (out, np.ones(dk.shape)) if return_condition else out
    lam = -1j * DerivedConstants.from_params(params).gamma_pole
    flat = dk.ravel()
    arrays = []
    lo, hi = 1.0 / (lam - 1j * flat), 1.0 / (lam + 1j * flat)
    ratio_lo, ratio_hi = lam * lo, lam * hi
    cur_lo, cur_hi = lo.copy(), hi.copy()
    for _ in range(n):
        arrays.append(cur_lo + cur_hi)
        cur_lo = cur_lo * ratio_lo
        cur_hi = cur_hi * ratio_hi
    values, cond = scaled_dot(_expansion(n, params.beta, params.k0).poly, arrays)
    values, cond = values.reshape(dk.shape), cond.reshape(dk.shape)
    if return_condition:
        return values, cond
    finite = cond[np.isfinite(cond)]
    worst = float(np.max(finite)) if finite.size else 0.0
    if worst > CONDITION_LIMIT:
        raise PrecisionLossError(f"closed-form k-space sum has condition {worst:.3g}", worst)
    return values
