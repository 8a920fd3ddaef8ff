"""Measurable quantities built from the two-photon wavefunction and power integrals.

Everything here works in units of ``gamma_tot``; functions taking
``gamma_tot_hz`` convert to photons/s at the very end.
"""
from __future__ import annotations

import math
import warnings

import numpy as np

from .chiral_exact import MAX_CLOSED_FORM_N, PrecisionLossError, psi_exact
from .oracle import PowerBreakdown, QuadratureSpec, power_integrals, psi_x_quadrature
from .params import SystemParams

__all__ = [
    "DarkLinearChannelWarning",
    "PowerBreakdown",
    "coincidence_rate",
    "g2",
    "g2_corrected",
    "g2_tilde",
    "pair_to_mixed",
    "psi",
    "transmitted_power",
]

COINCIDENCE_WINDOW = 3.0


class DarkLinearChannelWarning(RuntimeWarning):
    """Linear transmission vanishes (beta = 1/2): g2 falls back to the unnormalized G2."""


def _check(params: SystemParams) -> None:
    if params.beta_l != 0:
        raise ValueError("chiral observables need beta_l = 0; use the bidirectional module")


def psi(params: SystemParams, x, spec: QuadratureSpec | None = None) -> np.ndarray:
    """Two-photon amplitude ``psi_N(x)``: closed form where it is trustworthy, else quadrature."""
    _check(params)
    x = np.asarray(x, dtype=float)
    if params.beta == 0 or params.n_emitters == 0:
        return np.ones_like(x, dtype=complex)
    if params.n_emitters <= MAX_CLOSED_FORM_N:
        try:
            return psi_exact(params, x)
        except PrecisionLossError:
            pass
    values, _ = psi_x_quadrature(params, x, spec or QuadratureSpec())
    return values


def g2_tilde(params: SystemParams, x, spec: QuadratureSpec | None = None) -> np.ndarray:
    """Unnormalized correlation ``|psi_N(x)|^2`` (per ``P_in^2``)."""
    return np.abs(psi(params, x, spec)) ** 2


def g2(params: SystemParams, x, spec: QuadratureSpec | None = None) -> np.ndarray:
    """Normalized weak-drive correlation ``|psi_N(x)|^2 / t0^{4N}``.

    At ``beta = 1/2`` the linear channel is dark; the unnormalized value is
    returned and a :class:`DarkLinearChannelWarning` is issued.
    """
    gt = g2_tilde(params, x, spec)
    lin = (1.0 - 2.0 * params.beta) ** (4 * params.n_emitters)
    if lin == 0.0:
        warnings.warn("linear transmission is exactly zero; returning unnormalized G2", DarkLinearChannelWarning, stacklevel=2)
        return gt
    return gt / lin


def transmitted_power(params: SystemParams, spec: QuadratureSpec | None = None, *, gamma_tot_hz: float | None = None) -> PowerBreakdown:
    _check(params)
    out = power_integrals(params, spec)
    return out if gamma_tot_hz is None else out.with_rate(gamma_tot_hz)


def coincidence_rate(
    params: SystemParams,
    window: float = COINCIDENCE_WINDOW,
    *,
    gamma_tot_hz: float,
    spec: QuadratureSpec | None = None,
) -> float:
    """Rate (1/s) of photon pairs arriving less than ``window / gamma_tot`` apart.

    Each pair is counted once, so the delay integral runs over ``0 <= x < window``.
    Only the weak-drive correlation enters; no lost-photon correction is applied.
    """
    if window < 0:
        raise ValueError("window must be nonnegative")
    if not gamma_tot_hz > 0:
        raise ValueError("gamma_tot_hz must be positive")
    if window == 0:
        return 0.0
    gx, gw = np.polynomial.legendre.leggauss(32)
    edges = np.linspace(0.0, window, 9)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (a + b) + 0.5 * (b - a) * gx).ravel()
    weights = (0.5 * (b - a) * gw).ravel()
    integral = float(weights @ g2_tilde(params, nodes, spec))
    p_in = params.p_in * gamma_tot_hz
    return p_in**2 * integral / gamma_tot_hz


def g2_corrected(params: SystemParams, spec: QuadratureSpec | None = None) -> float:
    """Zero-delay correlation normalized by the full (linear + nonlinear) flux."""
    if params.drive <= 0:
        raise ValueError("g2_corrected needs a positive drive")
    total = power_integrals(params, spec).total
    if total <= 0:
        raise ValueError("total transmitted power is zero")
    return float(g2_tilde(params, np.array([0.0]), spec)[0]) / total**2


def pair_to_mixed(params: SystemParams, spec: QuadratureSpec | None = None) -> float:
    p = power_integrals(params, spec)
    return p.pair / p.mixed

