"""Brute-force numerical integration of the eigenstate-projection integrals.

Serves as the independent check on the closed form for small N and as the
production path for large N, where the closed form loses all precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .chiral_exact import WavefunctionSamples, bound_transmission, transmission_t
from .params import SystemParams

# Gauss-Kronrod 7/15 pair on [-1, 1] (QUADPACK qk15 constants)
_XK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
GK_NODES = np.concatenate([-_XK[:-1], _XK[::-1]])
GK_KRONROD = np.concatenate([_WK[:-1], _WK[::-1]])
_g = np.zeros(15)
_g[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], _WG[::-1]])
GK_GAUSS = _g


class ToleranceError(ArithmeticError):
    """A quadrature did not reach its tolerance within the allowed subdivisions."""

    def __init__(self, message: str, estimate: float, index: int | None = None):
        super().__init__(message)
        self.estimate = estimate
        self.index = index


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-11
    rel_tol: float = 1e-9
    max_subdivisions: int = 400_000
    tail_cutoff_delta: float = 200.0

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_subdivisions < 1 or self.tail_cutoff_delta <= 0:
            raise ValueError("max_subdivisions and tail_cutoff_delta must be positive")


def gk_panels(edges: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nodes and Kronrod/Gauss weights on consecutive panels, shape ``(panels, 15)``."""
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    nodes = 0.5 * (a + b) + half * GK_NODES
    return nodes, half * GK_KRONROD, half * GK_GAUSS


def _geometric_edges(start: float, stop: float, ratio: float) -> np.ndarray:
    count = max(int(math.ceil(math.log(stop / start) / math.log(ratio))), 1)
    return np.geomspace(start, stop, count + 1)


# x-space: psi(x) = 2 tb^N e^{-b|x|/2} - (b/pi) int T(D)^N K(D, x) dD


def _transfer_minus_one(params: SystemParams, delta: np.ndarray) -> np.ndarray:
    """``T(D)^N - 1`` with ``T(D) = t_{k0+D} t_{k0-D}``, accurate when ``T`` is near 1."""
    b, n, k0 = params.beta, params.n_emitters, params.k0
    if k0 == 0:
        with np.errstate(divide="ignore"):
            return np.expm1(n * np.log1p(-b * (1 - b) / (delta**2 + 0.25)))
    up, dn = 1 - 2j * (k0 + delta), 1 - 2j * (k0 - delta)
    w = -2 * b / up - 2 * b / dn + 4 * b * b / (up * dn)
    with np.errstate(divide="ignore"):
        return np.expm1(n * np.log(1 + w))


def _tail_coefficient(params: SystemParams) -> complex:
    # T^N - 1 ~ -c1 / D^2 at large D
    b = params.beta
    return params.n_emitters * (b * (1 - b) - 2j * b * params.k0)


def _subtracted_lorentzian_transform(params: SystemParams, ax: np.ndarray) -> np.ndarray:
    """``int [2cos(Dx) - b sin(D|x|)/D] / ((b^2 + 4D^2)(D^2 + s^2)) dD`` in closed form."""
    b = params.beta
    p, s = b / 2, (1 + b) / 2
    ep, es = np.exp(-p * ax), np.exp(-s * ax)
    pref = math.pi / (4 * (s * s - p * p))
    return pref * (2 * (ep / p - es / s) - b * (-np.expm1(-p * ax) / p**2 + np.expm1(-s * ax) / s**2))


def _x_remainder(params: SystemParams, delta: np.ndarray) -> np.ndarray:
    s2 = ((1 + params.beta) / 2) ** 2
    return _transfer_minus_one(params, delta) + _tail_coefficient(params) / (delta**2 + s2)


def _x_panel_edges(params: SystemParams, x_max: float, delta_max: float, refine: int) -> np.ndarray:
    b = params.beta
    w0 = min(b, 1.0) / 40
    edges = [np.array([0.0]), _geometric_edges(w0, delta_max, 1.2)]
    if x_max > 0:
        step = math.pi / x_max
        edges.append(np.arange(0.0, delta_max, step))
    edges.append(np.array([delta_max]))
    e = np.unique(np.concatenate(edges))
    for _ in range(refine):
        e = np.sort(np.concatenate([e, 0.5 * (e[:-1] + e[1:])]))
    return e


def _x_tail_bound(params: SystemParams, delta_max: float) -> float:
    probe = delta_max * np.array([1.0, 1.5, 2.0, 4.0])
    env = float(np.max(np.abs(_x_remainder(params, probe)) * probe**4))
    b = params.beta
    # |K| <= (2 + b/D)/(4 D^2) and |R| <= env/D^4, integrated over |D| > delta_max
    return 2 * (b / math.pi) * 2 * env * (2 + b / delta_max) / (20 * delta_max**5)


def psi_x_quadrature(params: SystemParams, x, spec: QuadratureSpec = QuadratureSpec(), *, chunk: int = 16):
    """``psi_N(x)`` by panel Gauss-Kronrod quadrature; returns ``(values, error_estimates)``."""
    b, n = params.beta, params.n_emitters
    x = np.asarray(x, dtype=float)
    ax = np.abs(x).ravel()
    if b == 0 or n == 0:
        return np.ones(x.shape, dtype=complex), np.zeros(x.shape)
    delta_max = spec.tail_cutoff_delta
    while _x_tail_bound(params, delta_max) > 0.25 * spec.abs_tol:
        delta_max *= 2
        if delta_max > 1e9:
            raise ToleranceError("tail bound does not converge", _x_tail_bound(params, delta_max))
    tail = _x_tail_bound(params, delta_max)
    x_max = float(ax.max()) if ax.size else 0.0
    tb = complex(bound_transmission(2 * params.k0, b)) ** n
    damp = np.exp(-b * ax / 2)
    base = 2 * tb * damp - 2 * damp + 1 + (b / math.pi) * _tail_coefficient(params) * _subtracted_lorentzian_transform(params, ax)
    refine = 0
    err = np.full(ax.shape, np.inf)
    while True:
        edges = _x_panel_edges(params, x_max, delta_max, refine)
        if len(edges) - 1 > spec.max_subdivisions:
            raise ToleranceError(
                f"x-space quadrature exceeded {spec.max_subdivisions} panels", float(np.max(err))
            )
        nodes, wk, wg = gk_panels(edges)
        g = _x_remainder(params, nodes) / (b * b + 4 * nodes**2)
        integral = np.empty(ax.shape, dtype=complex)
        err = np.empty(ax.shape)
        for lo in range(0, ax.size, chunk):
            xs = ax[lo : lo + chunk]
            arg = nodes[..., None] * xs
            kern = 2 * np.cos(arg) - b * xs * np.sinc(arg / math.pi)
            f = g[..., None] * kern
            k15 = np.einsum("pi,pix->px", wk, f)
            g7 = np.einsum("pi,pix->px", wg, f)
            integral[lo : lo + chunk] = 2 * k15.sum(axis=0)
            err[lo : lo + chunk] = 2 * np.abs(k15 - g7).sum(axis=0)
        psi = base - (b / math.pi) * integral
        err = (b / math.pi) * err + tail
        if np.all(err <= np.maximum(spec.abs_tol, spec.rel_tol * np.abs(psi))):
            break
        refine += 1
    if params.k0 == 0:
        psi = psi.real + 0j
    return psi.reshape(x.shape), err.reshape(x.shape)


def phi_x_quadrature(params: SystemParams, x, spec: QuadratureSpec = QuadratureSpec()):
    """Correlated part ``phi_N(x) = t^{2N} - psi_N(x)``; returns ``(values, error_estimates)``."""
    psi, err = psi_x_quadrature(params, x, spec)
    t2n = complex(transmission_t(params.k0, params.beta)) ** (2 * params.n_emitters)
    return t2n - psi, err


def psi_quadrature_samples(params: SystemParams, x_grid, spec: QuadratureSpec = QuadratureSpec()) -> WavefunctionSamples:
    x_grid = np.asarray(x_grid, dtype=float)
    values, _ = psi_x_quadrature(params, x_grid, spec)
    return WavefunctionSamples(x_grid, values, "quadrature", params)


# k-space: phi_M(q) for every M on a shared node set


@dataclass(frozen=True)
class KGrid:
    """Nodes on ``[0, inf)`` with weights for even integrands (full-line integral = 2 * sum)."""

    nodes: np.ndarray
    weights: np.ndarray

    def integrate_even(self, values: np.ndarray, axis: int = 0) -> np.ndarray:
        return 2 * np.tensordot(self.weights, values, axes=([0], [axis]))


def k_grid(beta: float, xi_max: float, *, ratio: float = 1.3, order: int = 16, refine: int = 0) -> KGrid:
    """Composite Gauss-Legendre nodes: geometric panels up to a cutoff, then ``D = D_max / u``."""
    ratio = ratio ** (0.5**refine)
    order = order * (refine + 1) if refine < 2 else order * 3
    x, w = np.polynomial.legendre.leggauss(order)
    w0 = min(beta, 1.0) / 100
    d_max = 60.0 * max(1.0, xi_max)
    edges = np.concatenate([[0.0], _geometric_edges(w0, d_max, ratio)])
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (a + b) + 0.5 * (b - a) * x).ravel()
    weights = (0.5 * (b - a) * w).ravel()
    # tail: D = d_max / u on u in (0, 1], split in a few panels
    u_edges = np.array([0.0, 0.25, 0.5, 1.0])
    ua, ub = u_edges[:-1, None], u_edges[1:, None]
    u = (0.5 * (ua + ub) + 0.5 * (ub - ua) * x).ravel()
    uw = (0.5 * (ub - ua) * w).ravel()
    nodes = np.concatenate([nodes, d_max / u[::-1]])
    weights = np.concatenate([weights, (d_max * uw / u**2)[::-1]])
    return KGrid(nodes, weights)


def _transfer(beta: float, q: np.ndarray) -> np.ndarray:
    """``T(q) = |t_q|^2`` on resonance."""
    return 1.0 - beta * (1 - beta) / (q**2 + 0.25)


def _transfer_powers(beta: float, q: np.ndarray, m_max: int) -> np.ndarray:
    """``T(q)^M`` for ``M = 0..m_max``; shape ``(len(q), m_max + 1)``."""
    with np.errstate(divide="ignore"):
        log_t = np.log1p(-beta * (1 - beta) / (q**2 + 0.25))
    m = np.arange(m_max + 1)
    out = np.exp(np.outer(log_t, m))
    out[:, 0] = 1.0
    return out


@dataclass(frozen=True)
class KSpaceSolution:
    """``phi_M`` for ``M = 0..m_max`` at the grid nodes and at ``q = 0``."""

    beta: float
    grid: KGrid
    phi: np.ndarray  # (nodes, m_max + 1)
    phi0: np.ndarray  # (m_max + 1,)

    @property
    def m_max(self) -> int:
        return self.phi.shape[1] - 1


def phi_k_all(beta: float, m_max: int, grid: KGrid | None = None) -> KSpaceSolution:
    """``phi_M(q)`` for all ``M <= m_max`` from the eigenstate-projection integral.

    Uses ``phi_M(q) = -{2b (tb^M - T_q^M)/(q^2 + c^2) + (b^2/2pi) int (T^M - T_q^M) / ((D^2 - q^2)(D^2 + c^2)) dD}``
    with ``c = b/2``; the integrand is smooth because the subtraction removes the
    principal-value pole, and its diagonal value is the derivative.
    """
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    if grid is None:
        grid = k_grid(beta, math.sqrt(max(m_max, 1) * beta * (1 - beta)))
    q, w = grid.nodes, grid.weights
    c2 = (beta / 2) ** 2
    tp = _transfer_powers(beta, q, m_max)
    tb = float(np.real(bound_transmission(0.0, beta))) ** np.arange(m_max + 1)
    d2 = q**2
    with np.errstate(divide="ignore"):
        a = w[None, :] / ((d2[None, :] - d2[:, None]) * (d2[None, :] + c2))
    np.fill_diagonal(a, 0.0)
    # diagonal: d(T^M)/d(D^2) = M T^{M-1} dT/d(D^2)
    dt = beta * (1 - beta) / (d2 + 0.25) ** 2
    m = np.arange(m_max + 1)
    t_prev = np.ones_like(tp)
    t_prev[:, 1:] = tp[:, :-1]
    diag = (w * dt / (d2 + c2))[:, None] * m[None, :] * t_prev
    integral = a @ tp - tp * a.sum(axis=1)[:, None] + diag
    phi = -(2 * beta * (tb[None, :] - tp) / (d2 + c2)[:, None] + (beta**2 / (2 * math.pi)) * 2 * integral)
    # q = 0 evaluated separately; T^M - T_0^M in a cancellation-free form
    t0 = 1.0 - 2 * beta
    base0 = t0 ** (2 * m.astype(float))
    if t0 != 0:
        ratio_log = np.log1p(d2 * beta * (1 - beta) / ((d2 + 0.25) * 0.25 * t0**2))
        arg = np.outer(ratio_log, m)
        # the expm1 form only matters where the two powers are close
        diff = np.where(arg < 1.0, base0[None, :] * np.expm1(np.minimum(arg, 1.0)), tp - base0[None, :])
    else:
        diff = tp - base0[None, :]
    integ0 = (w / (d2 * (d2 + c2))) @ diff
    phi0 = -(2 * beta * (tb - base0) / c2 + (beta**2 / (2 * math.pi)) * 2 * integ0)
    phi[:, 0] = 0.0
    phi0[0] = 0.0
    return KSpaceSolution(beta, grid, phi, phi0)


def phi_capital(m: int, params: SystemParams, spec: QuadratureSpec | None = None, solution: KSpaceSolution | None = None) -> complex:
    """``Phi_M = int (s_k + s_{-k}) phi_M(k) dk`` with ``s_k + s_{-k} = -i/(k^2 + 1/4)``."""
    if m < 0:
        raise ValueError("M must be nonnegative")
    if params.k0 != 0:
        raise ValueError("Phi_M is defined on resonance only")
    sol = solution if solution is not None and solution.m_max >= m else phi_k_all(params.beta, max(m, 1))
    return _phi_capital_all(sol)[m]


def _phi_capital_all(sol: KSpaceSolution) -> np.ndarray:
    q = sol.grid.nodes
    return -1j * sol.grid.integrate_even(sol.phi / (q**2 + 0.25)[:, None])


@dataclass(frozen=True)
class PowerBreakdown:
    """Transmitted flux divided by ``P_in`` (dimensionless).

    ``physical_rate`` is the total flux in photons/s when a physical decay rate
    was supplied; ``regime_ok`` is set only by asymptotic estimates.
    """

    linear: float
    pair: float
    mixed: float
    drive: float
    beta: float
    n_emitters: int
    error_estimate: float = 0.0
    physical_rate: float | None = None
    regime_ok: bool | None = None

    @property
    def nonlinear(self) -> float:
        return self.pair + self.mixed

    @property
    def total(self) -> float:
        return self.linear + self.pair + self.mixed

    def with_rate(self, gamma_tot_hz: float) -> "PowerBreakdown":
        """Attach the physical flux for a decay rate ``gamma_tot_hz`` (1/s)."""
        p_in = self.drive / self.beta * gamma_tot_hz
        return replace(self, physical_rate=self.total * p_in)


def _r_bar(beta: float, k):
    # phase chosen so the reflection amplitude is real on resonance; this is the
    # convention that reproduces the master-equation flux
    return -2.0 * math.sqrt(beta * (1 - beta)) / (1 - 2j * np.asarray(k))


def _s_bar(k):
    return 1.0 / (np.asarray(k) + 0.5j)


def _mixed_terms(sol: KSpaceSolution, n_values) -> dict[int, tuple[float, float]]:
    """Per-``N`` pair and mixed coefficients (before the drive prefactor)."""
    b = sol.beta
    q, grid = sol.grid.nodes, sol.grid
    m_all = np.arange(sol.m_max + 1)
    t0 = 1.0 - 2 * b
    cap = _phi_capital_all(sol)
    ss = -1.0 / (q**2 + 0.25)  # s_k s_{-k}
    pref = 1j * b * math.sqrt(b * (1 - b)) / math.pi
    bracket = 4 * math.pi * (-2j) * t0 ** (2.0 * m_all) - cap
    corr = pref * ss[:, None] * bracket[None, :]
    c_plus = -2 * (_r_bar(b, -q) * transmission_t(q, b))[:, None] * sol.phi + corr
    c_minus = -2 * (_r_bar(b, q) * transmission_t(-q, b))[:, None] * sol.phi + corr
    sq = 0.5 * (np.abs(c_plus) ** 2 + np.abs(c_minus) ** 2)  # even part
    c0 = -2 * _r_bar(b, 0.0) * t0 * sol.phi0 + pref * (-4.0) * bracket
    r0 = complex(_r_bar(b, 0.0))
    log_t = np.log1p(-b * (1 - b) / (q**2 + 0.25))
    out = {}
    for n in n_values:
        if n > sol.m_max:
            raise ValueError(f"solution covers M <= {sol.m_max}, need N = {n}")
        ms = m_all[:n]
        with np.errstate(divide="ignore", invalid="ignore"):
            att = np.exp(np.outer(log_t, (n - ms - 1).astype(float)))
        att[:, n - ms - 1 == 0] = 1.0
        sq_int = grid.integrate_even(att * sq[:, ms]).sum() / (8 * math.pi)
        cross = (np.conj(r0) * t0 ** (2 * n - 1) * c0[ms]).real.sum() if n > 0 else 0.0
        phin = sol.phi[:, n]
        pair = grid.integrate_even(np.abs(phin) ** 2) / (2 * math.pi) - 2 * t0 ** (2 * n) * sol.phi0[n]
        out[n] = (float(pair), float(sq_int + cross))
    return out


def _breakdowns(beta: float, drive: float, n_values, refine: int) -> list[PowerBreakdown]:
    n_values = list(n_values)
    grid = k_grid(beta, math.sqrt(max(n_values) * beta * (1 - beta)), refine=refine)
    terms = _mixed_terms(phi_k_all(beta, max(n_values), grid), n_values)
    scale = drive / beta
    return [
        PowerBreakdown((1 - 2 * beta) ** (2 * n), scale * terms[n][0], scale * terms[n][1], drive, beta, n)
        for n in n_values
    ]


def power_sweep(beta: float, drive: float, n_values, spec: QuadratureSpec | None = None, *, refine: int = 0) -> list[PowerBreakdown]:
    """Power breakdown for many N sharing one k-space solve.

    The error estimate is the change under one grid refinement; a change above
    ``spec`` tolerance raises :class:`ToleranceError` naming the offending N.
    """
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    if drive <= 0:
        raise ValueError("drive must be positive")
    spec = spec or QuadratureSpec()
    n_values = [int(n) for n in n_values]
    if min(n_values) < 1:
        raise ValueError("N must be at least 1")
    coarse = _breakdowns(beta, drive, n_values, refine)
    fine = _breakdowns(beta, drive, n_values, refine + 1)
    out = []
    for c, f in zip(coarse, fine):
        est = abs(f.pair - c.pair) + abs(f.mixed - c.mixed)
        if est > spec.abs_tol * drive / beta + spec.rel_tol * abs(f.nonlinear):
            raise ToleranceError(f"power integrals for N={f.n_emitters} changed by {est:.3g} under refinement", est, f.n_emitters)
        out.append(replace(f, error_estimate=est))
    return out


def power_integrals(params: SystemParams, spec: QuadratureSpec | None = None) -> PowerBreakdown:
    """Linear, two-photon and one-lost-photon contributions to the transmitted flux."""
    if params.k0 != 0:
        raise ValueError("the power pipeline is defined on resonance only")
    if params.beta_l != 0:
        raise ValueError("the chiral power pipeline needs beta_l = 0")
    return power_sweep(params.beta, params.drive, [params.n_emitters], spec)[0]


@dataclass(frozen=True)
class FourierReport:
    max_deviation: float
    spacing: float
    truncation: float


def fourier_crosscheck(params: SystemParams, x_grid, delta_grid) -> FourierReport:
    """Transform sampled ``phi_N(x)`` numerically and compare with ``phi_N(Delta)``.

    ``x_grid`` must be uniform on ``[0, x_max]``; ``phi`` is even, so the transform is
    a cosine integral.  The samples are interpolated by a cubic spline, which is
    smooth on the half line because the only cusp sits at ``x = 0``.
    """
    from scipy.interpolate import CubicSpline

    from .chiral_exact import phi_k_exact, phi_x_exact

    x = np.asarray(x_grid, dtype=float)
    q = np.asarray(delta_grid, dtype=float)
    h = np.diff(x)
    if x[0] != 0 or len(x) < 4 or not np.allclose(h, h[0], rtol=1e-9, atol=0):
        raise ValueError("x_grid must be uniform and start at 0")
    xi = math.sqrt(params.n_emitters * params.beta * (1 - params.beta))
    if xi > 0 and h[0] >= 0.1 / xi:
        raise ValueError(f"grid spacing {h[0]:.3g} does not resolve 0.1/xi = {0.1 / xi:.3g}")
    phi = phi_x_exact(params, x)
    spl = CubicSpline(x, phi, bc_type="not-a-knot")
    gx, gw = np.polynomial.legendre.leggauss(8)
    mid, half = 0.5 * (x[1:] + x[:-1]), 0.5 * h
    nodes = (mid[:, None] + half[:, None] * gx).ravel()
    weights = (half[:, None] * gw).ravel()
    vals = spl(nodes) * weights
    transform = 2 * np.array([np.sum(vals * np.cos(qi * nodes)) for qi in q])
    ref = phi_k_exact(params, q)
    dev = float(np.max(np.abs(transform - ref)) / np.max(np.abs(ref)))
    return FourierReport(dev, float(h[0]), float(abs(phi[-1])))
