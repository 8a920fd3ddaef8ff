"""Weak-drive steady state of an emitter chain coupled to both waveguide directions.

Emitters couple to the forward mode at rate ``beta``, to the backward mode at
rate ``beta_l`` and to private loss reservoirs at the remainder (units of
``gamma_tot``).  The drive enters from the left in the forward mode with
amplitude ``E``, ``|E|^2 = P_in``.  The steady state is expanded to fourth
order in ``E``:

* pure-state amplitudes (one and two excitations) give the transmitted
  two-photon amplitude and hence ``g2(x)``;
* the power needs the first loss-jump corrections, obtained from the
  perturbative master equation blocks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .params import SystemParams

SINGULAR_COND = 1e13


class SingularSystemError(np.linalg.LinAlgError):
    def __init__(self, message: str, condition: float):
        super().__init__(message)
        self.condition = condition


@dataclass(frozen=True)
class EmitterChain:
    n: int
    phases: tuple[float, ...]
    seed: int | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("chain needs at least one emitter")
        if len(self.phases) != self.n - 1:
            raise ValueError(f"expected {self.n - 1} phases, got {len(self.phases)}")

    @property
    def positions(self) -> np.ndarray:
        """Cumulative propagation phase of each emitter relative to the first."""
        return np.concatenate([[0.0], np.cumsum(self.phases)])

    @classmethod
    def regular(cls, n: int, phase: float = 0.0) -> "EmitterChain":
        return cls(n, (phase,) * (n - 1))


@dataclass(frozen=True)
class ObservableRecord:
    g2: np.ndarray
    power: float
    linear_power: float
    nonlinear_power: float


@dataclass
class EnsembleResult:
    per_realization: list[ObservableRecord]
    mean: ObservableRecord
    std: ObservableRecord
    n_realizations: int
    config: dict = field(default_factory=dict)
    failures: list[tuple[int, str]] = field(default_factory=list)


def chain_generator(master_seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for realization ``index``; independent of run order."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(index,))
    return np.random.Generator(np.random.Philox(ss))


def sample_chain(n: int, seed: int, index: int = 0) -> EmitterChain:
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = chain_generator(seed, index)
    phases = rng.uniform(0.0, 2 * math.pi, size=n - 1)
    return EmitterChain(n, tuple(float(p) for p in phases), seed)


def _check(params: SystemParams) -> None:
    if params.beta + params.beta_l > 1 + 1e-12:
        raise ValueError("beta + beta_l must not exceed 1")


def coupling_matrix(chain: EmitterChain, params: SystemParams, detuning: float = 0.0) -> np.ndarray:
    """Non-Hermitian single-excitation Hamiltonian ``H1``; amplitudes obey ``i dc/dt = H1 c + Omega``."""
    _check(params)
    th = chain.positions
    diff = th[:, None] - th[None, :]
    lower = np.tril(np.ones((chain.n, chain.n), dtype=bool), -1)
    h = np.where(lower, -1j * params.beta * np.exp(1j * diff), 0j)
    h = h + np.where(lower.T, -1j * params.beta_l * np.exp(-1j * diff), 0j)
    h[np.diag_indices(chain.n)] = -detuning - 0.5j
    return h


def _drive_vector(chain: EmitterChain, params: SystemParams) -> np.ndarray:
    # per unit field amplitude
    return -1j * math.sqrt(params.beta) * np.exp(1j * chain.positions)


def _out_vector(chain: EmitterChain, params: SystemParams) -> np.ndarray:
    return math.sqrt(params.beta) * np.exp(-1j * chain.positions)


def _solve(a: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > SINGULAR_COND:
        raise SingularSystemError(f"{what} system is singular (condition {cond:.3g})", float(cond))
    return np.linalg.solve(a, b)


def single_excitation_solve(chain: EmitterChain, params: SystemParams, detuning: float = 0.0):
    """Emitter amplitudes per unit drive field and the forward transmission."""
    h1 = coupling_matrix(chain, params, detuning)
    c1 = _solve(h1, -_drive_vector(chain, params), "single-excitation")
    t_total = 1.0 + _out_vector(chain, params) @ c1
    return c1, complex(t_total)


def _pair_index(n: int):
    iu = np.triu_indices(n, 1)
    index = -np.ones((n, n), dtype=int)
    index[iu] = np.arange(iu[0].size)
    index[(iu[1], iu[0])] = index[iu]
    return iu, index


def two_excitation_solve(chain: EmitterChain, params: SystemParams, c1: np.ndarray | None = None) -> np.ndarray:
    """Pair amplitudes per unit drive squared as a symmetric matrix with zero diagonal.

    The unknowns are the ``N(N-1)/2`` unordered pairs; same-emitter states are
    excluded from the basis altogether.
    """
    n = chain.n
    if c1 is None:
        c1, _ = single_excitation_solve(chain, params)
    if n == 1:
        return np.zeros((1, 1), dtype=complex)
    h1 = coupling_matrix(chain, params)
    omega = _drive_vector(chain, params)
    (ia, ib), index = _pair_index(n)
    dim = ia.size
    mat = np.zeros((dim, dim), dtype=complex)
    rows = np.arange(dim)
    # (H2 C)_ab = sum_m H_am C_mb + H_bm C_am, dropping C_mm
    for a_slot, b_slot in ((ia, ib), (ib, ia)):
        for m in range(n):
            cols = index[m, b_slot]
            ok = cols >= 0
            np.add.at(mat, (rows[ok], cols[ok]), h1[a_slot[ok], m])
    rhs = -(omega[ia] * c1[ib] + omega[ib] * c1[ia])
    sol = _solve(mat, rhs, "two-excitation")
    c2 = np.zeros((n, n), dtype=complex)
    c2[ia, ib] = sol
    c2[ib, ia] = sol
    return c2


def _jump_channels(chain: EmitterChain, params: SystemParams) -> list[np.ndarray]:
    """Row vectors ``l`` with ``L = sum_j l_j sigma_j`` for collective channels."""
    out = [_out_vector(chain, params)]
    if params.beta_l > 0:
        out.append(math.sqrt(params.beta_l) * np.exp(1j * chain.positions))
    return out


def _power_fourth_order(chain, params, h1, omega, c1, c2, field_amp: float) -> float:
    """Order ``E^4`` transmitted photon flux from the perturbative master equation."""
    e = field_amp
    c1e, c2e = e * c1, e * e * c2
    v10 = e * omega  # drive coupling |1_j><0|
    loss = max(1.0 - params.beta - params.beta_l, 0.0)
    channels = _jump_channels(chain, params)

    # rho_10 at third order
    j21 = loss * (c2e @ np.conj(c1e))
    for lv in channels:
        j21 = j21 + (lv @ c2e) * np.conj(lv @ c1e)
    rho00 = -np.vdot(c1e, c1e).real
    comm10 = v10 * rho00 + _v12(v10, c2e) - c1e * np.vdot(c1e, v10)
    rho10 = np.linalg.solve(-1j * h1, -j21 + 1j * comm10)
    # rho_11 at fourth order: (-i H1) X + X (i H1^dag) = -J(rho22) + i[V, rho]_11
    j22 = loss * (c2e @ np.conj(c2e))
    for lv in channels:
        u = lv @ c2e
        j22 = j22 + np.outer(u, np.conj(u))
    vr21 = _v12_matrix(v10, c2e, c1e)  # V12 rho21
    comm11 = np.outer(v10, np.conj(rho10)) + vr21 - np.outer(rho10, np.conj(v10)) - vr21.conj().T
    rhs = -j22 + 1j * comm11
    rho11 = sla.solve_sylvester(-1j * h1, 1j * h1.conj().T, rhs)
    ell = _out_vector(chain, params)
    sigma3 = rho10 + np.conj(c1e) @ c2e  # <sigma_j>: rho10 + sum_m c1_m^* C_jm
    pop4 = rho11.T + np.conj(c2e).T @ c2e  # [j, l] -> <sigma_j^dag sigma_l>
    p = 2 * (e * np.conj(ell @ sigma3)).real + (np.conj(ell) @ pop4 @ ell).real
    return float(p)


def _v12(v10: np.ndarray, c2e: np.ndarray) -> np.ndarray:
    """``(V rho_20)_{1}``: lowering a pair state by the drive, ``sum_m conj(v_m) C_jm``."""
    return c2e @ np.conj(v10)


def _v12_matrix(v10: np.ndarray, c2e: np.ndarray, c1e: np.ndarray) -> np.ndarray:
    """``V_12 rho_21`` with ``rho_21 = |C><c1|``."""
    return np.outer(c2e @ np.conj(v10), np.conj(c1e))


def _propagated_amplitude(h1, ell, c1, t, c2, x: np.ndarray) -> np.ndarray:
    # detection collapses a_out onto the state; the remainder relaxes under the
    # same driven dynamics towards the steady amplitude t * c1
    after_one = c1 + c2 @ ell
    steady = t * c1
    out = np.empty(x.shape, dtype=complex)
    for i, xi in enumerate(x.ravel()):
        d = steady + sla.expm(-1j * h1 * xi) @ (after_one - steady)
        out.flat[i] = t + ell @ d
    return out


def two_photon_amplitude(chain: EmitterChain, params: SystemParams, x_grid) -> np.ndarray:
    """Transmitted two-photon amplitude per unit drive squared.

    Equals ``psi_N(x)`` up to a global phase when ``beta_l = 0``.
    """
    x = np.abs(np.asarray(x_grid, dtype=float))
    h1 = coupling_matrix(chain, params)
    c1, t = single_excitation_solve(chain, params)
    c2 = two_excitation_solve(chain, params, c1)
    return _propagated_amplitude(h1, _out_vector(chain, params), c1, t, c2, x)


def output_observables(chain: EmitterChain, params: SystemParams, x_grid) -> ObservableRecord:
    """``g2(x)`` of the forward output and the transmitted flux through fourth order in the drive."""
    x = np.abs(np.asarray(x_grid, dtype=float))
    h1 = coupling_matrix(chain, params)
    omega = _drive_vector(chain, params)
    c1, t = single_excitation_solve(chain, params)
    c2 = two_excitation_solve(chain, params, c1)
    amp = _propagated_amplitude(h1, _out_vector(chain, params), c1, t, c2, x)
    p_lin_unit = abs(t) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        g2 = np.abs(amp) ** 2 / p_lin_unit**2
    p_in = params.p_in
    linear = p_in * p_lin_unit
    nonlinear = _power_fourth_order(chain, params, h1, omega, c1, c2, math.sqrt(p_in)) if p_in > 0 else 0.0
    return ObservableRecord(g2, linear + nonlinear, linear, nonlinear)


def _aggregate(records: list[ObservableRecord]) -> tuple[ObservableRecord, ObservableRecord]:
    g2 = np.stack([r.g2 for r in records])
    scal = np.array([[r.power, r.linear_power, r.nonlinear_power] for r in records])
    ddof = 1 if len(records) > 1 else 0
    mean = ObservableRecord(g2.mean(axis=0), *map(float, scal.mean(axis=0)))
    std = ObservableRecord(g2.std(axis=0, ddof=ddof), *map(float, scal.std(axis=0, ddof=ddof)))
    return mean, std


def ensemble_run(params: SystemParams, n_realizations: int, master_seed: int, x_grid, *, workers: int = 1) -> EnsembleResult:
    """Average observables over random inter-emitter phases.

    Realization ``i`` uses stream ``(master_seed, i)``, so the result does not
    depend on scheduling; aggregation is in realization order.
    """
    if n_realizations < 1:
        raise ValueError("n_realizations must be at least 1")
    x_grid = np.asarray(x_grid, dtype=float)

    def one(i):
        chain = sample_chain(params.n_emitters, master_seed, i)
        try:
            return i, output_observables(chain, params, x_grid), None
        except (np.linalg.LinAlgError, ValueError) as exc:
            return i, None, str(exc)

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, range(n_realizations)))
    else:
        results = [one(i) for i in range(n_realizations)]
    results.sort(key=lambda r: r[0])
    records = [r for _, r, err in results if err is None]
    failures = [(i, err) for i, _, err in results if err is not None]
    if not records:
        raise RuntimeError(f"all {n_realizations} realizations failed: {failures[:3]}")
    mean, std = _aggregate(records)
    config = {
        "n_emitters": params.n_emitters,
        "beta": params.beta,
        "beta_l": params.beta_l,
        "drive": params.drive,
        "master_seed": master_seed,
        "n_realizations": n_realizations,
    }
    return EnsembleResult(records, mean, std, len(records), config, failures)
