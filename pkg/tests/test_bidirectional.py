import math
from dataclasses import dataclass

import numpy as np
import pytest
from scipy import stats

from wgtransport import bidirectional as bd
from wgtransport import chiral_exact, observables, oracle
from wgtransport.params import SystemParams


def test_sample_chain_single_emitter():
    assert bd.sample_chain(1, 5).phases == ()


def test_sample_chain_deterministic():
    assert bd.sample_chain(30, 9, 4) == bd.sample_chain(30, 9, 4)
    assert bd.sample_chain(30, 9, 4) != bd.sample_chain(30, 9, 5)


def test_sample_chain_uniform():
    phases = np.concatenate([bd.sample_chain(30, s).phases for s in range(100)])
    assert phases.min() >= 0 and phases.max() < 2 * math.pi
    assert stats.kstest(phases / (2 * math.pi), "uniform").pvalue > 0.05


def test_chain_validation():
    with pytest.raises(ValueError):
        bd.EmitterChain(3, (0.1,))
    with pytest.raises(ValueError):
        bd.sample_chain(0, 1)


@pytest.mark.parametrize("beta_l", [0.0, 0.1, 0.45])
def test_single_emitter_transmission(beta_l):
    _, t = bd.single_excitation_solve(bd.EmitterChain.regular(1), SystemParams(1, 0.3, beta_l=beta_l))
    assert t == pytest.approx(0.4, abs=1e-14)


def test_chiral_chain_transmission():
    chain = bd.sample_chain(12, 3)
    _, t = bd.single_excitation_solve(chain, SystemParams(12, 0.2))
    assert abs(t) == pytest.approx(0.6**12, rel=1e-12)


def test_two_emitters_against_eigendecomposition():
    beta = beta_l = 0.3
    phi = 1.1
    chain = bd.EmitterChain(2, (phi,))
    p = SystemParams(2, beta, beta_l=beta_l)
    # forward coupling picks up +phi from emitter 1 to 2, backward the same phase on return
    h = np.array([[-0.5j, -1j * beta_l * np.exp(1j * phi)], [-1j * beta * np.exp(1j * phi), -0.5j]])
    lam, v = np.linalg.eig(h)
    drive = -1j * math.sqrt(beta) * np.exp(1j * np.array([0.0, phi]))
    c = v @ ((np.linalg.solve(v, -drive)) / lam)
    t_ref = 1 + math.sqrt(beta) * np.exp(-1j * np.array([0.0, phi])) @ c
    _, t = bd.single_excitation_solve(chain, p)
    assert t == pytest.approx(t_ref, rel=1e-13)


def test_singular_chain_reported():
    with pytest.raises(bd.SingularSystemError) as info:
        bd.single_excitation_solve(bd.EmitterChain(2, (0.0,)), SystemParams(2, 0.5, beta_l=0.5))
    assert info.value.condition > bd.SINGULAR_COND


def test_rejects_overcoupling():
    with pytest.raises(ValueError):
        bd.coupling_matrix(bd.EmitterChain.regular(2), SystemParams(2, 0.6, beta_l=0.5))


def test_pair_space_excludes_double_occupation():
    c2 = bd.two_excitation_solve(bd.sample_chain(6, 1), SystemParams(6, 0.2, beta_l=0.05))
    assert np.all(np.diag(c2) == 0)
    assert np.allclose(c2, c2.T)


@pytest.mark.parametrize("n", [1, 2, 5, 10, 30])
def test_chiral_reduction_of_amplitude(n):
    p = SystemParams(n, 0.05 if n == 30 else 0.2)
    x = np.linspace(0, 15, 16)
    amp = bd.two_photon_amplitude(bd.sample_chain(n, 7), p, x)
    ref = chiral_exact.psi_exact(p, x)
    phase = amp[0] / ref[0]
    assert abs(phase) == pytest.approx(1, rel=1e-9)
    assert np.max(np.abs(amp / phase - ref)) / np.max(np.abs(ref)) < 1e-6


@pytest.mark.parametrize("beta_l", [0.0, 0.2])
def test_single_emitter_nonlinearity_against_oracle(beta_l):
    # with one emitter the backward channel acts as extra loss for the forward output
    p = SystemParams(1, 0.4, beta_l=beta_l)
    x = np.array([0.0, 0.5, 2.0, 6.0])
    amp = bd.two_photon_amplitude(bd.EmitterChain.regular(1), p, x)
    ref, _ = oracle.psi_x_quadrature(SystemParams(1, 0.4), x)
    assert np.allclose(amp, ref, rtol=1e-8, atol=1e-12)


def test_nonlinear_power_scales_with_drive_squared():
    chain = bd.sample_chain(5, 2)
    lo = bd.output_observables(chain, SystemParams(5, 0.1, beta_l=0.01, drive=1e-4), [0.0])
    hi = bd.output_observables(chain, SystemParams(5, 0.1, beta_l=0.01, drive=2e-4), [0.0])
    assert hi.nonlinear_power / lo.nonlinear_power == pytest.approx(4, rel=1e-9)
    assert hi.linear_power / lo.linear_power == pytest.approx(2, rel=1e-12)


def test_chiral_reduction_of_observables():
    p = SystemParams(30, 0.05, drive=0.02)
    x = np.linspace(-10, 10, 21)
    rec = bd.output_observables(bd.sample_chain(30, 11), p, x)
    assert np.max(np.abs(rec.g2 / observables.g2(p.with_(drive=0.0), x) - 1)) < 1e-6
    pb = oracle.power_integrals(p)
    assert rec.linear_power / p.p_in == pytest.approx(pb.linear, rel=1e-10)
    assert rec.nonlinear_power / p.p_in == pytest.approx(pb.nonlinear, rel=1e-6)


@dataclass(frozen=True)
class _Shifted(bd.EmitterChain):
    offset: float = 0.0

    @property
    def positions(self):
        return super().positions + self.offset


def test_global_phase_invariance():
    base = bd.sample_chain(6, 4)
    p = SystemParams(6, 0.15, beta_l=0.05, drive=0.01)
    x = np.linspace(0, 5, 6)
    a = bd.output_observables(base, p, x)
    b = bd.output_observables(_Shifted(base.n, base.phases, offset=2.3), p, x)
    assert np.allclose(a.g2, b.g2, rtol=1e-10)
    assert b.power == pytest.approx(a.power, rel=1e-10)


def test_ensemble_single_realization():
    p = SystemParams(4, 0.1, beta_l=0.02, drive=0.01)
    res = bd.ensemble_run(p, 1, 3, [0.0, 1.0])
    assert res.n_realizations == len(res.per_realization) == 1
    assert np.array_equal(res.mean.g2, res.per_realization[0].g2)
    assert np.all(res.std.g2 == 0) and res.std.power == 0


def test_ensemble_consistency_and_worker_independence():
    p = SystemParams(6, 0.1, beta_l=0.03, drive=0.01)
    x = [0.0, 2.0]
    a = bd.ensemble_run(p, 12, 21, x)
    b = bd.ensemble_run(p, 12, 21, x, workers=4)
    assert np.array_equal(a.mean.g2, b.mean.g2) and np.array_equal(a.std.g2, b.std.g2)
    g = np.stack([r.g2 for r in a.per_realization])
    assert np.allclose(a.mean.g2, g.mean(axis=0), rtol=1e-14)
    assert np.allclose(a.std.g2, g.std(axis=0, ddof=1), rtol=1e-12)
    assert a.config["master_seed"] == 21


def test_ensemble_realization_reproducible_in_isolation():
    p = SystemParams(5, 0.1, beta_l=0.03, drive=0.01)
    res = bd.ensemble_run(p, 6, 8, [0.0])
    alone = bd.output_observables(bd.sample_chain(5, 8, 4), p, [0.0])
    assert np.array_equal(res.per_realization[4].g2, alone.g2)


def test_ensemble_records_failures(monkeypatch):
    real = bd.output_observables

    def flaky(chain, params, x):
        if chain == bd.sample_chain(chain.n, 1, 2):
            raise bd.SingularSystemError("forced", 1e20)
        return real(chain, params, x)

    monkeypatch.setattr(bd, "output_observables", flaky)
    res = bd.ensemble_run(SystemParams(3, 0.1, beta_l=0.02, drive=0.01), 5, 1, [0.0])
    assert res.n_realizations == 4
    assert [i for i, _ in res.failures] == [2]
