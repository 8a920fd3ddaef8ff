"""Property checks run by ``wgtransport --selftest``.

Each check returns ``(passed, detail)``; the runner times it and prints one line.
Parameters are kept small so the whole suite finishes in well under a minute.
"""
from __future__ import annotations

import math
import sys
import tempfile
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import asymptotics, bidirectional, chiral_exact, observables, oracle, specfun
from .params import SystemParams


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


_CHECKS: list[tuple[str, Callable[[], tuple[bool, str]]]] = []


def check(name: str):
    def deco(fn):
        _CHECKS.append((name, fn))
        return fn

    return deco


def _rel_sup(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))) / np.max(np.abs(b)))


# -- special functions ---------------------------------------------------------


@check("specfun: incomplete gamma recurrence")
def _gamma_recurrence():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 101))
        z = complex(rng.uniform(-20, 40), rng.uniform(-40, 40))
        lhs = specfun.incomplete_gamma_upper_int_scaled(n, z)
        rhs = specfun.incomplete_gamma_upper_int_scaled(n - 1, z) * specfun.ScaledComplex.from_int(n)
        extra = specfun.ScaledComplex.from_complex(z) ** n * specfun.ScaledComplex.from_complex(np.exp(-z))
        ref = specfun.scaled_combine([rhs, extra])
        diff = specfun.scaled_combine([lhs, -ref])
        worst = max(worst, abs(complex(diff / lhs)) if not lhs.is_zero else 0.0)
    return worst <= 1e-11, f"max relative defect {worst:.2e}"


@check("specfun: scaled product associativity")
def _assoc():
    rng = np.random.default_rng(12)
    worst = 0.0
    for _ in range(500):
        a, b, c = (
            specfun.ScaledComplex(complex(rng.uniform(1, 2), 0) * np.exp(1j * rng.uniform(0, 6.3)), int(rng.integers(-1000, 1001)))
            for _ in range(3)
        )
        left, right = (a * b) * c, a * (b * c)
        d = left / right
        worst = max(worst, abs(complex(d) - 1.0))
    return worst <= 4 * np.finfo(float).eps, f"max deviation {worst:.2e}"


@check("specfun: 0F2 partial sums monotone")
def _hyp_monotone():
    ok = True
    for b1, b2, z in [(0.5, 0.5, 4.0), (1.0, 1.5, 16.0), (0.5, 0.5, 100.0), (2.0, 3.0, 0.1)]:
        ps = specfun.hyp0f2_partial_sums(b1, b2, z, 60)
        ok &= bool(np.all(np.diff(ps) >= 0))
    return ok, "checked 4 parameter sets"


@check("specfun: log binomial vs exact integer")
def _logbinom():
    worst = max(
        abs(specfun.log_binomial(n, k) - math.log(math.comb(n, k))) / max(1.0, math.log(math.comb(n, k)))
        for n, k in [(200, 100), (10_000, 17), (5, 2), (9999, 5000), (10_000, 1)]
    )
    return worst <= 1e-13, f"max relative error {worst:.2e}"


# -- closed form -------------------------------------------------------------


@check("chiral: printed transmission forms agree")
def _transmission_forms():
    rng = np.random.default_rng(13)
    k = rng.uniform(-50, 50, 1000)
    b = rng.uniform(0, 1, 1000)
    d1 = np.max(np.abs(chiral_exact.transmission_t(k, b) - chiral_exact.transmission_t_pole(k, b)))
    d2 = np.max(np.abs(chiral_exact.bound_transmission(k, b) - chiral_exact.bound_transmission_pole(k, b)))
    return max(d1, d2) <= 1e-13, f"max difference {max(d1, d2):.2e}"


@check("chiral: lossless chain is unitary")
def _unitary():
    k = np.linspace(-30, 30, 601)
    dev = max(np.max(np.abs(np.abs(chiral_exact.transmission_t(k, 1.0)) - 1)), np.max(np.abs(np.abs(chiral_exact.bound_transmission(k, 1.0)) - 1)))
    return dev <= 1e-14, f"max | |t| - 1 | = {dev:.2e}"


@check("chiral: correlations decay")
def _decay():
    worst = 0.0
    for n, b in [(5, 0.3), (30, 0.05), (10, 0.9)]:
        p = SystemParams(n, b)
        xi = asymptotics.xi(p)
        far = 1e3 * max(1.0, 1.0 / xi)
        phi0 = abs(chiral_exact.phi_x_exact(p, [0.0])[0])
        phi_far, _ = oracle.phi_x_quadrature(p, [far, 2 * far])
        worst = max(worst, float(np.max(np.abs(phi_far))) / phi0)
    return worst < 1e-6, f"max |phi(x_far)|/|phi(0)| = {worst:.2e}"


@check("chiral: psi even in x")
def _even():
    x = np.linspace(0, 15, 61)
    ok = all(
        np.array_equal(chiral_exact.psi_exact(SystemParams(n, b), x), chiral_exact.psi_exact(SystemParams(n, b), -x))
        for n, b in [(3, 0.2), (20, 0.05), (7, 1.0)]
    )
    return ok, "bitwise symmetric"


@check("chiral: Parseval")
def _parseval():
    worst = 0.0
    gx, gw = np.polynomial.legendre.leggauss(40)
    for n, b in [(5, 0.3), (10, 0.05), (20, 0.9)]:
        p = SystemParams(n, b)
        grid = oracle.k_grid(b, max(1.0, asymptotics.xi(p)), refine=1)
        k_side = grid.integrate_even(np.abs(chiral_exact.phi_k_exact(p, grid.nodes)) ** 2) / (2 * math.pi)
        e = np.concatenate([[0.0], np.geomspace(1e-3, 400 / b, 300)])
        a, c = e[:-1, None], e[1:, None]
        nodes = (0.5 * (a + c) + 0.5 * (c - a) * gx).ravel()
        weights = (0.5 * (c - a) * gw).ravel()
        x_side = 2 * weights @ np.abs(chiral_exact.phi_x_exact(p, nodes)) ** 2
        worst = max(worst, abs(x_side / k_side - 1))
    return worst <= 1e-6, f"max relative mismatch {worst:.2e}"


@check("chiral: optical depth / 4 xi^2 -> -1 as beta -> 0")
def _optical_depth():
    # at fixed N beta the deviation from -1 is 2 beta + O(beta^2)
    devs = []
    for b in (0.01, 0.001, 0.0001):
        n = round(5 / b)
        devs.append(abs(2 * n * math.log(1 - 2 * b) / (4 * n * b * (1 - b)) + 1))
    slope = [d / b for d, b in zip(devs, (0.01, 0.001, 0.0001))]
    ok = devs[-1] < 1e-3 and all(abs(s_ - 2) < 0.05 for s_ in slope)
    return ok, "deviations " + ", ".join(f"{d:.2e}" for d in devs)


# -- oracle ----------------------------------------------------------------


@check("oracle: quadrature matches closed form")
def _oracle_equivalence():
    x = np.linspace(-25, 25, 200)
    worst = 0.0
    for n in (1, 2, 5):
        for b in (0.05, 0.3, 0.5, 0.9, 1.0):
            p = SystemParams(n, b)
            quad, _ = oracle.psi_x_quadrature(p, x)
            worst = max(worst, _rel_sup(quad, chiral_exact.psi_exact(p, x)))
    return worst <= 1e-6, f"max sup-norm relative deviation {worst:.2e}"


@check("oracle: tolerance halving within error estimate")
def _halving():
    x = np.linspace(-20, 20, 41)
    ok = True
    for n, b in [(5, 0.3), (20, 0.05)]:
        p = SystemParams(n, b)
        v1, e1 = oracle.psi_x_quadrature(p, x, oracle.QuadratureSpec(1e-9, 1e-7))
        v2, _ = oracle.psi_x_quadrature(p, x, oracle.QuadratureSpec(5e-10, 5e-8))
        ok &= bool(np.all(np.abs(v1 - v2) <= e1 + 1e-15))
    return ok, "all points within estimate"


@check("oracle: passivity at weak drive")
def _passive():
    worst = 0.0
    for b in (0.05, 0.3, 0.5, 0.9):
        for r in oracle.power_sweep(b, 0.1, [1, 3, 10, 30, 100]):
            worst = max(worst, r.total)
    return worst <= 1.0, f"max total/P_in {worst:.4f}"


@check("oracle: Fourier dual representation")
def _fourier():
    rep = oracle.fourier_crosscheck(SystemParams(5, 0.3), np.linspace(0, 200, 20001), np.linspace(-6, 6, 25))
    return rep.max_deviation < 1e-6, f"max deviation {rep.max_deviation:.2e}"


@check("oracle: power matches master equation")
def _power_calibration():
    worst = 0.0
    for n, b in [(1, 0.3), (3, 0.1), (6, 0.5), (8, 0.2), (4, 0.7)]:
        p = SystemParams(n, b, drive=0.01)
        ref = bidirectional.output_observables(bidirectional.EmitterChain.regular(n), p, [0.0])
        got = oracle.power_integrals(p)
        worst = max(worst, abs(got.nonlinear / (ref.nonlinear_power / p.p_in) - 1))
    return worst <= 1e-8, f"max relative deviation {worst:.2e}"


# -- observables -------------------------------------------------------------


@check("observables: g2 -> 1 at large delay")
def _g2_limit():
    worst = 0.0
    for n, b in [(5, 0.3), (30, 0.05)]:
        p = SystemParams(n, b)
        far = 1e3 * max(1.0, 1.0 / asymptotics.xi(p))
        worst = max(worst, abs(float(observables.g2(p, [far])[0]) - 1))
    return worst <= 1e-4, f"max |g2 - 1| = {worst:.2e}"


@check("observables: g2 symmetric")
def _g2_sym():
    p = SystemParams(30, 0.05)
    x = np.linspace(0, 10, 21)
    return bool(np.array_equal(observables.g2(p, x), observables.g2(p, -x))), "bitwise symmetric"


@check("observables: drive-corrected g2 below weak-drive g2")
def _g2_corr():
    ok = True
    for n, b, d in [(30, 0.05, 0.05), (10, 0.2, 0.02), (50, 0.1, 0.1)]:
        p = SystemParams(n, b, drive=d)
        ok &= observables.g2_corrected(p) <= float(observables.g2(p, [0.0])[0])
    return ok, "3 parameter sets"


@check("observables: pair/mixed ratio approaches asymptote (small beta)")
def _pair_mixed():
    worst = 0.0
    for b in (0.05, 0.1):
        n = math.ceil(25 / (b * (1 - b)))
        r = oracle.power_sweep(b, 0.1, [n])[0]
        worst = max(worst, abs(r.pair / r.mixed / asymptotics.pair_fraction(b) - 1))
    return worst <= 0.05, f"max relative deviation {worst:.3f}"


# -- asymptotics ---------------------------------------------------------------


@check("asymptotics: Hurwitz sum identity")
def _hurwitz():
    n = 1000
    ratio = asymptotics._hurwitz_sum(n) / ((2 / 3 - 1 / (3 * math.sqrt(2))) * n**-1.5)
    return abs(ratio - 1) <= 0.01, f"ratio {ratio:.5f}"


@check("asymptotics: pair fraction symmetric")
def _pf_sym():
    b = np.linspace(0.01, 0.99, 99)
    dev = max(abs(asymptotics.pair_fraction(x) - asymptotics.pair_fraction(1 - x)) for x in b)
    # 1 - beta is itself rounded, so agreement is to a few ulps
    return dev <= 4 * np.finfo(float).eps, f"max difference {dev:.1e}"


@check("asymptotics: scaling normalization")
def _scaling():
    s = asymptotics.AsymptoticScaling.from_params(SystemParams(100, 0.07))
    v = s.gtilde_zero * 4 * math.pi * s.xi**2 / 0.07**2
    return abs(v - 1) <= 1e-15, f"value {v!r}"


@check("asymptotics: pair + mixed identity")
def _identity():
    worst = 0.0
    for n, b in [(30, 0.05), (600, 0.1), (1000, 0.5), (77, 0.93)]:
        p = SystemParams(n, b, drive=0.1)
        a = asymptotics.power_asymp(p)
        worst = max(worst, abs(a.nonlinear / asymptotics.nonlinear_power_asymp(p) - 1))
    return worst <= 1e-12, f"max relative defect {worst:.1e}"


@check("asymptotics: g2 converges at xi^2 = 25")
def _g2_asymp():
    p = SystemParams(527, 0.05)
    x = np.linspace(-5, 5, 101) / asymptotics.xi(p)
    dev = _rel_sup(asymptotics.g2_asymp(p, x), observables.g2(p, x))
    return dev < 0.05, f"sup-norm relative deviation {dev:.3f}"


@check("asymptotics: power asymptote at xi^2 >= 10 (beta <= 0.3)")
def _power_asymp():
    worst = 0.0
    for b in (0.05, 0.1, 0.3):
        ns = [math.ceil(x2 / (b * (1 - b))) for x2 in (10, 40)]
        for r in oracle.power_sweep(b, 0.1, ns):
            ref = asymptotics.nonlinear_power_asymp(SystemParams(r.n_emitters, b, drive=0.1))
            worst = max(worst, abs(r.nonlinear / ref - 1))
    return worst <= 0.05, f"max relative deviation {worst:.3f}"


# -- bidirectional ---------------------------------------------------------------


@check("bidirectional: chiral reduction")
def _bidir_reduction():
    x = np.linspace(0, 10, 11)
    worst = 0.0
    for n in (1, 2, 5, 10, 30):
        p = SystemParams(n, 0.05 if n == 30 else 0.2, drive=0.01)
        chain = bidirectional.sample_chain(n, 7)
        rec = bidirectional.output_observables(chain, p, x)
        worst = max(worst, _rel_sup(rec.g2, observables.g2(p, x)))
        worst = max(worst, abs(rec.power / p.p_in / oracle.power_integrals(p).total - 1))
    return worst <= 1e-6, f"max relative deviation {worst:.2e}"


@check("bidirectional: single-emitter transmission independent of beta_l")
def _single():
    dev = 0.0
    for b, bl in [(0.3, 0.0), (0.3, 0.2), (0.05, 0.05), (0.5, 0.5)]:
        _, t = bidirectional.single_excitation_solve(bidirectional.EmitterChain(1, ()), SystemParams(1, b, beta_l=bl))
        dev = max(dev, abs(t - (1 - 2 * b)))
    return dev <= 1e-14, f"max deviation {dev:.1e}"


@dataclass(frozen=True)
class _ShiftedChain(bidirectional.EmitterChain):
    shift: float = 0.0

    @property
    def positions(self) -> np.ndarray:
        return super().positions + self.shift


@check("bidirectional: global phase invariance")
def _phase():
    p = SystemParams(6, 0.1, beta_l=0.05, drive=0.01)
    base = bidirectional.sample_chain(6, 3)
    x = np.linspace(0, 5, 6)
    a = bidirectional.output_observables(base, p, x)
    b = bidirectional.output_observables(_ShiftedChain(6, base.phases, shift=1.234), p, x)
    dev = max(_rel_sup(b.g2, a.g2), abs(a.power - b.power) / a.power)
    return dev <= 1e-10, f"max relative deviation {dev:.1e}"


@check("bidirectional: ensemble independent of worker count")
def _ensemble_det():
    p = SystemParams(5, 0.1, beta_l=0.1, drive=0.01)
    x = np.linspace(0, 4, 5)
    a = bidirectional.ensemble_run(p, 6, 99, x, workers=1)
    b = bidirectional.ensemble_run(p, 6, 99, x, workers=3)
    same = np.array_equal(a.mean.g2, b.mean.g2) and np.array_equal(a.std.g2, b.std.g2) and a.mean.power == b.mean.power
    return bool(same), "bitwise identical"


# -- cli ---------------------------------------------------------------------


@check("cli: identical config gives identical CSV")
def _cli_det():
    from .cli import parse_config, run_scenario

    text = "[scenario]\nname = g2-curve\n[system]\nn_emitters = 10\nbeta = 0.1\n[grid]\nx_min = -5\nx_max = 5\nx_count = 21\n"
    with tempfile.TemporaryDirectory() as d1, tempfile.TemporaryDirectory() as d2:
        for d in (d1, d2):
            cfg = parse_config(text).with_output(Path(d))
            run_scenario(cfg)
        files = sorted(p.name for p in Path(d1).glob("*.csv"))
        same = all((Path(d1) / f).read_bytes() == (Path(d2) / f).read_bytes() for f in files)
    return bool(files) and same, f"{len(files)} CSV files compared"


def run_selftest(stream=None) -> list[CheckResult]:
    stream = stream or sys.stdout
    results = []
    for name, fn in _CHECKS:
        t0 = time.perf_counter()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", observables.DarkLinearChannelWarning)
                passed, detail = fn()
        except Exception as exc:  # a crash is a failure, not an abort
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        res = CheckResult(name, bool(passed), detail, time.perf_counter() - t0)
        results.append(res)
        print(f"{'PASS' if res.passed else 'FAIL'}  {name}  ({detail}; {res.seconds:.2f}s)", file=stream)
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} checks passed", file=stream)
    return results
