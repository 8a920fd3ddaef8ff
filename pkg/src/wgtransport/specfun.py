"""Special functions and overflow-safe complex arithmetic.

The closed-form two-photon wavefunction mixes factorials of order ``2N`` with
tiny powers of the coupling, so intermediates are carried as
:class:`ScaledComplex` values (unit mantissa, power-of-two exponent).
"""
from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

MAX_GAMMA_ORDER = 512
HYP0F2_MAX_TERMS = 100_000
HYP0F2_RTOL = 1e-16

# exp(-z) underflows past this; switch to log-space terms
_RECURRENCE_LIMIT = 700.0


class SeriesConvergenceError(ArithmeticError):
    """A power series did not reach its cutoff within the allowed terms."""


def _split(value: complex) -> tuple[complex, int]:
    if value == 0:
        return 0j, 0
    mag = abs(value)
    if not math.isfinite(mag):
        raise OverflowError(f"cannot scale non-finite value {value!r}")
    _, e = math.frexp(mag)
    shift = e - 1
    m = complex(math.ldexp(value.real, -shift), math.ldexp(value.imag, -shift))
    # frexp on |z| can leave |m| a hair below 1 after the component-wise shift
    if abs(m) < 1.0:
        m *= 2.0
        shift -= 1
    elif abs(m) >= 2.0:
        m /= 2.0
        shift += 1
    return m, shift


@dataclass(frozen=True)
class ScaledComplex:
    """Complex number ``mantissa * 2**exponent`` with ``1 <= |mantissa| < 2``."""

    mantissa: complex
    exponent: int

    @classmethod
    def from_complex(cls, value: complex) -> "ScaledComplex":
        m, e = _split(complex(value))
        return cls(m, e)

    @classmethod
    def from_int(cls, value: int) -> "ScaledComplex":
        """Exact-to-rounding conversion of an arbitrarily large integer."""
        if value == 0:
            return cls(0j, 0)
        excess = max(abs(value).bit_length() - 60, 0)
        return cls.from_complex(complex(value >> excess)) * cls(1 + 0j, excess)

    @classmethod
    def from_gaussian_rational(cls, re_num: int, im_num: int, den: int) -> "ScaledComplex":
        """Correctly rounded ``(re_num + i im_num) / den`` for huge integers."""
        if den <= 0:
            raise ValueError("denominator must be positive")
        top = max(abs(re_num).bit_length(), abs(im_num).bit_length())
        if top == 0:
            return cls.zero()
        e = top - den.bit_length()
        parts = []
        for num in (re_num, im_num):
            frac = Fraction(num, den << e) if e >= 0 else Fraction(num << -e, den)
            parts.append(float(frac))
        return cls.from_complex(complex(*parts)) * cls(1 + 0j, e)

    @classmethod
    def zero(cls) -> "ScaledComplex":
        return cls(0j, 0)

    @property
    def is_zero(self) -> bool:
        return self.mantissa == 0

    def log2_abs(self) -> float:
        if self.is_zero:
            return -math.inf
        return math.log2(abs(self.mantissa)) + self.exponent

    def to_complex(self) -> complex:
        """Convert to a plain complex; raises OverflowError if too large."""
        if self.is_zero:
            return 0j
        if self.exponent > 1023:
            raise OverflowError(f"2**{self.exponent} exceeds double range")
        return complex(
            math.ldexp(self.mantissa.real, self.exponent),
            math.ldexp(self.mantissa.imag, self.exponent),
        )

    def __complex__(self) -> complex:
        return self.to_complex()

    def _renorm(self, m: complex, e: int) -> "ScaledComplex":
        if m == 0:
            return ScaledComplex.zero()
        mm, shift = _split(m)
        return ScaledComplex(mm, e + shift)

    def __mul__(self, other: "ScaledComplex | complex | float | int") -> "ScaledComplex":
        if not isinstance(other, ScaledComplex):
            other = ScaledComplex.from_complex(complex(other))
        return self._renorm(self.mantissa * other.mantissa, self.exponent + other.exponent)

    __rmul__ = __mul__

    def reciprocal(self) -> "ScaledComplex":
        if self.is_zero:
            raise ZeroDivisionError("reciprocal of zero")
        return self._renorm(1.0 / self.mantissa, -self.exponent)

    def __truediv__(self, other: "ScaledComplex | complex | float | int") -> "ScaledComplex":
        if not isinstance(other, ScaledComplex):
            other = ScaledComplex.from_complex(complex(other))
        return self * other.reciprocal()

    def __neg__(self) -> "ScaledComplex":
        return ScaledComplex(-self.mantissa, self.exponent)

    def __add__(self, other: "ScaledComplex") -> "ScaledComplex":
        return scaled_combine([self, other])

    def __sub__(self, other: "ScaledComplex") -> "ScaledComplex":
        return scaled_combine([self, -other])

    def __pow__(self, n: int) -> "ScaledComplex":
        if n < 0:
            return self.reciprocal() ** (-n)
        result = ScaledComplex(1 + 0j, 0)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result


def scaled_combine(terms: Sequence[ScaledComplex]) -> ScaledComplex:
    """Sum scaled values after rescaling each to the largest exponent.

    The summation order is the input order, so the result is bitwise
    reproducible for a fixed list.
    """
    if not terms:
        raise ValueError("scaled_combine needs at least one term")
    live = [t for t in terms if not t.is_zero]
    if not live:
        return ScaledComplex.zero()
    top = max(t.exponent for t in live)
    acc = 0j
    for t in live:
        shift = t.exponent - top
        acc += complex(math.ldexp(t.mantissa.real, shift), math.ldexp(t.mantissa.imag, shift))
    if acc == 0:
        return ScaledComplex.zero()
    m, e = _split(acc)
    return ScaledComplex(m, top + e)


def scaled_dot(coeffs: Sequence[ScaledComplex], arrays: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Return ``sum_n coeffs[n] * arrays[n]`` and its pointwise condition number.

    The condition number is ``sum |term| / |sum|``; it is ``inf`` where the sum
    cancels exactly.
    """
    arrays = [np.asarray(a, dtype=complex) for a in arrays]
    shape = np.broadcast_shapes(*(a.shape for a in arrays)) if arrays else ()
    scales = []
    for c, a in zip(coeffs, arrays):
        amax = float(np.max(np.abs(a))) if a.size else 0.0
        if c.is_zero or amax == 0.0:
            scales.append(-math.inf)
        else:
            scales.append(c.exponent + math.frexp(amax)[1])
    top = max(scales) if scales else -math.inf
    total = np.zeros(shape, dtype=complex)
    magnitude = np.zeros(shape, dtype=float)
    if top == -math.inf:
        return total, np.ones(shape)
    for c, a, s in zip(coeffs, arrays, scales):
        if s == -math.inf:
            continue
        term = c.mantissa * np.ldexp(1.0, c.exponent - top) * a
        total = total + term
        magnitude = magnitude + np.abs(term)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(np.abs(total) > 0, magnitude / np.abs(total), np.inf)
    cond = np.where(magnitude == 0, 1.0, cond)
    top = int(top)
    return np.ldexp(total.real, top) + 1j * np.ldexp(total.imag, top), cond


def poisson_weights(n: int, z) -> np.ndarray:
    """``exp(-z) z**l / l!`` for ``l = 0..n``; shape ``(n+1,) + z.shape``.

    Successive differences of the regularized upper gamma terms, evaluated in
    log space so large ``|z|`` neither overflows nor underflows early.
    """
    z = np.asarray(z, dtype=complex)
    ell = np.arange(n + 1).reshape((-1,) + (1,) * z.ndim)
    log_fact = np.array([math.lgamma(k + 1) for k in range(n + 1)]).reshape(ell.shape)
    nonzero = z != 0
    safe = np.where(nonzero, z, 1.0)
    with np.errstate(under="ignore"):
        w = np.exp(ell * np.log(safe) - safe - log_fact)
    return np.where(nonzero, w, (ell == 0).astype(complex))


def _check_order(n: int, max_order: int) -> None:
    if n < 0:
        raise ValueError(f"order must be nonnegative, got {n}")
    if n > max_order:
        raise ValueError(f"order {n} exceeds configured maximum {max_order}")


def regularized_gamma_upper_terms(n: int, z, max_order: int = MAX_GAMMA_ORDER) -> np.ndarray:
    """Return ``Q_j(z) = Gamma_{j+1}(z)/j!`` for ``j = 0..n``.

    ``Q_j(z) = exp(-z) * sum_{k<=j} z**k / k!``.  Broadcasts over ``z``; the
    result has shape ``(n + 1,) + shape(z)``.  For ``Re z < 0`` with
    ``|z| < j/2`` the complementary tail ``1 - exp(-z) sum_{k>j}`` is used,
    which avoids the alternating-sign cancellation of the partial sum.
    """
    _check_order(n, max_order)
    z = np.asarray(z, dtype=complex)
    k = np.arange(n + 1).reshape((-1,) + (1,) * z.ndim)
    if np.all(z.real < _RECURRENCE_LIMIT):
        ratios = np.where(k == 0, 1.0 + 0j, z / np.maximum(k, 1))
        terms = np.exp(-z) * np.cumprod(ratios, axis=0)
    else:
        with np.errstate(divide="ignore"):
            logz = np.log(np.where(z == 0, 1.0, z))
        lg = np.array([math.lgamma(j + 1.0) for j in range(n + 1)]).reshape(k.shape)
        terms = np.exp(-z + k * logz - lg)
        terms = np.where((z == 0) & (k > 0), 0.0, terms)
    q = np.cumsum(terms, axis=0)

    # once j exceeds |z| the tail terms shrink monotonically; the partial sum
    # there cancels by up to exp(|z| - Re z), the complement does not
    bad = np.abs(z) < k
    if np.any(bad):
        q = np.where(bad, _complement_terms(n, np.where(np.any(bad, axis=0), z, 0)), q)
    return q


def _log_power_terms(j: np.ndarray, z: np.ndarray) -> np.ndarray:
    """``z**j / j!`` via logarithms (``z = 0`` gives the Kronecker delta)."""
    lg = np.array([math.lgamma(v + 1.0) for v in j.ravel()]).reshape(j.shape)
    with np.errstate(divide="ignore"):
        logz = np.log(np.where(z == 0, 1.0, z))
    out = np.exp(j * logz - lg)
    return np.where(z == 0, (j == 0).astype(float), out)


def _complement_terms(n: int, z: np.ndarray) -> np.ndarray:
    """``1 - exp(-z) sum_{k>j} z^k/k!`` for ``j = 0..n``.

    The tail beyond ``n`` is summed forward once; lower orders follow from
    ``T_{j-1} = T_j + z^j/j!``.
    """
    out = np.empty((n + 1,) + z.shape, dtype=complex)
    ez = np.exp(-z)
    term = _log_power_terms(np.full(z.shape, n + 1.0), z)
    tail = term.copy()
    k = n + 1
    while True:
        k += 1
        term = term * z / k
        tail = tail + term
        if np.all(np.abs(term) <= 1e-17 * np.abs(tail)) or k > n + 4000:
            break
    out[n] = 1.0 - ez * tail
    for j in range(n, 0, -1):
        tail = tail + _log_power_terms(np.full(z.shape, float(j)), z)
        out[j - 1] = 1.0 - ez * tail
    return out


def incomplete_gamma_upper_int(n: int, z: complex, max_order: int = MAX_GAMMA_ORDER) -> complex:
    """Upper incomplete Gamma of integer order, ``Gamma_{n+1}(z)``.

    Uses ``n! exp(-z) sum_{k=0}^n z**k/k!``.  Raises OverflowError when the
    result does not fit a double; :func:`incomplete_gamma_upper_int_scaled`
    covers that range.
    """
    return incomplete_gamma_upper_int_scaled(n, z, max_order).to_complex()


def incomplete_gamma_upper_int_scaled(n: int, z: complex, max_order: int = MAX_GAMMA_ORDER) -> ScaledComplex:
    _check_order(n, max_order)
    z = complex(z)
    if abs(z) > 0 and (z.real >= _RECURRENCE_LIMIT or abs(z) > 1e3 / 2):
        q = _regularized_scaled(n, z)
    else:
        q = ScaledComplex.from_complex(complex(regularized_gamma_upper_terms(n, z, max_order)[n]))
    return q * ScaledComplex.from_int(math.factorial(n))


def _regularized_scaled(n: int, z: complex) -> ScaledComplex:
    if z.real < 0 and abs(z) < n / 2.0:
        # already regular-sized, no scaling needed
        return ScaledComplex.from_complex(complex(_complement_terms(n, np.asarray(z))[n]))
    # sum in scaled arithmetic, then multiply by exp(-z) in log form
    term = ScaledComplex(1 + 0j, 0)
    acc = [term]
    zs = ScaledComplex.from_complex(z)
    for k in range(1, n + 1):
        term = term * zs / k
        acc.append(term)
    s = scaled_combine(acc)
    log2_mag = -z.real / math.log(2.0)
    e = math.floor(log2_mag)
    phase = complex(math.cos(-z.imag), math.sin(-z.imag)) * 2.0 ** (log2_mag - e)
    return s * ScaledComplex.from_complex(phase) * ScaledComplex(1 + 0j, e)


def hyp0f2(b1: float, b2: float, z: float, max_terms: int = HYP0F2_MAX_TERMS, rtol: float = HYP0F2_RTOL) -> float:
    """Generalized hypergeometric ``0F2(;b1,b2;z)`` by direct series summation."""
    for b in (b1, b2):
        if b <= 0 and float(b).is_integer():
            raise ValueError(f"lower parameter {b} is a nonpositive integer")
    total = 1.0
    term = 1.0
    for k in range(max_terms):
        term *= z / ((b1 + k) * (b2 + k) * (k + 1))
        total += term
        if abs(term) <= rtol * abs(total):
            return total
    raise SeriesConvergenceError(f"0F2 series did not converge in {max_terms} terms (z={z})")


def hyp0f2_partial_sums(b1: float, b2: float, z: float, n_terms: int) -> np.ndarray:
    """First ``n_terms`` partial sums of the 0F2 series (diagnostics)."""
    k = np.arange(n_terms)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(k == 0, 1.0, z / ((b1 + k - 1) * (b2 + k - 1) * np.maximum(k, 1)))
    return np.cumsum(np.cumprod(ratios))


def log_binomial(n: int, k: int) -> float:
    """Natural log of the binomial coefficient C(n, k)."""
    if n < 0 or k < 0:
        raise ValueError("n and k must be nonnegative")
    if k > n:
        raise ValueError(f"k={k} exceeds n={n}")
    return math.log(math.comb(n, k))


def scaled_sum(values: Iterable[ScaledComplex]) -> ScaledComplex:
    return scaled_combine(list(values))
