"""Physical configuration shared by every solver.

Rates are normalized to the total emitter decay rate (``gamma_tot = 1``);
``gamma_tot`` is kept only so physical rates can be reported at the edges.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class SystemParams:
    n_emitters: int
    beta: float
    beta_l: float = 0.0
    gamma_tot: float = 1.0
    k0: float = 0.0
    drive: float = 0.0

    def __post_init__(self):
        if int(self.n_emitters) != self.n_emitters or self.n_emitters < 0:
            raise ValueError(f"n_emitters must be a nonnegative integer, got {self.n_emitters}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if not 0.0 <= self.beta_l <= 1.0 - self.beta + 1e-15:
            raise ValueError(f"beta_l must lie in [0, 1 - beta], got {self.beta_l}")
        if not self.gamma_tot > 0:
            raise ValueError(f"gamma_tot must be positive, got {self.gamma_tot}")
        if self.drive < 0:
            raise ValueError(f"drive (P_in/P_sat) must be nonnegative, got {self.drive}")

    @property
    def gamma(self) -> float:
        """Waveguide decay rate in units of ``gamma_tot``."""
        return self.beta

    @property
    def loss(self) -> float:
        return 1.0 - self.beta - self.beta_l

    @property
    def p_sat(self) -> float:
        """Saturation power ``gamma_tot / beta`` in normalized units."""
        return math.inf if self.beta == 0 else 1.0 / self.beta

    @property
    def p_in(self) -> float:
        """Input photon flux in units of ``gamma_tot``."""
        return self.drive * self.p_sat if self.drive else 0.0

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class DerivedConstants:
    gamma_pole: complex
    a_pole: complex
    a0_pole: complex
    xi: float
    t0: float

    @classmethod
    def from_params(cls, p: SystemParams) -> "DerivedConstants":
        b = p.beta
        return cls(
            gamma_pole=complex(p.k0, 0.5),
            a_pole=complex(p.k0, 0.5 * (1 - 2 * b)),
            a0_pole=complex(p.k0, 0.5 * (1 - b)),
            xi=math.sqrt(p.n_emitters * b * (1 - b)),
            t0=1.0 - 2.0 * b,
        )
