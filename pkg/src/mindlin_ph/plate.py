"""Continuous Mindlin plate data in port-Hamiltonian form.

State per point: momenta ``p`` (5) and strains ``q`` (8). The interconnection
operator is ``J = P1 d/dxi1 + P2 d/dxi2 + P0`` acting on the co-energy of
``q``, with formal adjoint ``-J* = P1^T d1 + P2^T d2 - P0^T`` acting on the
co-energy of ``p``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PlateParameters:
    """Physical constants of a rectangular plate, SI units.

    ``G`` is carried for completeness; the stiffness law below expresses the
    shear block through ``E``, ``nu`` and ``kappa`` only.
    """

    E: float = 68e9
    nu: float = 0.36
    rho: float = 2698.9
    h: float = 0.01
    kappa: float = np.pi**2 / 12
    L1: float = 1.0
    L2: float = 2.0
    G: float = 25e9

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("E", "rho", "h", "L1", "L2", "kappa"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be positive, got {value!r}")
        if not -1.0 < self.nu < 0.5:
            raise ValueError(f"nu must lie in (-1, 0.5), got {self.nu!r}")


@dataclass(frozen=True)
class InterconnectionMatrices:
    P1: np.ndarray
    P2: np.ndarray
    P0: np.ndarray


@dataclass(frozen=True)
class ConstitutiveMatrices:
    Mp: np.ndarray
    Cq: np.ndarray
    Mp_inv: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.Mp_inv is None:
            object.__setattr__(self, "Mp_inv", np.diag(1.0 / np.diag(self.Mp)))


def _selection(rows: int, cols: int, ones) -> np.ndarray:
    out = np.zeros((rows, cols))
    for i, j in ones:
        out[i - 1, j - 1] = 1.0
    return out


def build_interconnection() -> InterconnectionMatrices:
    """Return the 5x8 selection matrices ``P1``, ``P2``, ``P0``.

    Strain ordering is ``(d1u1, d2u2, d1u2+d2u1, d1phi1, d2phi2,
    d1phi2+d2phi1, d1u3-phi1, d2u3-phi2)``.
    """
    P1 = _selection(5, 8, [(1, 1), (2, 3), (3, 7), (4, 4), (5, 6)])
    P2 = _selection(5, 8, [(1, 3), (2, 2), (3, 8), (4, 6), (5, 5)])
    P0 = _selection(5, 8, [(4, 7), (5, 8)])
    return InterconnectionMatrices(P1, P2, P0)


def build_constitutive(params: PlateParameters) -> ConstitutiveMatrices:
    params.validate()
    E, nu, rho, h, kappa = params.E, params.nu, params.rho, params.h, params.kappa
    Mp = np.diag([rho * h, rho * h, rho * h, rho * h**3 / 12, rho * h**3 / 12])

    base = np.array([[-1.0, -nu, 0.0], [-nu, -1.0, 0.0], [0.0, 0.0, (nu - 1) / 2]])
    Cq = np.zeros((8, 8))
    Cq[:3, :3] = h * base
    Cq[3:6, 3:6] = h**3 / 12 * base
    Cq[6:, 6:] = kappa * h * (nu - 1) / 2 * np.eye(2)
    Cq *= E / (nu**2 - 1)
    return ConstitutiveMatrices(Mp=Mp, Cq=Cq)


def energy_density(cm: ConstitutiveMatrices, q, p) -> float:
    """Pointwise energy ``0.5 (q^T Cq q + p^T Mp^-1 p)`` in J/m^2."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    return 0.5 * float(q @ cm.Cq @ q + p @ cm.Mp_inv @ p)
