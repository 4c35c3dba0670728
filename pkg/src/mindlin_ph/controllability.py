"""Split the discretized plate into dynamic and constraint coordinates."""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .discretize import DiscretePHSystem
from .numerics import NumericsError, _dense, skew_block_diagonalize

log = logging.getLogger(__name__)

BCBAR_RTOL = 1e-10


class ConstraintInputWarning(UserWarning):
    """Raised when the inputs act on the constraint coordinates."""


@dataclass(frozen=True)
class ControllableRealization:
    """``dx_c/dt = Dc Hc x_c + Bc u``, ``y = Bc^T Hc x_c`` with ``x_u = U^T x``.

    ``Hc`` is the leading ``2k x 2k`` block of ``Hbar = U^T Q U`` where ``Q``
    is the energy weight of the plant, so ``0.5 x_c^T Hc x_c`` is the
    physical energy when the constraint coordinates vanish.
    """

    U: np.ndarray
    Dc: np.ndarray
    Hc: np.ndarray
    Bc: np.ndarray
    Bcbar: np.ndarray
    Hbar: np.ndarray
    sqrt_alphas: np.ndarray
    decomposition_error: float
    bcbar_ok: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.U.shape[0]

    @property
    def nc(self) -> int:
        return self.Dc.shape[0]

    @property
    def n_constraints(self) -> int:
        return self.N - self.nc

    @property
    def dims(self) -> tuple[int, int]:
        return self.N, self.nc

    @property
    def A(self) -> np.ndarray:
        return self.Dc @ self.Hc

    @property
    def B(self) -> np.ndarray:
        return self.Bc

    @property
    def C(self) -> np.ndarray:
        return self.Bc.T @ self.Hc

    @property
    def Q(self) -> np.ndarray:
        return self.Hc

    @property
    def Uc(self) -> np.ndarray:
        return self.U[:, : self.nc]

    @property
    def cross_block_norm(self) -> float:
        return float(np.linalg.norm(self.Hbar[: self.nc, self.nc :]))

    def to_reduced(self, x) -> np.ndarray:
        return self.Uc.T @ np.asarray(x, dtype=float)

    def to_full(self, xc) -> np.ndarray:
        return self.Uc @ np.asarray(xc, dtype=float)

    def write_frequencies_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["N", "nc", "n_constraints"])
            w.writerow([self.N, self.nc, self.n_constraints])
            w.writerow(["index", "sqrt_alpha"])
            for i, s in enumerate(self.sqrt_alphas):
                w.writerow([i, repr(float(s))])


def decompose(sys: DiscretePHSystem, rank_tol: float | None = None, tol: float = 1e-9) -> ControllableRealization:
    J = _dense(sys.J)
    Q = _dense(sys.Q)
    B = _dense(sys.B)
    dec = skew_block_diagonalize(J, rank_tol=rank_tol)
    U = dec.U
    err = float(np.linalg.norm(U.T @ J @ U - dec.D))
    if err > tol * np.linalg.norm(J):
        raise NumericsError(
            f"skew decomposition error {err:.3e} exceeds {tol:.1e} * |J|"
        )
    nc = 2 * dec.k
    Hbar = U.T @ Q @ U
    Hbar = 0.5 * (Hbar + Hbar.T)
    Bbar = U.T @ B
    Bcbar = Bbar[nc:]
    ok = bool(np.linalg.norm(Bcbar) <= BCBAR_RTOL * max(np.linalg.norm(B), 1e-300))
    if not ok:
        warnings.warn(
            f"inputs reach the constraint coordinates: |Bcbar| = "
            f"{np.linalg.norm(Bcbar):.3e} (|B| = {np.linalg.norm(B):.3e})",
            ConstraintInputWarning,
            stacklevel=2,
        )
    return ControllableRealization(
        U=U,
        Dc=dec.D[:nc, :nc],
        Hc=Hbar[:nc, :nc],
        Bc=Bbar[:nc],
        Bcbar=Bcbar,
        Hbar=Hbar,
        sqrt_alphas=dec.sqrt_alphas,
        decomposition_error=err,
        bcbar_ok=ok,
        meta=_meta(sys, J.shape[0]),
    )


def _meta(sys, n: int) -> dict:
    meta = {"N": n}
    grid = getattr(sys, "grid", None)
    if grid is not None:
        meta["n_cells"] = (grid.n_cells_1, grid.n_cells_2)
    return meta


@dataclass(frozen=True)
class ConstraintReport:
    violation: float
    relative_violation: float
    n_constraints: int
    cross_block_norm: float

    @property
    def ok(self) -> bool:
        return self.relative_violation <= 1e-12


def verify_constraints(real: ControllableRealization, x0) -> ConstraintReport:
    """Size of the constraint-coordinate content of ``x0``."""
    x0 = np.asarray(x0, dtype=float)
    xbar = real.U[:, real.nc :].T @ x0
    v = float(np.linalg.norm(xbar))
    nx = float(np.linalg.norm(x0))
    return ConstraintReport(v, v / nx if nx > 0 else 0.0, real.n_constraints, real.cross_block_norm)
