"""Time integration and spectral analysis of plant/controller loops.

All loops are linear, so a run is a monolithic system advanced by the
implicit midpoint rule with a factorization reused across steps. The
wiring is ``u = -y_c + r`` and ``u_c = y``; with a coupling map the
controller talks to the plant through ``u_plant = Phi^T u`` and
``u_c = Phi y_plant``.
"""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .controllability import ControllableRealization
from .discretize import ACTUATED, N_P, DiscretePHSystem, StaggeredGrid
from .numerics import _dense, eigenvalues

log = logging.getLogger(__name__)


# --- integrator ----------------------------------------------------------


def midpoint_step(A, B, x_k, u_mid, dt: float) -> np.ndarray:
    """One implicit-midpoint step of ``dx/dt = A x + B u``."""
    x_k = np.asarray(x_k, dtype=float)
    if dt == 0:
        return x_k.copy()
    n = x_k.shape[0]
    rhs = x_k + 0.5 * dt * (A @ x_k)
    if B is not None and u_mid is not None:
        rhs = rhs + dt * (B @ np.asarray(u_mid, dtype=float))
    if sp.issparse(A):
        M = (sp.identity(n, format="csc") - 0.5 * dt * A).tocsc()
        return spla.spsolve(M, rhs)
    M = np.eye(n) - 0.5 * dt * np.asarray(A)
    return la.solve(M, rhs)


class MidpointIntegrator:
    """Midpoint rule for a fixed linear system with a cached factorization.

    Singular ``I - dt/2 A`` makes the step halve ``dt`` (two half steps)
    and is reported through ``halvings``.
    """

    def __init__(self, A, B, dt: float):
        self.n = A.shape[0]
        self.dt = dt
        self.sparse = sp.issparse(A)
        self.A = A.tocsr() if self.sparse else np.asarray(A)
        self.B = B
        self.halvings = 0
        self._solver = self._factor(dt)
        self._half = None

    def _factor(self, dt):
        if self.sparse:
            M = (sp.identity(self.n, format="csc") - 0.5 * dt * self.A).tocsc()
            try:
                lu = spla.splu(M)
            except RuntimeError:
                return None
            return lu.solve
        M = np.eye(self.n) - 0.5 * dt * self.A
        with warnings.catch_warnings():
            # singularity is handled below by step halving
            warnings.simplefilter("ignore", la.LinAlgWarning)
            lu, piv = la.lu_factor(M, check_finite=False)
        if np.min(np.abs(np.diag(lu))) <= 1e-14 * np.max(np.abs(np.diag(lu))):
            return None
        return lambda b: la.lu_solve((lu, piv), b, check_finite=False)

    def _apply(self, solver, x, Bu, dt):
        return solver(x + 0.5 * dt * (self.A @ x) + dt * Bu)

    def step(self, x, u_mid) -> np.ndarray:
        Bu = np.zeros(self.n) if self.B is None or u_mid is None else self.B @ u_mid
        if self._solver is not None:
            return self._apply(self._solver, x, Bu, self.dt)
        if self._half is None:
            self._half = self._factor(self.dt / 2)
            if self._half is None:
                raise np.linalg.LinAlgError("midpoint system singular at dt and dt/2")
        self.halvings += 1
        x = self._apply(self._half, x, Bu, self.dt / 2)
        return self._apply(self._half, x, Bu, self.dt / 2)


# --- reference -----------------------------------------------------------


@dataclass(frozen=True)
class ReferenceSchedule:
    """``r(t) = u_ref * f(t)`` with ``f`` piecewise constant.

    ``segments`` is a list of ``(t_start, value)``; ``f`` is zero before the
    first start time.
    """

    u_ref: np.ndarray
    segments: tuple

    def __post_init__(self):
        times = [float(t) for t, _ in self.segments]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("segment start times must be strictly increasing")
        if any(not -1.0 <= float(v) <= 1.0 for _, v in self.segments):
            raise ValueError("f_act values must lie in [-1, 1]")
        object.__setattr__(self, "u_ref", np.asarray(self.u_ref, dtype=float))

    def f_act(self, t: float) -> float:
        val = 0.0
        for t0, v in self.segments:
            if t >= t0:
                val = float(v)
            else:
                break
        return val

    def __call__(self, t: float) -> np.ndarray:
        return self.u_ref * self.f_act(t)

    @classmethod
    def step_sequence(cls, u_ref) -> "ReferenceSchedule":
        """Full load on [2, 6) s, none on [6, 10) s, reversed 0.75 after."""
        return cls(u_ref, ((0.0, 0.0), (2.0, 1.0), (6.0, 0.0), (10.0, -0.75)))

    @classmethod
    def zero(cls, m: int) -> "ReferenceSchedule":
        return cls(np.zeros(m), ((0.0, 0.0),))


def transverse_reference(m: int, amplitude: float = 1.0) -> np.ndarray:
    """Unit transverse force on every actuated edge point."""
    u = np.zeros(m)
    u[2::N_P] = amplitude
    return u


# --- boundary coupling ---------------------------------------------------


@dataclass(frozen=True)
class CouplingMap:
    """``v_low = Phi v_high`` and ``F_high = Phi^T F_low``."""

    Phi: np.ndarray

    def velocities(self, v_high) -> np.ndarray:
        return self.Phi @ v_high

    def forces(self, F_low) -> np.ndarray:
        return self.Phi.T @ F_low


def edge_interpolation(x_low, x_high) -> np.ndarray:
    """Rows: linear interpolation weights of ``x_high`` samples at ``x_low``."""
    x_low = np.asarray(x_low, dtype=float)
    x_high = np.asarray(x_high, dtype=float)
    W = np.zeros((len(x_low), len(x_high)))
    span = x_high[-1] - x_high[0]
    for i, x in enumerate(x_low):
        j = int(np.searchsorted(x_high, x, side="right")) - 1
        j = min(max(j, 0), len(x_high) - 2)
        x0, x1 = x_high[j], x_high[j + 1]
        t = (x - x0) / (x1 - x0)
        if abs(t) <= 1e-12 * span / (x1 - x0):
            t = 0.0
        elif abs(1 - t) <= 1e-12 * span / (x1 - x0):
            t = 1.0
        W[i, j] += 1.0 - t
        W[i, j + 1] += t
    W[np.abs(W) < 1e-15] = 0.0
    return W


def build_coupling(low_grid: StaggeredGrid, high_grid: StaggeredGrid) -> CouplingMap:
    if not (np.isclose(low_grid.L1, high_grid.L1) and np.isclose(low_grid.L2, high_grid.L2)):
        raise ValueError(
            f"incompatible actuated edges: low ({low_grid.L1}, {low_grid.L2}) vs "
            f"high ({high_grid.L1}, {high_grid.L2})"
        )
    xl = low_grid.q_coords[low_grid.q_where(ACTUATED), 0]
    xh = high_grid.q_coords[high_grid.q_where(ACTUATED), 0]
    if len(xh) < 2:
        raise ValueError("high-order edge needs at least two points")
    W = edge_interpolation(xl, xh)
    return CouplingMap(np.kron(W, np.eye(N_P)))


# --- closed loop ---------------------------------------------------------


@dataclass(frozen=True)
class PlantModel:
    """Linear plant ``dx/dt = A x + B u``, ``y = C x``, energy ``0.5 x^T Q x``."""

    A: object
    B: object
    C: object
    Q: object
    to_design: object = None  # reduced-coordinate map for full-state feedback

    @property
    def n(self) -> int:
        return self.A.shape[0]


def plant_model(plant, realization: ControllableRealization | None = None) -> PlantModel:
    if isinstance(plant, PlantModel):
        return plant
    if isinstance(plant, DiscretePHSystem):
        Q = plant.Q.tocsr()
        B = plant.B.tocsr()
        to_design = realization.Uc.T if realization is not None else None
        return PlantModel(plant.A.tocsr(), B, (B.T @ Q).tocsr(), Q, to_design)
    if isinstance(plant, ControllableRealization):
        return PlantModel(plant.A, plant.Bc, plant.C, plant.Hc, np.eye(plant.nc))
    raise TypeError(f"unsupported plant type {type(plant).__name__}")


@dataclass(frozen=True)
class StateFeedback:
    """Full-state-feedback baseline ``u = -K T x + r`` on the design plant."""

    K: np.ndarray
    T: np.ndarray
    kind: str = "perfect"
    n: int = 0


def perfect_feedback(K, T) -> StateFeedback:
    return StateFeedback(np.asarray(K, dtype=float), np.asarray(T, dtype=float))


def _as_sparse(M):
    return M if sp.issparse(M) else sp.csr_matrix(np.asarray(M))


@dataclass(frozen=True)
class LoopMatrices:
    A: sp.csr_matrix
    Br: sp.csr_matrix
    n_plant: int
    n_ctrl: int
    # port maps evaluated on the stacked state, controller side
    Y: sp.csr_matrix  # y seen by the controller, u_c = Y x
    U: sp.csr_matrix  # u = U x + r (controller side)
    M: sp.csr_matrix  # storage weight blockdiag(Q_plant, Q_ctrl)


def loop_matrices(plant: PlantModel, ctrl, coupling: CouplingMap | None = None, active: bool = True) -> LoopMatrices:
    Ap, Bp, Cp = _as_sparse(plant.A), _as_sparse(plant.B), _as_sparse(plant.C)
    n = plant.n
    if coupling is not None:
        Phi = sp.csr_matrix(coupling.Phi)
        if Phi.shape[1] != Bp.shape[1]:
            raise ValueError(
                f"coupling has {Phi.shape[1]} high-order channels, plant has {Bp.shape[1]}"
            )
        Bp = (Bp @ Phi.T).tocsr()
        Cp = (Phi @ Cp).tocsr()
    m = Bp.shape[1]
    Mp = _as_sparse(plant.Q)

    if isinstance(ctrl, StateFeedback):
        if plant.to_design is None:
            raise ValueError("full-state feedback needs a plant with a known design-coordinate map")
        Kx = ctrl.K @ ctrl.T @ _dense(plant.to_design)
        if Kx.shape != (m, n):
            raise ValueError(f"feedback gain shape {Kx.shape} does not match plant ({m}, {n})")
        Kx = sp.csr_matrix(Kx) if active else sp.csr_matrix((m, n))
        return LoopMatrices(
            A=(Ap - Bp @ Kx).tocsr(), Br=Bp, n_plant=n, n_ctrl=0,
            Y=Cp, U=-Kx, M=Mp,
        )

    nc = ctrl.n
    if ctrl.L.shape != (nc, m) or ctrl.Cc.shape != (m, nc):
        raise ValueError(
            f"controller ports ({ctrl.L.shape[1]}) do not match plant channels ({m})"
        )
    Ac = sp.csr_matrix(ctrl.Ac)
    L = sp.csr_matrix(ctrl.L)
    Cc = sp.csr_matrix(ctrl.Cc)
    Br_c = sp.csr_matrix(ctrl.Br)
    if active:
        A = sp.bmat([[Ap, -Bp @ Cc], [L @ Cp, Ac]], format="csr")
        Br = sp.vstack([Bp, Br_c], format="csr")
        U = sp.hstack([sp.csr_matrix((m, n)), -Cc], format="csr")
    else:
        A = sp.bmat([[Ap, None], [None, sp.csr_matrix((nc, nc))]], format="csr")
        Br = sp.vstack([Bp, sp.csr_matrix((nc, m))], format="csr")
        U = sp.csr_matrix((m, n + nc))
    Y = sp.hstack([Cp, sp.csr_matrix((m, nc))], format="csr")
    Qc = getattr(ctrl, "Qc", None)
    Mc = sp.csr_matrix(Qc) if Qc is not None else sp.csr_matrix((nc, nc))
    M = sp.block_diag([Mp, Mc], format="csr")
    return LoopMatrices(A=A, Br=Br, n_plant=n, n_ctrl=nc, Y=Y, U=U, M=M)


def closed_loop_matrix(plant, ctrl=None, coupling: CouplingMap | None = None, realization=None) -> np.ndarray:
    """Dense monolithic matrix of the loop with ``r = 0``."""
    pm = plant_model(plant, realization)
    if ctrl is None:
        return _dense(pm.A)
    return loop_matrices(pm, ctrl, coupling).A.toarray()


def spectral_abscissa(A) -> float:
    return float(np.max(eigenvalues(A).real))


@dataclass
class SimulationTrace:
    times: np.ndarray
    H_plant: np.ndarray
    S_ctrl: np.ndarray
    power_residual: np.ndarray
    u: np.ndarray
    y: np.ndarray
    r: np.ndarray
    snapshot_times: np.ndarray
    snapshots: np.ndarray
    diverged: bool = False
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def storage(self) -> np.ndarray:
        return self.H_plant + self.S_ctrl

    def write_csv(self, path) -> None:
        m = self.u.shape[1] if self.u.ndim == 2 else 0
        header = ["t", "H_plant", "S_ctrl", "power_residual"]
        header += [f"u{i}" for i in range(m)] + [f"y{i}" for i in range(m)] + [f"r{i}" for i in range(m)]
        header.append("diverged")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            flag = int(self.diverged)
            for k in range(len(self.times)):
                row = [self.times[k], self.H_plant[k], self.S_ctrl[k], self.power_residual[k]]
                row += list(self.u[k]) + list(self.y[k]) + list(self.r[k])
                w.writerow([repr(float(v)) for v in row] + [flag])


def simulate_closed_loop(
    plant,
    ctrl=None,
    sched: ReferenceSchedule | None = None,
    coupling: CouplingMap | None = None,
    dt: float = 1e-3,
    T: float = 14.0,
    x0=None,
    realization: ControllableRealization | None = None,
    activation_time: float = 2.0,
    stride: int = 100,
    divergence_factor: float = 1e12,
) -> SimulationTrace:
    """Advance plant (and controller) with the midpoint rule.

    Before ``activation_time`` the controller state is held at zero and its
    output is zero, so the plant sees ``u = r``. ``ctrl=None`` simulates the
    plant alone with ``u = r``.
    """
    pm = plant_model(plant, realization)
    n_steps = int(round(T / dt)) if T > 0 else 0
    if ctrl is None:
        Bp = _as_sparse(pm.B)
        m = Bp.shape[1]
        Cp = _as_sparse(pm.C)
        on = off = LoopMatrices(
            A=_as_sparse(pm.A), Br=Bp, n_plant=pm.n, n_ctrl=0, Y=Cp,
            U=sp.csr_matrix((m, pm.n)), M=_as_sparse(pm.Q),
        )
    else:
        on = loop_matrices(pm, ctrl, coupling, active=True)
        off = loop_matrices(pm, ctrl, coupling, active=False)
        m = on.Br.shape[1]
    if sched is None:
        sched = ReferenceSchedule.zero(m)
    if sched.u_ref.shape != (m,):
        raise ValueError(f"reference has {sched.u_ref.shape[0]} channels, loop has {m}")

    n = on.n_plant + on.n_ctrl
    x = np.zeros(n)
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        if x0.shape[0] not in (pm.n, n):
            raise ValueError(f"x0 has length {x0.shape[0]}, expected {pm.n} or {n}")
        x[: x0.shape[0]] = x0
    Mp = _as_sparse(pm.Q)
    Mc = on.M[on.n_plant :, on.n_plant :]
    np_ = on.n_plant
    limit = divergence_factor * (np.linalg.norm(x) + 1.0)

    integ = {True: MidpointIntegrator(on.A, on.Br, dt), False: MidpointIntegrator(off.A, off.Br, dt)}

    times, Hs, Ss, pres, us, ys, rs = [], [], [], [], [], [], []
    snap_t, snaps = [], []

    def record(k, t, x, res):
        xp, xc = x[:np_], x[np_:]
        mats = on if t >= activation_time else off
        times.append(t)
        Hs.append(0.5 * float(xp @ (Mp @ xp)))
        Ss.append(0.5 * float(xc @ (Mc @ xc)) if len(xc) else 0.0)
        pres.append(res)
        r = sched(t)
        rs.append(r)
        us.append(mats.U @ x + r)
        ys.append(mats.Y @ x)
        if k % stride == 0:
            snap_t.append(t)
            snaps.append(x.copy())

    diverged = False
    if n_steps > 0:
        record(0, 0.0, x, 0.0)
    for k in range(n_steps):
        t0 = k * dt
        t_mid = t0 + 0.5 * dt
        active = t0 >= activation_time - 1e-12 * max(1.0, activation_time)
        mats = on if active else off
        r_mid = sched(t_mid)
        x_new = integ[active].step(x, r_mid)
        x_mid = 0.5 * (x + x_new)
        u_mid = mats.U @ x_mid + r_mid
        y_mid = mats.Y @ x_mid
        dH = 0.5 * float(x_new[:np_] @ (Mp @ x_new[:np_])) - 0.5 * float(x[:np_] @ (Mp @ x[:np_]))
        res = dH - dt * float(y_mid @ u_mid)
        x = x_new
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > limit:
            diverged = True
            log.warning("simulation diverged at t = %.4f", t0 + dt)
            if np.all(np.isfinite(x)):
                record(k + 1, (k + 1) * dt, x, res)
            break
        record(k + 1, (k + 1) * dt, x, res)

    return SimulationTrace(
        times=np.array(times),
        H_plant=np.array(Hs),
        S_ctrl=np.array(Ss),
        power_residual=np.array(pres),
        u=np.array(us).reshape(-1, m),
        y=np.array(ys).reshape(-1, m),
        r=np.array(rs).reshape(-1, m),
        snapshot_times=np.array(snap_t),
        snapshots=np.array(snaps).reshape(len(snaps), n) if snaps else np.zeros((0, n)),
        diverged=diverged,
        meta={"dt": dt, "T": T, "halvings": integ[True].halvings + integ[False].halvings},
    )


def write_eigenvalues_csv(path, spectra: dict) -> None:
    """``re, im, source`` rows for each labelled spectrum."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["re", "im", "source"])
        for label, lam in spectra.items():
            for z in np.sort_complex(np.asarray(lam)):
                w.writerow([repr(float(z.real)), repr(float(z.imag)), label])


def write_snapshot_csv(path, sys: DiscretePHSystem, x) -> None:
    """Transverse velocity at interior p-points: ``x, y, w_dot``."""
    grid = sys.grid
    _, xp = sys.split(np.asarray(x)[: sys.N])
    from .discretize import INTERIOR

    p_int = grid.p_where(INTERIOR)
    coords = grid.p_coords[p_int]
    mass = sys.constitutive.Mp[2, 2]
    vel = xp.reshape(-1, N_P)[:, 2] / mass
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "w_dot"])
        for (cx, cy), v in zip(coords, vel):
            w.writerow([repr(float(cx)), repr(float(cy)), repr(float(v))])
