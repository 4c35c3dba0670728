"""Structure-preserving staggered-grid discretization of the plate.

Grid layout, in multiples of the half spacings ``(h1, h2)`` measured from the
lower-left corner of the plate: strain (q) points sit at even horizontal and
odd vertical offsets, momentum (p) points at odd horizontal and even vertical
offsets. Every p-point therefore has its four nearest q-neighbours on the
diagonals ``(+-h1, +-h2)`` and vice versa.

With ``n_cells_1 = c1`` and ``n_cells_2 = c2``::

    h1 = L1 / (2 (c1 + 1))          h2 = L2 / (2 c2 + 1)
    q-points (m, n): (2 m h1, (2 n + 1) h2),  m = 0..c1+1, n = 0..c2
    p-points (m, n): ((2 m + 1) h1, 2 n h2),  m = 0..c1,   n = 0..c2

Boundary classification:

* clamped (xi2 = 0): p-points with n = 0, velocity fixed to zero;
* free (xi1 = 0 and xi1 = L1): q-points with m = 0 or m = c1+1 below the top
  edge, stress fixed to zero;
* actuated (xi2 = L2): q-points with n = c2, each carrying a 5-channel force
  input.

Interior counts are ``n_p = (c1 + 1) c2`` and ``n_q = c1 c2``, so
``N = 5 n_p + 8 n_q``. ``(6, 6)`` gives 42/36 points (N = 498) and
``(20, 20)`` gives 420/400 points (N = 5300).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .plate import (
    ConstitutiveMatrices,
    InterconnectionMatrices,
    PlateParameters,
    build_constitutive,
    build_interconnection,
)

N_P = 5
N_Q = 8

CLAMPED = "clamped"
FREE = "free"
ACTUATED = "actuated"
INTERIOR = "interior"


@dataclass(frozen=True)
class StaggeredGrid:
    n_cells_1: int
    n_cells_2: int
    L1: float
    L2: float
    h1: float
    h2: float
    q_index: np.ndarray  # (nq_all, 2) integer (m, n), lexicographic in (n, m)
    p_index: np.ndarray
    q_tags: tuple
    p_tags: tuple

    @property
    def q_coords(self) -> np.ndarray:
        return np.column_stack(
            [2 * self.q_index[:, 0] * self.h1, (2 * self.q_index[:, 1] + 1) * self.h2]
        )

    @property
    def p_coords(self) -> np.ndarray:
        return np.column_stack(
            [(2 * self.p_index[:, 0] + 1) * self.h1, 2 * self.p_index[:, 1] * self.h2]
        )

    def q_where(self, tag: str) -> np.ndarray:
        return np.array([i for i, t in enumerate(self.q_tags) if t == tag], dtype=int)

    def p_where(self, tag: str) -> np.ndarray:
        return np.array([i for i, t in enumerate(self.p_tags) if t == tag], dtype=int)

    @property
    def cell_area(self) -> float:
        return 4 * self.h1 * self.h2

    @property
    def n_p(self) -> int:
        return len(self.p_where(INTERIOR))

    @property
    def n_q(self) -> int:
        return len(self.q_where(INTERIOR))

    def write_csv(self, path) -> None:
        """Write one row per grid point: ``kind, m, n, x, y, tag``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "m", "n", "x", "y", "tag"])
            for kind, idx, xy, tags in (
                ("q", self.q_index, self.q_coords, self.q_tags),
                ("p", self.p_index, self.p_coords, self.p_tags),
            ):
                for (m, n), (x, y), tag in zip(idx, xy, tags):
                    w.writerow([kind, int(m), int(n), repr(float(x)), repr(float(y)), tag])


def interior_counts(n_cells_1: int, n_cells_2: int) -> tuple[int, int]:
    """Closed-form ``(n_p, n_q)`` for a grid built with these cell counts."""
    return (n_cells_1 + 1) * n_cells_2, n_cells_1 * n_cells_2


def build_grid(params: PlateParameters, n_cells_1: int, n_cells_2: int) -> StaggeredGrid:
    if int(n_cells_1) != n_cells_1 or int(n_cells_2) != n_cells_2:
        raise ValueError("cell counts must be integers")
    if n_cells_1 < 1 or n_cells_2 < 1:
        raise ValueError(
            f"cell counts must be >= 1, got ({n_cells_1}, {n_cells_2})"
        )
    c1, c2 = int(n_cells_1), int(n_cells_2)
    a = c1 + 1
    h1 = params.L1 / (2 * a)
    h2 = params.L2 / (2 * c2 + 1)

    q_index, q_tags = [], []
    for n in range(c2 + 1):
        for m in range(a + 1):
            q_index.append((m, n))
            if n == c2:
                q_tags.append(ACTUATED)
            elif m == 0 or m == a:
                q_tags.append(FREE)
            else:
                q_tags.append(INTERIOR)
    p_index, p_tags = [], []
    for n in range(c2 + 1):
        for m in range(a):
            p_index.append((m, n))
            p_tags.append(CLAMPED if n == 0 else INTERIOR)

    return StaggeredGrid(
        n_cells_1=c1,
        n_cells_2=c2,
        L1=params.L1,
        L2=params.L2,
        h1=h1,
        h2=h2,
        q_index=np.array(q_index, dtype=int),
        p_index=np.array(p_index, dtype=int),
        q_tags=tuple(q_tags),
        p_tags=tuple(p_tags),
    )


def _neighbour_blocks(grid: StaggeredGrid, im: InterconnectionMatrices):
    """Yield ``(p_idx, q_idx, block)`` for every diagonal p/q neighbour pair.

    ``block`` is the 5x8 coefficient with which the stress at the q-point
    enters the momentum balance at the p-point: centered differences over
    the diagonal neighbours for the derivative terms, a four-point average
    for the algebraic ``P0`` term.
    """
    h1, h2 = grid.h1, grid.h2
    w = grid.cell_area
    a = grid.n_cells_1 + 1
    q_lookup = {(int(m), int(n)): i for i, (m, n) in enumerate(grid.q_index)}
    blocks = {}
    for s1 in (-1, 1):
        for s2 in (-1, 1):
            blocks[s1, s2] = (s1 * h2 * im.P1 + s2 * h1 * im.P2 + h1 * h2 * im.P0) / w
    for j, (m, n) in enumerate(grid.p_index):
        for s1, qm in ((-1, m), (1, m + 1)):
            for s2, qn in ((-1, n - 1), (1, n)):
                if qn < 0 or qm > a:
                    continue
                i = q_lookup.get((int(qm), int(qn)))
                if i is not None:
                    yield j, i, blocks[s1, s2]


def coupling_operator(
    grid: StaggeredGrid,
    im: InterconnectionMatrices,
    p_rows: np.ndarray,
    q_cols: np.ndarray,
) -> sp.csr_matrix:
    """Discrete ``P1 d1 + P2 d2 + P0`` from q-points ``q_cols`` to p-points ``p_rows``."""
    prow = {int(j): k for k, j in enumerate(p_rows)}
    qcol = {int(i): k for k, i in enumerate(q_cols)}
    rows, cols, vals = [], [], []
    for j, i, block in _neighbour_blocks(grid, im):
        if j not in prow or i not in qcol:
            continue
        r0, c0 = N_P * prow[j], N_Q * qcol[i]
        nz_r, nz_c = np.nonzero(block)
        rows.extend(r0 + nz_r)
        cols.extend(c0 + nz_c)
        vals.extend(block[nz_r, nz_c])
    shape = (N_P * len(p_rows), N_Q * len(q_cols))
    mat = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


@dataclass(frozen=True)
class DiscretePHSystem:
    """Finite-dimensional plate ``dx/dt = Jd Qd x + Bd u``.

    State ordering is ``x = (x_q, x_p)``: all strain blocks in grid order,
    then all momentum blocks. ``Jd = [[0, Pdq], [Pdp, 0]]`` with
    ``Pdq = -Pdp^T`` and ``Qd = blockdiag(Cd, Md^-1)``. The energy is
    ``H = 0.5 x^T Q x`` with ``Q = cell_area * Qd``; in the matching
    port-Hamiltonian triple ``(J, Q, B) = (Jd / cell_area, Q, Bd)`` the
    collocated output ``y = B^T Q x`` satisfies ``dH/dt = y^T u``.
    """

    grid: StaggeredGrid
    constitutive: ConstitutiveMatrices
    Pdp: sp.csr_matrix
    Pdq: sp.csr_matrix
    Md: sp.csr_matrix
    Cd: sp.csr_matrix
    Bd_full: sp.csr_matrix
    active_inputs: np.ndarray
    input_labels: tuple

    @property
    def n_p(self) -> int:
        return self.Pdp.shape[0] // N_P

    @property
    def n_q(self) -> int:
        return self.Pdp.shape[1] // N_Q

    @property
    def N(self) -> int:
        return N_P * self.n_p + N_Q * self.n_q

    @property
    def cell_area(self) -> float:
        return self.grid.cell_area

    @property
    def n_inputs(self) -> int:
        return len(self.active_inputs)

    @cached_property
    def Jd(self) -> sp.csr_matrix:
        return sp.bmat([[None, self.Pdq], [self.Pdp, None]], format="csr")

    @cached_property
    def Qd(self) -> sp.csr_matrix:
        Md_inv = sp.diags(1.0 / self.Md.diagonal())
        return sp.block_diag([self.Cd, Md_inv], format="csr")

    @cached_property
    def Bd(self) -> sp.csr_matrix:
        return self.Bd_full[:, self.active_inputs].tocsr()

    @property
    def J(self) -> sp.csr_matrix:
        return self.Jd / self.cell_area

    @property
    def Q(self) -> sp.csr_matrix:
        return self.Qd * self.cell_area

    @property
    def B(self) -> sp.csr_matrix:
        return self.Bd

    @cached_property
    def A(self) -> sp.csr_matrix:
        return (self.Jd @ self.Qd).tocsr()

    def split(self, x):
        x = np.asarray(x, dtype=float)
        nq = N_Q * self.n_q
        return x[:nq], x[nq:]

    def output(self, x) -> np.ndarray:
        return self.B.T @ (self.Q @ np.asarray(x, dtype=float))

    def actuated_velocity_index(self) -> np.ndarray:
        """Positions of the transverse channels among the active inputs."""
        return np.array(
            [k for k, c in enumerate(self.active_inputs) if c % N_P == 2], dtype=int
        )

    def write_triplets(self, path, name: str = "Jd") -> None:
        """Write a sparse matrix attribute as ``row col value`` lines."""
        mat = sp.coo_matrix(getattr(self, name))
        order = np.lexsort((mat.col, mat.row))
        with open(path, "w") as fh:
            fh.write(f"# {name} {mat.shape[0]} {mat.shape[1]} {mat.nnz}\n")
            for k in order:
                fh.write(f"{mat.row[k]} {mat.col[k]} {float(mat.data[k])!r}\n")


def assemble(
    grid: StaggeredGrid,
    cm: ConstitutiveMatrices,
    im: InterconnectionMatrices | None = None,
) -> DiscretePHSystem:
    if im is None:
        im = build_interconnection()
    if cm.Mp.shape != (N_P, N_P) or cm.Cq.shape != (N_Q, N_Q):
        raise ValueError("constitutive matrices must be 5x5 and 8x8")
    if im.P1.shape != (N_P, N_Q):
        raise ValueError("interconnection matrices must be 5x8")

    p_int = grid.p_where(INTERIOR)
    q_int = grid.q_where(INTERIOR)
    if len(p_int) == 0:
        raise ValueError("grid has no interior momentum points")
    w = grid.cell_area

    Pdp = coupling_operator(grid, im, p_int, q_int)
    Pdq = (-Pdp.T).tocsr()
    Md = sp.block_diag([cm.Mp] * len(p_int), format="csr")
    Cd = sp.block_diag([cm.Cq] * len(q_int), format="csr")
    nq = N_Q * len(q_int)
    N = nq + N_P * len(p_int)

    # Force inputs on the actuated edge: each edge q-point drives the
    # adjacent top-row p-points with weight 1/2.
    q_act = grid.q_where(ACTUATED)
    p_pos = {int(j): k for k, j in enumerate(p_int)}
    top = grid.n_cells_2
    Iup = np.zeros((len(p_int), len(q_act)))
    for c, i in enumerate(q_act):
        m = grid.q_index[i, 0]
        for pm in (m - 1, m):
            for j in p_int:
                if tuple(grid.p_index[j]) == (pm, top):
                    Iup[p_pos[int(j)], c] = 0.5
    Bp = sp.kron(sp.csr_matrix(Iup), sp.eye(N_P)) / w
    # Velocity inputs on the clamped edge (inactive for this configuration).
    p_cl = grid.p_where(CLAMPED)
    Bq = -coupling_operator(grid, im, p_cl, q_int).T
    Bd_full = sp.bmat(
        [
            [sp.csr_matrix((nq, Bp.shape[1])), Bq],
            [Bp, sp.csr_matrix((N - nq, Bq.shape[1]))],
        ],
        format="csr",
    )
    labels = []
    for i in q_act:
        m, n = grid.q_index[i]
        labels.extend(f"uq[{m},{n}].{c}" for c in range(N_P))
    for j in p_cl:
        m, n = grid.p_index[j]
        labels.extend(f"up[{m},{n}].{c}" for c in range(N_P))
    active = np.arange(N_P * len(q_act))
    return DiscretePHSystem(
        grid=grid,
        constitutive=cm,
        Pdp=Pdp,
        Pdq=Pdq,
        Md=Md,
        Cd=Cd,
        Bd_full=Bd_full,
        active_inputs=active,
        input_labels=tuple(labels),
    )


def build_plate(params: PlateParameters, n_cells_1: int, n_cells_2: int) -> DiscretePHSystem:
    grid = build_grid(params, n_cells_1, n_cells_2)
    return assemble(grid, build_constitutive(params), build_interconnection())


def discrete_hamiltonian(sys: DiscretePHSystem, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (sys.N,):
        raise ValueError(f"state must have shape ({sys.N},), got {x.shape}")
    xq, xp = sys.split(x)
    Md_inv = 1.0 / sys.Md.diagonal()
    return 0.5 * (float(xq @ (sys.Cd @ xq)) + float(xp @ (Md_inv * xp))) * sys.cell_area


# --- stencil consistency -------------------------------------------------


@dataclass(frozen=True)
class SmoothField:
    """Analytic co-energy fields and their first derivatives.

    Each callable takes arrays ``(x, y)`` of shape ``(k,)`` and returns
    ``(k, 5)`` for velocities or ``(k, 8)`` for stresses.
    """

    velocity: Callable
    velocity_d1: Callable
    velocity_d2: Callable
    stress: Callable
    stress_d1: Callable
    stress_d2: Callable


def polynomial_field(degree: int, seed: int = 0) -> SmoothField:
    """Random polynomial field of total degree ``degree`` (0, 1 or 2)."""
    rng = np.random.default_rng(seed)
    cv = rng.standard_normal((6, N_P))
    cs = rng.standard_normal((6, N_Q))
    mask = np.array([1, degree >= 1, degree >= 1, degree >= 2, degree >= 2, degree >= 2], float)
    cv *= mask[:, None]
    cs *= mask[:, None]

    def value(c):
        return lambda x, y: np.column_stack([np.ones_like(x), x, y, x * x, x * y, y * y]) @ c

    def d1(c):
        return lambda x, y: np.column_stack(
            [0 * x, np.ones_like(x), 0 * x, 2 * x, y, 0 * x]
        ) @ c

    def d2(c):
        return lambda x, y: np.column_stack(
            [0 * x, 0 * x, np.ones_like(x), 0 * x, x, 2 * y]
        ) @ c

    return SmoothField(value(cv), d1(cv), d2(cv), value(cs), d1(cs), d2(cs))


def trigonometric_field(seed: int = 0) -> SmoothField:
    rng = np.random.default_rng(seed)
    kv = rng.uniform(0.5, 2.0, (2, N_P))
    ks = rng.uniform(0.5, 2.0, (2, N_Q))
    phv = rng.uniform(0, np.pi, N_P)
    phs = rng.uniform(0, np.pi, N_Q)

    def make(k, ph):
        def f(x, y):
            return np.sin(np.outer(x, k[0]) + ph) * np.cos(np.outer(y, k[1]))

        def f1(x, y):
            return k[0] * np.cos(np.outer(x, k[0]) + ph) * np.cos(np.outer(y, k[1]))

        def f2(x, y):
            return -k[1] * np.sin(np.outer(x, k[0]) + ph) * np.sin(np.outer(y, k[1]))

        return f, f1, f2

    v = make(kv, phv)
    s = make(ks, phs)
    return SmoothField(*v, *s)


def stencil_residual(sys: DiscretePHSystem, fld: SmoothField, im=None) -> float:
    """Max-norm truncation error of the interior operators on ``fld``.

    Both halves are checked: the momentum balance at interior p-points
    (using every neighbouring q-point, boundary ones included) and the
    strain rate at interior q-points.
    """
    if im is None:
        im = build_interconnection()
    grid = sys.grid
    p_int = grid.p_where(INTERIOR)
    q_int = grid.q_where(INTERIOR)
    all_q = np.arange(len(grid.q_tags))
    all_p = np.arange(len(grid.p_tags))

    G = coupling_operator(grid, im, p_int, all_q)
    qx, qy = grid.q_coords.T
    px, py = grid.p_coords.T
    sigma = fld.stress(qx, qy)
    approx_p = (G @ sigma.ravel()).reshape(-1, N_P)
    xs, ys = px[p_int], py[p_int]
    exact_p = (
        fld.stress_d1(xs, ys) @ im.P1.T
        + fld.stress_d2(xs, ys) @ im.P2.T
        + fld.stress(xs, ys) @ im.P0.T
    )

    Gq = -coupling_operator(grid, im, all_p, q_int).T
    vel = fld.velocity(px, py)
    approx_q = (Gq @ vel.ravel()).reshape(-1, N_Q)
    xs, ys = qx[q_int], qy[q_int]
    exact_q = (
        fld.velocity_d1(xs, ys) @ im.P1
        + fld.velocity_d2(xs, ys) @ im.P2
        - fld.velocity(xs, ys) @ im.P0
    )
    res = [np.max(np.abs(approx_p - exact_p))]
    if len(q_int):
        res.append(np.max(np.abs(approx_q - exact_q)))
    return float(max(res))


def consistency_check(sys: DiscretePHSystem, smooth_field: SmoothField, refine: int = 2) -> float:
    """Observed order of the interior truncation error under refinement.

    The system's own grid is compared with a grid refined by ``refine`` in
    both directions. Returns ``inf`` when both residuals vanish to
    round-off (the stencil is exact on the field).
    """
    g = sys.grid
    fine_c1 = refine * (g.n_cells_1 + 1) - 1
    fine_c2 = refine * g.n_cells_2
    fine_grid = _regrid(g, fine_c1, fine_c2)
    fine = assemble(fine_grid, sys.constitutive)
    r0 = stencil_residual(sys, smooth_field)
    r1 = stencil_residual(fine, smooth_field)
    if r0 < 1e-12 and r1 < 1e-12:
        return float("inf")
    h0 = max(g.h1, g.h2)
    h1 = max(fine_grid.h1, fine_grid.h2)
    return float(np.log(r0 / r1) / np.log(h0 / h1))


def _regrid(g: StaggeredGrid, c1: int, c2: int) -> StaggeredGrid:
    geometry = PlateParameters(L1=g.L1, L2=g.L2)
    return build_grid(geometry, c1, c2)
