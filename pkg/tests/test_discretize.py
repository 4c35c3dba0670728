import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mindlin_ph.discretize import (
    ACTUATED,
    CLAMPED,
    FREE,
    INTERIOR,
    N_P,
    build_grid,
    build_plate,
    consistency_check,
    discrete_hamiltonian,
    interior_counts,
    polynomial_field,
    stencil_residual,
    trigonometric_field,
)
from mindlin_ph.plate import PlateParameters


def _points(grid, kind, tag):
    idx = grid.q_index if kind == "q" else grid.p_index
    where = grid.q_where(tag) if kind == "q" else grid.p_where(tag)
    return {tuple(map(int, idx[i])) for i in where}


def test_boundary_classification_small_example(params):
    g = build_grid(params, 2, 2)
    assert _points(g, "p", CLAMPED) == {(0, 0), (1, 0), (2, 0)}
    assert _points(g, "q", FREE) == {(0, 0), (0, 1), (3, 0), (3, 1)}
    assert _points(g, "q", ACTUATED) == {(0, 2), (1, 2), (2, 2), (3, 2)}


def test_smallest_grid_has_interior_points(params):
    g = build_grid(params, 1, 1)
    assert g.n_p >= 1 and g.n_q >= 1


def test_design_grid_counts(plate):
    assert (plate.n_p, plate.n_q) == (42, 36)
    assert plate.N == 498
    assert plate.n_inputs == 40


def test_refined_study_grid_counts():
    assert interior_counts(20, 20) == (420, 400)
    sys = build_plate(PlateParameters(), 20, 20)
    assert sys.N == 5300


@pytest.mark.parametrize("cells", [(0, 3), (3, 0), (-1, 2), (2.5, 2)])
def test_invalid_cell_counts_rejected(params, cells):
    with pytest.raises(ValueError):
        build_grid(params, *cells)


def test_points_lie_inside_plate(params):
    g = build_grid(params, 5, 4)
    for xy in (g.q_coords, g.p_coords):
        assert np.all(xy[:, 0] >= 0) and np.all(xy[:, 0] <= params.L1 + 1e-15)
        assert np.all(xy[:, 1] >= 0) and np.all(xy[:, 1] <= params.L2 + 1e-15)
    assert np.allclose(g.q_coords[g.q_where(ACTUATED), 1], params.L2)
    assert np.allclose(g.p_coords[g.p_where(CLAMPED), 1], 0.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9))
def test_interconnection_exactly_skew(c1, c2):
    sys = build_plate(PlateParameters(), c1, c2)
    assert (sys.Pdp + sys.Pdq.T).count_nonzero() == 0
    Jd = sys.Jd
    assert (Jd + Jd.T).count_nonzero() == 0
    assert (sys.n_p, sys.n_q) == interior_counts(c1, c2)


def test_energy_weight_positive_definite(params):
    sys = build_plate(params, 2, 2)
    assert np.linalg.eigvalsh(sys.Qd.toarray())[0] > 0


def test_hamiltonian_zero_state(plate):
    assert discrete_hamiltonian(plate, np.zeros(plate.N)) == 0.0


def test_hamiltonian_single_momentum(plate, params):
    x = np.zeros(plate.N)
    x[plate.n_q * 8] = params.rho * params.h  # first component of first p-point
    expected = 0.5 * params.rho * params.h * 4 * plate.grid.h1 * plate.grid.h2
    assert discrete_hamiltonian(plate, x) == pytest.approx(expected, rel=1e-14)


def test_hamiltonian_matches_block_evaluation(plate, rng):
    x = rng.standard_normal(plate.N)
    xq, xp = plate.split(x)
    cm = plate.constitutive
    Q = xq.reshape(-1, 8)
    P = xp.reshape(-1, N_P)
    per_point = np.einsum("ij,jk,ik->", Q, cm.Cq, Q) + np.einsum("ij,jk,ik->", P, cm.Mp_inv, P)
    expected = 0.5 * per_point * plate.cell_area
    assert discrete_hamiltonian(plate, x) == pytest.approx(expected, rel=1e-12)


def test_hamiltonian_shape_mismatch(plate):
    with pytest.raises(ValueError):
        discrete_hamiltonian(plate, np.zeros(plate.N + 1))


def test_port_hamiltonian_triple_consistent(plate):
    A = plate.A.toarray()
    np.testing.assert_allclose(A, (plate.J @ plate.Q).toarray(), rtol=1e-14, atol=0)
    Jd = plate.Jd.toarray()
    np.testing.assert_allclose(plate.J.toarray() * plate.cell_area, Jd, rtol=1e-15)


def test_inputs_reach_only_top_row(plate):
    B = plate.B.tocsr()
    rows = np.unique(B.nonzero()[0])
    xq_n = plate.n_q * 8
    assert np.all(rows >= xq_n)  # forces enter momentum equations only
    p_int = plate.grid.p_where(INTERIOR)
    top_n = plate.grid.n_cells_2
    touched = {int(plate.grid.p_index[p_int[(r - xq_n) // N_P]][1]) for r in rows}
    assert touched == {top_n}


def test_linear_field_reproduced_exactly(params):
    sys = build_plate(params, 4, 3)
    assert stencil_residual(sys, polynomial_field(1, seed=3)) < 1e-9


def test_constant_field_residual_vanishes(params):
    sys = build_plate(params, 4, 3)
    assert stencil_residual(sys, polynomial_field(0, seed=5)) < 1e-9


@pytest.mark.parametrize("field", [polynomial_field(2, seed=1), trigonometric_field(seed=2)])
def test_second_order_consistency(params, field):
    sys = build_plate(params, 5, 5)
    order = consistency_check(sys, field)
    assert order == pytest.approx(2.0, abs=0.3)


def test_grid_csv_schema(tmp_path, params):
    g = build_grid(params, 2, 2)
    path = tmp_path / "grid.csv"
    g.write_csv(path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["kind", "m", "n", "x", "y", "tag"]
    assert len(rows) - 1 == len(g.q_index) + len(g.p_index)


def test_triplet_export_round_trip(tmp_path, params):
    sys = build_plate(params, 2, 1)
    path = tmp_path / "Jd.txt"
    sys.write_triplets(path, "Jd")
    lines = path.read_text().splitlines()
    _, name, nr, nc, nnz = lines[0].split()
    M = np.zeros((int(nr), int(nc)))
    for line in lines[1:]:
        i, j, v = line.split()
        M[int(i), int(j)] = float(v)
    np.testing.assert_array_equal(M, sys.Jd.toarray())
    assert int(nnz) == len(lines) - 1
