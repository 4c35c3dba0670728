import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mindlin_ph.plate import (
    PlateParameters,
    build_constitutive,
    build_interconnection,
    energy_density,
)


def test_p0_sparsity_pattern():
    im = build_interconnection()
    rows, cols = np.nonzero(im.P0)
    assert {(r + 1, c + 1) for r, c in zip(rows, cols)} == {(4, 7), (5, 8)}


def test_p1_rows_are_distinct_unit_vectors():
    im = build_interconnection()
    np.testing.assert_array_equal(im.P1 @ im.P1.T, np.eye(5))


def test_stacked_p1_p2_full_column_rank():
    im = build_interconnection()
    assert np.linalg.matrix_rank(np.vstack([im.P1, im.P2])) == 8


def test_mass_matrix_for_aluminium(params):
    cm = build_constitutive(params)
    np.testing.assert_allclose(
        np.diag(cm.Mp), [26.989, 26.989, 26.989, 2.2490833e-4, 2.2490833e-4], rtol=1e-6
    )


def test_membrane_block_with_zero_poisson_ratio():
    cm = build_constitutive(PlateParameters(E=1.0, nu=0.0, h=1.0, kappa=1.0))
    np.testing.assert_allclose(cm.Cq[:3, :3], np.diag([1.0, 1.0, 0.5]), atol=1e-15)


def test_stiffness_positive_definite(params):
    cm = build_constitutive(params)
    assert np.linalg.eigvalsh(cm.Cq)[0] > 0
    np.testing.assert_array_equal(cm.Cq, cm.Cq.T)


@pytest.mark.parametrize("nu", [-1.0, 0.5, 0.7, -2.0])
def test_poisson_ratio_outside_range_rejected(nu):
    with pytest.raises(ValueError, match="nu"):
        build_constitutive(PlateParameters(nu=nu))


@pytest.mark.parametrize("field", ["E", "rho", "h", "L1", "L2", "kappa"])
def test_nonpositive_parameters_rejected(field):
    with pytest.raises(ValueError, match=field):
        PlateParameters(**{field: -1.0}).validate()


def test_energy_density_zero_state(params):
    cm = build_constitutive(params)
    assert energy_density(cm, np.zeros(8), np.zeros(5)) == 0.0


def test_energy_density_single_momentum(params):
    cm = build_constitutive(params)
    p = np.zeros(5)
    p[0] = params.rho * params.h
    assert energy_density(cm, np.zeros(8), p) == pytest.approx(13.4945, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=8, max_size=8))
def test_energy_density_is_quadratic_in_strain(q):
    cm = build_constitutive(PlateParameters())
    q = np.array(q)
    e1 = energy_density(cm, q, np.zeros(5))
    e2 = energy_density(cm, 2 * q, np.zeros(5))
    assert e2 == pytest.approx(4 * e1, rel=1e-12, abs=1e-300)
    assert e1 >= 0
