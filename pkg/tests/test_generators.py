import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from epholonomy.errors import AtExceptionalPoint, NotTimeIndependent
from epholonomy.generators import (
    ClosedFormField,
    SolvedField,
    assemble_K,
    cross_direction_check,
    solve_generator_pair,
)
from epholonomy.matrix_core import commutator
from epholonomy.model import MODEL, BasePoint, EPLocus, HamiltonianFamily, kx_closed, ky_closed

coord = st.floats(-2, 2, allow_nan=False)


class ThreeLevel(HamiltonianFamily):
    """Hermitian three-level chain with one tunable coupling; spectrum never degenerate."""

    dim = 3
    n_params = 1
    is_time_independent = True
    D = np.diag([0.0, 1.0, 3.0]).astype(complex)
    C = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex)

    def hamiltonian(self, p):
        return self.D + p.q[0] * self.C

    def partial(self, i, p):
        return self.C.copy()

    def ep_locus(self):
        return EPLocus(np.empty((0, 1)))


class Driven(ThreeLevel):
    is_time_independent = False


def closed(i):
    return kx_closed if i == 0 else ky_closed


# -- examples ---------------------------------------------------------------

def test_origin_x_direction():
    pair = solve_generator_pair(MODEL, 0, BasePoint(0, (0, 0)))
    assert np.allclose(pair.K1, 0, atol=1e-14)
    assert np.allclose(pair.K0, [[0, 0.5], [-0.5, 0]], atol=1e-14)


def test_matches_closed_form_decomposition():
    pair = solve_generator_pair(MODEL, 0, BasePoint(0, (0.5, 0.3)))
    k0 = kx_closed(0.5, 0.3, 0)
    assert np.linalg.norm(pair.K0 - k0) < 1e-10
    assert np.linalg.norm(pair.K1 - (kx_closed(0.5, 0.3, 1) - k0)) < 1e-10


def test_at_ep_raises():
    with pytest.raises(AtExceptionalPoint):
        solve_generator_pair(MODEL, 1, BasePoint(0, (1, 0)))


def test_assemble_K():
    pair = solve_generator_pair(MODEL, 0, BasePoint(0, (0.5, 0)))
    assert np.array_equal(assemble_K(pair, 0), pair.K0)
    assert np.allclose(assemble_K(pair, 1) - assemble_K(pair, 0), pair.K1)
    assert np.linalg.norm(assemble_K(pair, 2.0) - kx_closed(0.5, 0, 2.0)) < 1e-10


def test_solution_independent_of_time_coordinate():
    a = solve_generator_pair(MODEL, 1, BasePoint(0, (0.2, -0.4)))
    b = solve_generator_pair(MODEL, 1, BasePoint(7.5, (0.2, -0.4)))
    assert np.array_equal(a.K0, b.K0) and np.array_equal(a.K1, b.K1)


@pytest.mark.parametrize("q", [(0.3, 0.4), (0.0, 0.0)])
def test_cross_direction_check(q):
    p = BasePoint(0, q)
    c = cross_direction_check(solve_generator_pair(MODEL, 0, p), solve_generator_pair(MODEL, 1, p), MODEL, p)
    assert c.slope < 1e-6 and c.intercept < 1e-6 and c.slopes_commute < 1e-12


def test_cross_direction_check_blows_up_near_ep():
    # residuals grow roughly like |q - r_+|^-4 as the EP is approached
    res = []
    for eps in (1e-2, 1e-3, 1e-4):
        p = BasePoint(0, (1 - eps, eps))
        c = cross_direction_check(solve_generator_pair(MODEL, 0, p), solve_generator_pair(MODEL, 1, p), MODEL, p)
        res.append(c.slope)
    assert res[1] > 1.0
    assert res[0] < res[1] < res[2]


def test_rejects_time_dependent_family():
    with pytest.raises(NotTimeIndependent):
        solve_generator_pair(Driven(), 0, BasePoint(0, (0.1,)))
    with pytest.raises(NotTimeIndependent):
        SolvedField(Driven())


def test_three_level_family():
    fam = ThreeLevel()
    p = BasePoint(0, (0.4,))
    pair = solve_generator_pair(fam, 0, p)
    r1, r2 = pair.residuals(fam)
    assert r1 < 1e-10 and r2 < 1e-10
    K = SolvedField(fam).generators(np.array([[0.0, 0.4]]))[0]
    assert np.allclose(K[1], pair.K0, atol=1e-10)


def test_solved_field_matches_closed_form_field(rng):
    pts = rng.uniform(-2, 2, size=(400, 2))
    pts = pts[np.minimum(np.hypot(pts[:, 0] - 1, pts[:, 1]), np.hypot(pts[:, 0] + 1, pts[:, 1])) > 0.05]
    coords = np.column_stack([rng.uniform(-2, 2, len(pts)), pts])
    a = SolvedField(MODEL).generators(coords)
    b = ClosedFormField().generators(coords)
    assert np.max(np.abs(a - b)) < 1e-9


def test_solved_field_refuses_ep():
    with pytest.raises(AtExceptionalPoint):
        SolvedField(MODEL).generators(np.array([[0.0, -1.0, 0.0]]))


# -- properties -------------------------------------------------------------

@given(coord, coord, st.integers(0, 1))
def test_determining_equations_and_closed_form(x, y, i):
    assume(min(np.hypot(x - 1, y), np.hypot(x + 1, y)) > 0.05)
    p = BasePoint(0, (x, y))
    pair = solve_generator_pair(MODEL, i, p)
    r1, r2 = pair.residuals(MODEL)
    assert r1 < 1e-10 and r2 < 1e-10
    k0 = closed(i)(x, y, 0)
    assert np.linalg.norm(pair.K0 - k0) < 1e-9
    assert np.linalg.norm(pair.K1 - (closed(i)(x, y, 1) - k0)) < 1e-9


@given(coord, coord)
def test_slope_commutes_with_hamiltonian(x, y):
    assume(min(np.hypot(x - 1, y), np.hypot(x + 1, y)) > 0.05)
    p = BasePoint(0, (x, y))
    H = MODEL.hamiltonian(p)
    for i in (0, 1):
        K1 = solve_generator_pair(MODEL, i, p).K1
        assert np.linalg.norm(commutator(K1, H)) < 1e-12 * max(1.0, np.linalg.norm(K1))
