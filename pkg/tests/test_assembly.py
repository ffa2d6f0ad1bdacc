import numpy as np
import pytest

from foliage.assembly import AssemblyError, CoefficientSet, DomainSpec, assemble
from foliage.spectral import eigendecompose

from _oracles import HAND_K_3, HAND_M_3


def test_three_node_matrices_match_hand_assembly():
    forms = assemble(DomainSpec(0.0, 1.0, 2), CoefficientSet.constant())
    np.testing.assert_allclose(forms.K, HAND_K_3, rtol=0, atol=1e-15)
    np.testing.assert_allclose(forms.M, HAND_M_3, rtol=0, atol=1e-15)


def test_nonpositive_reaction_rejected_with_node_location():
    coeffs = CoefficientSet(a=lambda x: np.ones_like(x), a0=lambda x: np.zeros_like(x),
                            c_lo=1.0, c_hi=1.0)
    with pytest.raises(AssemblyError, match="a0.*cell 0"):
        assemble(DomainSpec(0.0, 1.0, 2), coeffs)


def test_nonpositive_diffusion_reports_violating_cell():
    coeffs = CoefficientSet(a=lambda x: 1.0 - 2.0 * x, a0=lambda x: np.ones_like(x),
                            c_lo=1.0, c_hi=1.0)
    with pytest.raises(AssemblyError, match=r"coefficient a .*cell 2"):
        assemble(DomainSpec(0.0, 1.0, 4), coeffs)


def test_nonpositive_endpoint_weight_rejected():
    with pytest.raises(AssemblyError, match="c_lo"):
        assemble(DomainSpec(0.0, 1.0, 4), CoefficientSet.constant(c_lo=0.0))


def test_bad_domain_rejected():
    with pytest.raises(AssemblyError):
        DomainSpec(1.0, 0.0, 4)
    with pytest.raises(AssemblyError):
        DomainSpec(0.0, 1.0, 1)


@pytest.mark.parametrize("n_cells", [2, 7, 33])
def test_symmetry_and_positive_definiteness(n_cells):
    coeffs = CoefficientSet(a=lambda x: 1.0 + 0.5 * np.sin(3 * x),
                            a0=lambda x: 0.5 + x * x, c_lo=2.0, c_hi=0.7)
    forms = assemble(DomainSpec(-0.3, 1.2, n_cells), coeffs)
    for A in (forms.K, forms.M):
        assert np.max(np.abs(A - A.T)) <= 1e-12 * np.max(np.abs(A))
    np.linalg.cholesky(forms.M)
    np.linalg.cholesky(forms.K)
    rng = np.random.default_rng(42)
    for _ in range(100):
        x = rng.standard_normal(forms.dof)
        assert x @ forms.K @ x > 0.0
        assert x @ forms.M @ x > 0.0


def test_unit_coefficients_keep_constant_vector_exact():
    # Row sums of K and M agree for the unit preset, so the constant vector is
    # an exact eigenvector with eigenvalue one at any resolution.
    forms = assemble(DomainSpec(0.0, 1.0, 17), CoefficientSet.constant())
    ones = np.ones(forms.dof)
    np.testing.assert_allclose(forms.K @ ones, forms.M @ ones, rtol=0, atol=1e-13)


def test_mesh_refinement_convergence_against_fine_reference():
    # The smallest eigenvalue of the unit preset is exact at every resolution,
    # so the advertised second-order rate is read off the next eigenvalue.
    coeffs = CoefficientSet.constant()
    lam2 = {}
    for n in (32, 64, 128, 512):
        forms = assemble(DomainSpec(0.0, 1.0, n), coeffs)
        lam2[n] = eigendecompose(forms, 1).lambdas[1]
    e32 = abs(lam2[32] - lam2[512])
    e64 = abs(lam2[64] - lam2[512])
    e128 = abs(lam2[128] - lam2[512])
    assert e64 / e32 <= 0.3
    assert e128 / e64 <= 0.3
