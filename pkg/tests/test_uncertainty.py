import math

import numpy as np
import pytest

from tomokit.counts import CountRecord
from tomokit.exceptions import DegenerateConcurrence, EofDerivativeSingular, NotPhysical, ZeroFlux
from tomokit.linear import DensityMatrix
from tomokit.measures import concurrence, entanglement_of_formation
from tomokit.synthetic import _nominal_angles, expected_fractions
from tomokit.uncertainty import (
    ErrorBudget,
    concurrence_error,
    concurrence_gradient,
    concurrence_gradient_fd,
    entropy_error,
    entropy_gradient,
    eof_derivative,
    full_error_budget,
    lambda_variances,
    linear_entropy_error,
    linear_entropy_gradient,
    rho_element_errors,
    s_parameters,
)

from helpers import (
    bell_mixture,
    concurrence_formula,
    entropy_formula,
    fd_through_linear,
    linear_entropy_formula,
    random_density,
)
from reference_data import COUNTS, LINEAR_RHO, MEASURE_SIGMAS, NORMALIZATION, mle_rho_rank2

HH_FRACTIONS = np.array([1, 0, 0, 0, 0.5, 0, 0, 0.5, 0.25, 0.25, 0.25, 0.5, 0, 0, 0.5, 0.25])
DTHETA = math.radians(0.25)


def _entangled_full_rank(seed=0, weight=0.8):
    return bell_mixture(np.random.default_rng(seed), weight)


def _zero_budget(tset, rho):
    z = np.zeros(16)
    return ErrorBudget(lam=z, count_term=z, angle_term=z, s=tset.project(rho), flux=1e4, delta_theta=0.0)


# --- s parameters ---------------------------------------------------------


def test_s_linear_path(reference_record):
    s = s_parameters(reference_record)
    assert s[0] == pytest.approx(34749 / 71322)
    assert round(s[0], 4) == 0.4872
    assert reference_record.normalization == NORMALIZATION


def test_s_model_path_hh(tset, reference_record):
    s = s_parameters(reference_record, DensityMatrix(np.diag([1.0, 0, 0, 0])), tset)
    np.testing.assert_allclose(s, HH_FRACTIONS, atol=1e-12)


def test_s_model_path_basis_sum(tset, reference_record):
    rng = np.random.default_rng(1)
    for _ in range(20):
        s = s_parameters(reference_record, DensityMatrix(random_density(rng)), tset)
        assert s[:4].sum() == pytest.approx(1.0, abs=1e-10)


def test_s_zero_flux():
    with pytest.raises(ZeroFlux):
        s_parameters(CountRecord(np.r_[np.zeros(4), np.ones(12)]))


# --- Lambda ---------------------------------------------------------------


def test_lambda_pure_poisson(tset, reference_record):
    s = reference_record.s()
    b = lambda_variances(reference_record, s, tset, delta_theta=0.0)
    np.testing.assert_array_equal(b.lam, s / NORMALIZATION)
    np.testing.assert_array_equal(b.angle_term, 0.0)


def test_lambda_large_flux_is_angle_term(tset):
    s = HH_FRACTIONS * 0.9 + 0.1 * tset.project(np.eye(4) / 4)
    b = lambda_variances(CountRecord(1e16 * s), s, tset, delta_theta=DTHETA)
    np.testing.assert_allclose(b.lam, b.angle_term, atol=1e-12, rtol=0)


def test_lambda_split_sums_exactly(tset, reference_record):
    b = lambda_variances(reference_record, reference_record.s(), tset)
    np.testing.assert_array_equal(b.lam, b.count_term + b.angle_term)
    np.testing.assert_array_equal(b.source_split[:, 0], b.count_term)
    assert np.all(b.lam >= 0)


def test_angle_term_against_angle_finite_differences(tset):
    # independent route: differentiate <psi(theta)|rho|psi(theta)> in the 64 angles
    rho = _entangled_full_rank(2)
    s = tset.project(rho)
    b = lambda_variances(CountRecord(1e4 * s), s, tset, delta_theta=DTHETA)
    base = _nominal_angles(tset)
    h = 1e-6
    grads = np.zeros((16, 4))
    for i in range(4):
        up, dn = base.copy(), base.copy()
        up[:, i] += h
        dn[:, i] -= h
        grads[:, i] = (expected_fractions(rho, tset, up) - expected_fractions(rho, tset, dn)) / (2 * h)
    np.testing.assert_allclose(b.angle_term, DTHETA**2 * np.sum(grads**2, axis=1), rtol=1e-6, atol=1e-16)


def test_lambda_monotone_in_flux(tset):
    s = tset.project(_entangled_full_rank(3))
    small = lambda_variances(CountRecord(1e4 * s), s, tset, delta_theta=0.0)
    large = lambda_variances(CountRecord(2e4 * s), s, tset, delta_theta=0.0)
    keep = s > 0
    assert np.all(large.lam[keep] < small.lam[keep])
    a = lambda_variances(CountRecord(1e4 * s), s, tset, delta_theta=DTHETA)
    b = lambda_variances(CountRecord(2e4 * s), s, tset, delta_theta=DTHETA)
    np.testing.assert_array_equal(a.angle_term, b.angle_term)


def test_negative_delta_theta(tset, reference_record):
    with pytest.raises(ValueError):
        lambda_variances(reference_record, reference_record.s(), tset, delta_theta=-1.0)


def test_exact_covariance_structure(tset, reference_record):
    s = reference_record.s()
    b = lambda_variances(reference_record, s, tset, exact_covariance=True, delta_theta=0.0)
    d = tset.d_flags
    N = NORMALIZATION
    np.testing.assert_allclose(b.covariance, b.covariance.T)
    # basis-basis block: s(delta - s)/N, the multinomial form
    np.testing.assert_allclose(b.covariance[:4, :4], (np.diag(s[:4]) - np.outer(s[:4], s[:4])) / N, atol=1e-18)
    # non-basis pairs gain +s s / N
    nb = ~d
    np.testing.assert_allclose(
        b.covariance[np.ix_(nb, nb)], (np.diag(s[nb]) + np.outer(s[nb], s[nb])) / N, atol=1e-18
    )
    np.testing.assert_allclose(b.covariance[np.ix_(d, nb)], 0.0, atol=1e-18)
    np.testing.assert_allclose(b.lam, np.diag(b.covariance))


# --- element errors -------------------------------------------------------


def test_rho_errors_zero_lambda(tset):
    b = _zero_budget(tset, np.eye(4) / 4)
    np.testing.assert_array_equal(rho_element_errors(b, tset), 0.0)


@pytest.mark.parametrize("nu", [0, 5, 15])
def test_rho_errors_single_term(tset, nu):
    lam = np.zeros(16)
    lam[nu] = 1.0
    b = ErrorBudget(lam=lam, count_term=lam, angle_term=np.zeros(16), s=np.zeros(16), flux=1.0, delta_theta=0.0)
    np.testing.assert_allclose(rho_element_errors(b, tset), np.abs(tset.m_matrices[nu]), atol=1e-15)


# --- gradients against finite differences ---------------------------------


def test_entropy_gradient_fd(tset):
    for seed in range(5):
        rho = DensityMatrix(random_density(np.random.default_rng(10 + seed)))
        fd = fd_through_linear(entropy_formula, rho.matrix, tset, 1e-6)
        np.testing.assert_allclose(entropy_gradient(rho, tset), fd, atol=1e-4)


def test_linear_entropy_gradient_fd(tset):
    for seed in range(5):
        rho = DensityMatrix(random_density(np.random.default_rng(20 + seed)))
        fd = fd_through_linear(linear_entropy_formula, rho.matrix, tset, 1e-4)
        np.testing.assert_allclose(linear_entropy_gradient(rho, tset), fd, atol=1e-6)


def test_linear_entropy_gradient_is_trace_form(tset):
    # closed form: -(8/3) sum_mu Tr(M_mu M_nu) s_mu
    rho = DensityMatrix(_entangled_full_rank(4))
    s = tset.project(rho.matrix)
    gram = np.real(np.einsum("aij,bji->ab", tset.m_matrices, tset.m_matrices))
    np.testing.assert_allclose(linear_entropy_gradient(rho, tset), -8 / 3 * gram @ s, atol=1e-12)


def test_concurrence_gradient_fd(tset):
    for seed in range(5):
        rho = DensityMatrix(_entangled_full_rank(30 + seed))
        c, work = concurrence(rho)
        assert c.value > 0.1
        fd = fd_through_linear(concurrence_formula, rho.matrix, tset, 1e-6)
        np.testing.assert_allclose(concurrence_gradient(work, tset), fd, atol=1e-3)


def test_concurrence_gradient_matches_internal_fd(tset):
    rho = DensityMatrix(_entangled_full_rank(40))
    _, work = concurrence(rho)
    np.testing.assert_allclose(concurrence_gradient(work, tset), concurrence_gradient_fd(rho, tset), atol=1e-6)


def test_concurrence_gradient_zero_when_separable(tset):
    _, work = concurrence(np.eye(4) / 4)
    np.testing.assert_array_equal(concurrence_gradient(work, tset), 0.0)


def test_eof_derivative_fd():
    for c in (0.05, 0.3, 0.6, 0.9, 0.99):
        h = 1e-6
        fd = (entanglement_of_formation(c + h).value - entanglement_of_formation(c - h).value) / (2 * h)
        assert eof_derivative(c) == pytest.approx(fd, rel=1e-6)


def test_eof_derivative_tiny_c():
    assert eof_derivative(1e-12) >= 0.0
    assert eof_derivative(0.0) == 0.0


def test_eof_derivative_singular():
    with pytest.raises(EofDerivativeSingular):
        eof_derivative(1.0)


# --- measure errors -------------------------------------------------------


def test_all_errors_zero_with_zero_lambda(tset):
    rho = DensityMatrix(_entangled_full_rank(5))
    b = _zero_budget(tset, rho.matrix)
    assert entropy_error(rho, b, tset) == 0.0
    assert linear_entropy_error(rho, b, tset) == 0.0
    _, work = concurrence(rho)
    ce = concurrence_error(work, b, tset)
    assert ce.d_concurrence == ce.d_tangle == ce.d_eof == 0.0


def test_tangle_ratio(tset):
    rho = DensityMatrix(_entangled_full_rank(6))
    s = tset.project(rho.matrix)
    b = lambda_variances(CountRecord(1e4 * s), s, tset)
    c, work = concurrence(rho)
    ce = concurrence_error(work, b, tset)
    assert ce.d_tangle / ce.d_concurrence == pytest.approx(2 * c.value, rel=1e-14)
    assert ce.concurrence_method == ce.eof_method == "analytic"


def test_degenerate_spectrum_falls_back(tset):
    rho = DensityMatrix(mle_rho_rank2())
    s = tset.project(rho.matrix)
    b = lambda_variances(CountRecord(COUNTS), s, tset)
    _, work = concurrence(rho)
    with pytest.raises(DegenerateConcurrence):
        concurrence_gradient(work, tset)
    with pytest.raises(DegenerateConcurrence):
        concurrence_error(work, b, tset, fallback=False)
    ce = concurrence_error(work, b, tset)
    assert ce.concurrence_method == "finite-difference"
    assert ce.d_concurrence > 0


def test_bell_state_eof_falls_back(tset):
    bell = np.zeros((4, 4))
    bell[0, 0] = bell[0, 3] = bell[3, 0] = bell[3, 3] = 0.5
    rho = DensityMatrix(0.999999999 * bell + 1e-9 * np.eye(4) / 4)
    s = tset.project(rho.matrix)
    b = lambda_variances(CountRecord(1e4 * s), s, tset)
    _, work = concurrence(rho)
    ce = concurrence_error(work, b, tset)
    assert ce.concurrence_method == ce.eof_method == "finite-difference"
    assert np.isfinite(ce.d_eof)


def test_errors_shrink_with_flux(tset):
    rho = DensityMatrix(_entangled_full_rank(7))
    s = tset.project(rho.matrix)
    small = full_error_budget(rho, CountRecord(1e3 * s), tset, delta_theta=0.0)
    large = full_error_budget(rho, CountRecord(1e5 * s), tset, delta_theta=0.0)
    for k in small.measure_sigmas:
        assert large.measure_sigmas[k] == pytest.approx(small.measure_sigmas[k] / 10, rel=1e-9)


def test_full_budget_rejects_nonphysical(tset, reference_record):
    with pytest.raises(NotPhysical):
        full_error_budget(DensityMatrix(LINEAR_RHO / np.trace(LINEAR_RHO).real), reference_record, tset)


def test_full_budget_bad_path(tset, reference_record):
    with pytest.raises(ValueError):
        full_error_budget(DensityMatrix(mle_rho_rank2()), reference_record, tset, s_path="linear")


@pytest.mark.parametrize("path", ["model", "counts"])
def test_reference_error_bars(tset, reference_record, path):
    b = full_error_budget(DensityMatrix(mle_rho_rank2()), reference_record, tset, s_path=path)
    for name, want in MEASURE_SIGMAS.items():
        assert b.measure_sigmas[name] == pytest.approx(want, rel=0.25), name
    assert b.notes  # finite-difference fallback is flagged


def test_exact_covariance_budget_close_to_default(tset, reference_record):
    rho = DensityMatrix(mle_rho_rank2())
    a = full_error_budget(rho, reference_record, tset)
    b = full_error_budget(rho, reference_record, tset, exact_covariance=True)
    for k in a.measure_sigmas:
        assert b.measure_sigmas[k] == pytest.approx(a.measure_sigmas[k], rel=0.5)
