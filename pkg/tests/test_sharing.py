import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvrqss.errors import AccessConditionViolated, InsufficientCollaborators, InvalidDimension
from cvrqss.gaussian import (
    mode_entropy,
    quantum_mutual_information,
    symplectic_spectrum,
    tmsv_covariance,
)
from cvrqss.sharing import (
    EncodingMatrix,
    LeakageCoefficients,
    SharingParams,
    access_vectors,
    analytic_joint_covariance,
    build_decoding,
    build_encoding,
    check_access_independence,
    classify_exact,
    decoded_joint_covariance,
    encoded_covariance,
    extracted_secret_qmi,
    leakage_coefficients,
    qmi_curve,
    share_joint_covariance,
    subset_joint_covariance,
    vandermonde_encoding,
    wigner_coefficients,
    write_qmi_curve_csv,
)
from wigner_oracle import wigner_covariance_by_quadrature

ZERO_PATTERN = [(0, 1), (1, 0), (0, 3), (3, 0), (1, 2), (2, 1), (2, 3), (3, 2)]
SWAP = [2, 3, 0, 1]


def rank_oracle(vectors):
    return np.linalg.matrix_rank(vectors, tol=1e-9 * np.linalg.norm(vectors, 2))


# params and encodings -----------------------------------------------------------


def test_params_validation():
    p = SharingParams(3, 2.0, 0.5)
    assert p.n_players == 5
    for bad in [(1, 1.0), (2.5, 1.0), (2, 0.0), (2, -1.0)]:
        with pytest.raises(ValueError):
            SharingParams(*bad)
    with pytest.raises(ValueError):
        SharingParams(2, 1.0, -0.1)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_build_encoding_passes_exhaustive_rank_oracle(k):
    p = SharingParams(k, 5.0)
    g = build_encoding(p, seed=11)
    assert abs(np.linalg.det(g.g)) > 1e-9
    family = access_vectors(g, k)
    assert family.shape == (2 * k, k)
    for rows in itertools.combinations(range(2 * k), k):
        assert rank_oracle(family[list(rows)]) == k
    assert check_access_independence(g, p)


def test_build_encoding_deterministic():
    p = SharingParams(3, 2.0)
    assert np.array_equal(build_encoding(p, 5).g, build_encoding(p, 5).g)
    assert not np.array_equal(build_encoding(p, 5).g, build_encoding(p, 6).g)


def test_access_check_negative_cases():
    p = SharingParams(2, 1.0)
    twin = np.array([[1.0, 2.0, 0.0], [1.0, 2.0, 1.0], [0.3, 1.0, 2.0]])
    assert not check_access_independence(EncodingMatrix(twin), p)
    assert not check_access_independence(EncodingMatrix(np.zeros((3, 3))), p)
    assert check_access_independence(vandermonde_encoding(p), p)
    with pytest.raises(InvalidDimension):
        check_access_independence(EncodingMatrix(np.eye(5)), p)


def test_encoding_serializes_to_matrix_json():
    g = vandermonde_encoding(SharingParams(2, 1.0))
    d = g.to_dict()
    assert d["rows"] == d["cols"] == 3
    assert np.array_equal(np.array(d["data"]), g.g)


# decoding --------------------------------------------------------------------------


@pytest.mark.parametrize("k", [2, 3])
def test_decoding_constraints_and_untouched_rows(k):
    p = SharingParams(k, 3.0, 0.7)
    g = build_encoding(p, 2)
    for subset in itertools.combinations(range(p.n_players), k):
        d = build_decoding(g, subset, p)
        assert np.max(np.abs(d.constraint_residuals(k))) <= 1e-12 * max(1, np.abs(d.xi).max())
        others = [i for i in range(p.n_players) if i not in subset]
        assert np.array_equal(d.xi[k:], g.g[others])
        assert abs(np.linalg.det(d.transform)) > 1e-12
        assert np.allclose(d.xi[:k], d.transform @ g.g[list(subset)])


def test_decoding_errors():
    p = SharingParams(3, 1.0)
    g = build_encoding(p, 0)
    with pytest.raises(InsufficientCollaborators):
        build_decoding(g, [0, 1], p)
    with pytest.raises(ValueError):
        build_decoding(g, [0, 0, 1], p)
    bad = np.array(g.g)
    bad[1, :3] = bad[0, :3]
    with pytest.raises(AccessConditionViolated):
        build_decoding(EncodingMatrix(bad), [0, 1, 2], p)


# leakage coefficients ---------------------------------------------------------------


def test_leakage_coefficients_reproduce_by_independent_solve():
    p = SharingParams(2, 3.0)
    g = build_encoding(p, 4)
    d = build_decoding(g, [0, 2], p)
    coef = leakage_coefficients(d, p)
    # k = 2: one extra collaborator, alpha = beta * u is a scalar equation
    u = d.xi[1, 0] / d.xi[1, 1]
    assert math.isclose(coef.u2, u * u, rel_tol=1e-12)
    assert math.isclose(coef.v2, d.xi[0, 2] ** 2, rel_tol=1e-12)


def test_leakage_zero_gamma_row():
    p = SharingParams(2, 3.0)
    # share 0 carries no z weight and the others cancel it out of the decode
    g = EncodingMatrix(np.array([[1.0, 1.0, 0.0], [1.0, 2.0, 0.0], [1.0, 3.0, 1.0]]))
    d = build_decoding(g, [0, 1], p)
    assert leakage_coefficients(d, p).v2 == 0.0


def test_leakage_coefficients_validation():
    with pytest.raises(ValueError):
        LeakageCoefficients(-1.0, 0.0)
    with pytest.raises(ValueError):
        LeakageCoefficients(1.0, math.inf)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_leakage_matches_exact_gaussian_noise(k):
    """The decoded secret carries v2/a^2 extra q-noise and u2/a^2 extra p-noise."""
    p = SharingParams(k, 2.5, 0.6)
    g = build_encoding(p, 9)
    for subset in itertools.islice(itertools.combinations(range(p.n_players), k), 6):
        coef = leakage_coefficients(build_decoding(g, subset, p), p)
        V = decoded_joint_covariance(p, g, subset)
        excess = V - tmsv_covariance(p.zeta_mag)
        assert math.isclose(excess[0, 0] * p.a**2, coef.v2, rel_tol=1e-9, abs_tol=1e-9)
        assert math.isclose(excess[1, 1] * p.a**2, coef.u2, rel_tol=1e-9, abs_tol=1e-9)
        excess[0, 0] = excess[1, 1] = 0
        assert np.max(np.abs(excess)) <= 1e-9 * max(1, coef.u2, coef.v2)


# analytic covariance ----------------------------------------------------------------


def test_zero_pattern_and_symmetry():
    V = analytic_joint_covariance(1.3, 0.7, LeakageCoefficients(2.0, 0.5))
    for i, j in ZERO_PATTERN:
        assert V[i, j] == 0.0
    assert np.array_equal(V, V.T)
    assert symplectic_spectrum(V)[-1] >= 1 - 1e-9


@pytest.mark.parametrize("zeta", [0.0, 0.5, 2.0, 10.0])
def test_large_a_limit_is_tmsv(zeta):
    V = analytic_joint_covariance(zeta, 1e6, LeakageCoefficients(1.0, 1.0))
    scale = max(1.0, math.cosh(2 * zeta))
    assert np.max(np.abs(V - tmsv_covariance(zeta))) <= 1e-6 * scale


def test_wigner_coefficients_reduce_to_bare_form_at_unit_v2():
    zeta, a, u2 = 0.8, 1.7, 0.4
    E = math.exp(2 * zeta)
    w = wigner_coefficients(zeta, a, LeakageCoefficients(u2, 1.0))
    d = 2 * a * a * E + E * E + 1
    du = 2 * a * a * E + u2 * (E * E + 1)
    assert math.isclose(w.beta1, -(a * a * (E * E + 1) + 2 * E) / d)
    assert math.isclose(w.beta2, -(a * a * (E * E + 1)) / d)
    assert math.isclose(w.beta3, 2 * a * a * (E * E - 1) / d)
    assert math.isclose(w.gamma1, -(a * a * (E * E + 1) + 2 * u2 * E) / du)
    assert math.isclose(w.gamma2, -(a * a * (E * E + 1)) / du)
    assert math.isclose(w.gamma3, -2 * a * a * (E * E - 1) / du)
    N = 2 * a / math.pi**2 * math.sqrt(E / d) * math.sqrt(a * a * E / du)
    assert math.isclose(w.N, N)


@pytest.mark.parametrize("zeta,a,u2,v2", [(0.5, 1.0, 1.0, 1.0), (1.5, 0.5, 3.0, 0.2), (2.5, 20.0, 0.0, 4.0)])
def test_analytic_matches_quadrature_oracle(zeta, a, u2, v2):
    coef = LeakageCoefficients(u2, v2)
    V_quad, total = wigner_covariance_by_quadrature(wigner_coefficients(zeta, a, coef))
    assert abs(total - 1) <= 1e-9
    assert np.max(np.abs(V_quad - analytic_joint_covariance(zeta, a, coef))) <= 1e-7


@pytest.mark.parametrize("k", [2, 3])
def test_analytic_matches_exact_pipeline(k):
    p = SharingParams(k, 1.8, 0.9)
    g = build_encoding(p, 21)
    for subset in itertools.combinations(range(p.n_players), k):
        coef = leakage_coefficients(build_decoding(g, subset, p), p)
        A = analytic_joint_covariance(p.zeta_mag, p.a, coef)
        E = decoded_joint_covariance(p, g, subset)[np.ix_(SWAP, SWAP)]
        assert np.max(np.abs(A - E)) <= 1e-9 * max(1, np.abs(E).max())


def test_stable_for_large_squeezing():
    V = analytic_joint_covariance(10.0, 3.0, LeakageCoefficients(1.0, 1.0))
    assert np.all(np.isfinite(V))


# QMI -----------------------------------------------------------------------------------


def test_qmi_examples():
    coef = LeakageCoefficients(1.0, 1.0)
    assert extracted_secret_qmi(0.0, 2.0, coef) <= 1e-12
    zeta = 0.9
    assert math.isclose(
        extracted_secret_qmi(zeta, 1e6, coef), 2 * mode_entropy(math.cosh(2 * zeta)), abs_tol=1e-6
    )
    V = analytic_joint_covariance(zeta, 1.3, coef)
    assert math.isclose(extracted_secret_qmi(zeta, 1.3, coef), quantum_mutual_information(V), abs_tol=1e-9)


@settings(max_examples=100, deadline=None)
@given(
    zeta=st.floats(min_value=0.0, max_value=4.0),
    ln_a=st.floats(min_value=-3.0, max_value=6.0),
    u2=st.floats(min_value=0.0, max_value=10.0),
    v2=st.floats(min_value=0.0, max_value=10.0),
)
def test_qmi_bounded_by_full_secret_reference_qmi(zeta, ln_a, u2, v2):
    qmi = extracted_secret_qmi(zeta, math.exp(ln_a), LeakageCoefficients(u2, v2))
    assert 0 <= qmi <= 2 * mode_entropy(math.cosh(2 * zeta)) + 1e-9


@settings(max_examples=50, deadline=None)
@given(
    zeta=st.floats(min_value=0.05, max_value=3.0),
    ln_a=st.floats(min_value=-2.0, max_value=4.0),
    step=st.floats(min_value=1e-3, max_value=1.0),
)
def test_qmi_monotone_in_a(zeta, ln_a, step):
    coef = LeakageCoefficients(1.0, 1.0)
    lo = extracted_secret_qmi(zeta, math.exp(ln_a), coef)
    hi = extracted_secret_qmi(zeta, math.exp(ln_a + step), coef)
    assert hi >= lo - 1e-12


def test_qmi_curve_rows_and_csv(tmp_path):
    coef = LeakageCoefficients(1.0, 1.0)
    grid = np.exp(np.linspace(-2, 4, 7))
    rows = qmi_curve(2.0, grid[::-1], coef)
    assert len(rows) == 7
    assert [r[0] for r in rows] == sorted(r[0] for r in rows)
    assert math.isclose(rows[0][1], extracted_secret_qmi(2.0, grid[0], coef))
    assert math.isclose(rows[-1][1], extracted_secret_qmi(2.0, grid[-1], coef))
    path = tmp_path / "curve.csv"
    write_qmi_curve_csv(path, rows)
    lines = path.read_text().splitlines()
    assert lines[0] == "ln_a,qmi_bits" and len(lines) == 8
    with pytest.raises(ValueError):
        qmi_curve(1.0, [], coef)
    with pytest.raises(ValueError):
        qmi_curve(1.0, [1.0, -2.0], coef)


def test_classify_exact():
    assert classify_exact(0.0, 0.5, 1.0) == 0
    assert classify_exact(1.5, 0.5, 1.0) == 2
    assert classify_exact(0.7, 0.5, 1.0) == 1
    assert classify_exact(1.0, 0.5, 1.0) == 2 and classify_exact(0.5, 0.5, 1.0) == 0
    with pytest.raises(ValueError):
        classify_exact(0.7, 1.0, 0.5)


# states handed to the referee -----------------------------------------------------


def test_encoded_state_is_physical_and_pure():
    p = SharingParams(3, 2.0, 0.5)
    V = encoded_covariance(p, build_encoding(p, 1))
    assert np.allclose(symplectic_spectrum(V), 1.0, atol=1e-8)


def test_subset_states():
    p = SharingParams(2, 4.0, 0.8)
    g = vandermonde_encoding(p)
    single = subset_joint_covariance(p, g, [2])
    assert np.array_equal(single, share_joint_covariance(p, g, 2))
    pair = subset_joint_covariance(p, g, [2, 0])
    assert np.array_equal(pair, decoded_joint_covariance(p, g, [0, 2]))
    triple = subset_joint_covariance(p, g, [0, 1, 2])
    assert np.array_equal(triple, decoded_joint_covariance(p, g, [0, 1]))
    assert quantum_mutual_information(pair) > quantum_mutual_information(single)
    with pytest.raises(ValueError):
        subset_joint_covariance(p, g, [])


@settings(max_examples=100, deadline=None)
@given(
    zeta=st.floats(min_value=0.0, max_value=2.0),
    ln_a=st.floats(min_value=-2.0, max_value=3.0),
    u2=st.floats(min_value=0.0, max_value=5.0),
    v2=st.floats(min_value=0.0, max_value=5.0),
)
def test_closed_form_symplectic_eigenvalues_match_spectrum(zeta, ln_a, u2, v2):
    from cvrqss.sharing import _closed_form_symplectic_eigenvalues

    coef = LeakageCoefficients(u2, v2)
    V = analytic_joint_covariance(zeta, math.exp(ln_a), coef)
    expected = symplectic_spectrum(V)
    got = _closed_form_symplectic_eigenvalues(zeta, math.exp(ln_a), coef)
    assert np.allclose(got, expected, rtol=1e-9, atol=0)


@pytest.mark.parametrize("zeta", [3.875, 6.0, 10.0])
def test_noiseless_decoding_keeps_full_qmi_at_large_squeezing(zeta):
    # without leakage noise the extracted pair is the pure TMSV; cosh 2 zeta reaches 2.4e8
    qmi = extracted_secret_qmi(zeta, 1.0, LeakageCoefficients(0.0, 0.0))
    assert math.isclose(qmi, 2 * mode_entropy(math.cosh(2 * zeta)), rel_tol=1e-12)
