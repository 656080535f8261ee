import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from netspde.delay import assemble_full_generator, dirac, uniform, zero_measure
from netspde.errors import NonFiniteEntries, StepNotMultipleOfDelayGrid
from netspde.graph import build_graph, path_graph
from netspde.semigroup import (
    check_semigroup_property, dyson_phillips, explicit_unperturbed, expm, spectral_abscissa, weighted_norm,
)

from conftest import afrak


def test_expm_examples():
    assert expm(np.array([[-1.0]])).matrix[0, 0] == pytest.approx(0.36787944117144233, rel=1e-15)
    np.testing.assert_array_equal(expm(np.zeros((3, 3))).matrix, np.eye(3))
    np.testing.assert_allclose(expm(np.array([[0.0, 1.0], [0.0, 0.0]])).matrix, [[1, 1], [0, 1]], atol=1e-15)
    with pytest.raises(NonFiniteEntries):
        expm(np.array([[np.nan]]))


@given(st.integers(0, 10_000), st.floats(0.01, 20.0))
@settings(max_examples=40, deadline=None)
def test_expm_matches_scipy(seed, scale):
    # independent reference implementation
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 12))
    M = rng.standard_normal((n, n)) * scale / np.sqrt(n)
    ref = scipy.linalg.expm(M)
    np.testing.assert_allclose(expm(M).matrix, ref, rtol=1e-10, atol=1e-12 * np.abs(ref).max())


def test_expm_generator_against_scipy(p3):
    gen = assemble_full_generator(afrak(p3, n_x=21, b=-0.5), dirac(1.0), 32)
    ref = scipy.linalg.expm(0.5 * gen.matrix)
    assert np.max(np.abs(expm(gen.matrix, 0.5).matrix - ref)) < 1e-11


def test_spectral_abscissa_examples():
    assert spectral_abscissa(np.diag([-1.0, -2.0])) == -1.0
    assert spectral_abscissa(np.zeros((2, 2))) == 0.0
    a = afrak(build_graph(2, [(1, 2)]), n_x=11, b=-1.0)
    assert spectral_abscissa(a.matrix) < 0


def test_identity_at_zero(p3):
    a = afrak(p3, n_x=7)
    gen = assemble_full_generator(a, dirac(1.0), 8)
    np.testing.assert_array_equal(explicit_unperturbed(0.0, a, 8, 1.0).matrix, np.eye(gen.dim))
    np.testing.assert_array_equal(dyson_phillips(gen, 0.0, 3).matrix, np.eye(gen.dim))


def shift_block(gen, M):
    s = gen.segment_slice
    return M[s, s]


@pytest.mark.parametrize("extra", [1, 2, 5])
def test_nilpotent_after_horizon(p3, extra):
    a = afrak(p3, n_x=7)
    gen = assemble_full_generator(a, dirac(1.0), 8)
    S = shift_block(gen, explicit_unperturbed(1.0 + extra / 8, a, 8, 1.0).matrix)
    assert np.count_nonzero(S) == 0


def test_shift_before_horizon_is_exact(p3):
    a = afrak(p3, n_x=7)
    gen = assemble_full_generator(a, dirac(1.0), 8)
    S = shift_block(gen, explicit_unperturbed(0.25, a, 8, 1.0).matrix)
    for al in range(3):
        blk = S[al * 9 : (al + 1) * 9, al * 9 : (al + 1) * 9]
        np.testing.assert_array_equal(blk[:7], np.eye(9)[2:])
        assert np.count_nonzero(blk[7:]) == 0


def test_history_rows_copy_d_without_b(p3):
    a = afrak(p3, n_x=7)
    gen = assemble_full_generator(a, zero_measure(1.0), 8)
    for mode in ("node", "coupled"):
        M = explicit_unperturbed(0.5, a, 8, 1.0, history=mode).matrix
        d = np.array([1.0, -2.0, 3.0])
        eta0 = np.zeros((3, 9))
        eta0[:, -1] = d  # consistent state: eta(0) = d
        X = np.concatenate([np.zeros(a.n_interior), d, eta0.ravel()])
        eta = (M @ X)[gen.segment_slice].reshape(3, 9)
        if mode == "node":
            np.testing.assert_allclose(eta[:, 4:], np.repeat(d[:, None], 5, axis=1), atol=1e-14)
        np.testing.assert_array_equal(eta[:, :4], 0.0)
        d_t = (M @ X)[a.n_interior : a.dim]
        if mode == "coupled":
            np.testing.assert_allclose(eta[:, -1], d_t, atol=1e-14)
        else:
            # flux moves d, but the literal block keeps e^{tB} d: eta(0) = d is lost
            assert np.max(np.abs(eta[:, -1] - d_t)) > 0.1


def test_coupled_history_is_a_semigroup(p3):
    a = afrak(p3, n_x=7, b=-0.3)
    T = lambda t: explicit_unperturbed(t, a, 8, 1.0).matrix
    assert np.max(np.abs(T(0.25) @ T(0.5) - T(0.75))) < 1e-13


def test_modes_agree_without_flux():
    from netspde.delay import without_flux

    a = without_flux(afrak(path_graph(3), n_x=7, b=[-0.2, 0.0, -1.0]))
    T1 = explicit_unperturbed(0.625, a, 8, 1.0, history="node").matrix
    T2 = explicit_unperturbed(0.625, a, 8, 1.0, history="coupled").matrix
    np.testing.assert_allclose(T1, T2, atol=1e-14)


def test_explicit_requires_grid(p3):
    with pytest.raises(StepNotMultipleOfDelayGrid):
        explicit_unperturbed(0.3, afrak(p3, n_x=7), 8, 1.0)


def test_dp_zero_order_and_zero_measure(p3):
    a = afrak(p3, n_x=7, b=-0.5)
    gen = assemble_full_generator(a, dirac(1.0, 0.5), 8)
    np.testing.assert_array_equal(dyson_phillips(gen, 0.5, 0).matrix, explicit_unperturbed(0.5, a, 8, 1.0).matrix)
    gen0 = assemble_full_generator(a, zero_measure(1.0), 8)
    terms = dyson_phillips(gen0, 0.5, 3, terms=True)
    for S in terms[1:]:
        np.testing.assert_array_equal(S.matrix, terms[0].matrix)


def test_dp_first_order_term_quadrature():
    # scalar check on a decoupled node: first DP term of x' = b x + w x(t - r)
    from netspde.delay import without_flux

    g = build_graph(2, [(1, 2)])
    a = without_flux(afrak(g, n_x=5, b=-1.0))
    gen = assemble_full_generator(a, dirac(0.5, 0.3), 16)
    t = 0.5
    dp = dyson_phillips(gen, t, 1, terms=True)
    T1 = dp[1].matrix - dp[0].matrix
    # T^1(t) applied to a constant unit history on node 1 with d = 0:
    # int_0^t e^{-(t-s)} * 0.3 * 1 ds (history slot at -r stays 1 while s < r... up to s = t = r)
    X = np.zeros(gen.dim)
    X[gen.segment_index(0, 0) : gen.segment_index(0, 16)] = 1.0
    val = (T1 @ X)[a.node_index(0)]
    exact = 0.3 * (1 - np.exp(-t))
    # the history jumps to d = 0 at s = t, so the trapezoid rule is only O(dtheta) here
    assert abs(val - exact) < 0.3 * gen.dtheta


def test_semigroup_property_examples(p3):
    gen = assemble_full_generator(afrak(p3, n_x=11), dirac(1.0), 16)
    assert check_semigroup_property(gen, 0.3, 0.0) <= 1e-12
    assert check_semigroup_property(gen, 0.1, 0.1) <= 1e-8
    assert check_semigroup_property(gen, 0.1, 0.2, unperturbed=True) <= 1e-8


def test_contraction_and_decay(p3):
    a = afrak(p3, n_x=21, b=[-1.0, 0.0, 0.0])
    w = a.weights
    om = spectral_abscissa(a.matrix)
    assert om < 0
    for t in (0.05, 0.2, 1.0, 3.0):
        nrm = weighted_norm(expm(a.matrix, t).matrix, w)
        assert nrm <= 1 + 1e-10
        assert nrm <= np.exp(om * t) * (1 + 1e-8)  # W-self-adjoint: norm is exactly e^{omega t}


def test_frozen_dp_residuals(p3):
    # frozen regression values; explicit base vs expm oracle
    a = afrak(p3, n_x=11)
    gen = assemble_full_generator(a, dirac(1.0, 0.5), 16)
    T = expm(gen.matrix, 0.5).matrix
    res = [weighted_norm(S.matrix - T, gen.weights) for S in dyson_phillips(gen, 0.5, 2, terms=True)]
    np.testing.assert_allclose(res, FROZEN_DP, rtol=1e-8)


# The O(1) level is the upwind-versus-exact-shift gap; the series terminates after
# one term because t < r with a point delay at -r.
FROZEN_DP = [3.752220348661068, 3.751061625092669, 3.751061625092669]
