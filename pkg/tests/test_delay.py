import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netspde.delay import (
    DelayMeasure, SegmentBuffer, assemble_full_generator, delay_grid, delay_integral, dirac,
    miyadera_voigt_bound, push_segment, quadrature_weights, shift_history, uniform, zero_measure,
)
from netspde.errors import HorizonMismatch, NonPositiveT0, StepNotMultipleOfDelayGrid
from netspde.graph import build_graph, path_graph
from netspde.spatial import NodeMatrixB

from conftest import afrak


def seg_of(f, r, n_theta, n=1):
    th = delay_grid(r, n_theta)
    return SegmentBuffer(r, np.tile(f(th), (n, 1)))


def test_dirac_end_point():
    r = 1.7
    assert delay_integral(dirac(r), seg_of(lambda t: t, r, 10))[0] == pytest.approx(-r, abs=1e-15)


def test_uniform_average_of_constant():
    assert delay_integral(uniform(2.0, 1.0), seg_of(lambda t: 3.0 + 0 * t, 2.0, 16))[0] == pytest.approx(3.0)


def test_off_grid_atom_interpolation():
    mu = dirac(1.0, at=-0.5)
    # exact value 0.25; -0.5 sits on the N=100 grid, so also check an off-grid location
    assert abs(delay_integral(mu, seg_of(lambda t: t**2, 1.0, 100))[0] - 0.25) < 1e-4
    mu = dirac(1.0, at=-0.503)
    assert abs(delay_integral(mu, seg_of(lambda t: t**2, 1.0, 100))[0] - 0.503**2) < 1e-4


def test_horizon_mismatch():
    with pytest.raises(HorizonMismatch):
        delay_integral(dirac(1.0), seg_of(lambda t: t, 2.0, 4))


def test_measure_validation():
    with pytest.raises(ValueError):
        DelayMeasure(1.0, ((-1.5, 1.0),))
    with pytest.raises(ValueError):
        DelayMeasure(0.0)
    mu = DelayMeasure(2.0, ((-1.0, -0.5), (0.0, 0.25)), lambda th: np.sin(np.pi * th))
    assert mu.total_variation == pytest.approx(0.75 + 4 / np.pi, rel=1e-8)
    assert zero_measure(1.0).is_zero


def test_push_examples():
    seg = SegmentBuffer(2.0, np.array([[0.0, 1.0, 2.0]]))
    out = push_segment(seg, np.array([3.0]), 1.0)
    np.testing.assert_array_equal(out.eta, [[1.0, 2.0, 3.0]])
    const = SegmentBuffer(1.0, np.full((2, 5), 4.0))
    np.testing.assert_array_equal(push_segment(const, np.array([4.0, 4.0]), 0.5).eta, const.eta)
    with pytest.raises(StepNotMultipleOfDelayGrid):
        push_segment(const, np.array([4.0, 4.0]), 0.3)


def test_pushes_track_trajectory():
    r, N = 1.0, 8
    dth = r / N
    traj = lambda t: np.sin(3 * t) + t
    seg = SegmentBuffer(r, traj(delay_grid(r, N))[None])
    for k in range(1, 21):
        seg = push_segment(seg, np.array([traj(k * dth)]), dth)
    t = 20 * dth
    np.testing.assert_allclose(seg.eta[0], traj(t + delay_grid(r, N)), atol=1e-14)
    assert seg.eta[0, 0] == pytest.approx(traj(t - r))


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 10_000))
@settings(max_examples=50, deadline=None)
def test_repeated_shift_equals_single_shift(k, reps, seed):
    # pushing values of one linear ramp k slots at a time equals one long push
    rng = np.random.default_rng(seed)
    n_slots = 9
    eta = rng.standard_normal((2, n_slots))
    slope = rng.standard_normal(2)
    cur = eta.copy()
    for j in range(1, reps + 1):
        cur = shift_history(cur, eta[:, -1] + slope * j * k, k)
    one = shift_history(eta, eta[:, -1] + slope * reps * k, k * reps)
    np.testing.assert_allclose(cur, one, atol=1e-12)


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_linearity_and_bound(seed):
    rng = np.random.default_rng(seed)
    r = rng.uniform(0.2, 3)
    N = int(rng.integers(4, 40))
    mu = DelayMeasure(r, ((-r * rng.random(), rng.normal()), (-r, rng.normal())), lambda th: 0.3 * np.cos(th))
    e1, e2 = rng.standard_normal((2, 3, N + 1))
    a, b = rng.normal(size=2)
    lhs = delay_integral(mu, SegmentBuffer(r, a * e1 + b * e2))
    rhs = a * delay_integral(mu, SegmentBuffer(r, e1)) + b * delay_integral(mu, SegmentBuffer(r, e2))
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)
    q = quadrature_weights(mu, N)
    # discrete bound with the discrete total variation (trapezoid of |density| converges to |mu|)
    assert np.all(np.abs(delay_integral(mu, SegmentBuffer(r, e1))) <= np.sum(np.abs(q)) * np.abs(e1).max(axis=-1) + 1e-12)
    assert np.sum(np.abs(q)) <= mu.total_variation * (1 + 1e-2) + 1e-12


def test_generator_structure(p3):
    a = afrak(p3, n_x=7, b=-0.5)
    gen = assemble_full_generator(a, dirac(1.0, 0.7), 8)
    seg_cols = gen.segment_slice
    rows = np.flatnonzero(np.any(gen.perturbation[:, seg_cols] != 0, axis=1))
    slot0 = [gen.segment_index(al, 8) for al in range(3)]
    assert set(rows) == {a.node_index(al) for al in range(3)} | set(slot0)
    # only node rows (and their theta=0 mirrors) see segment columns apart from the shift block
    Aa_rows = gen.matrix[: a.dim, seg_cols]
    assert set(np.flatnonzero(np.any(Aa_rows != 0, axis=1))) == {a.node_index(al) for al in range(3)}
    gen0 = assemble_full_generator(a, zero_measure(1.0), 8)
    np.testing.assert_array_equal(gen0.matrix, gen0.unperturbed)


def test_zero_flux_scalar_dde():
    g = build_graph(2, [(1, 2)])
    gen = assemble_full_generator(afrak(g, n_x=5), dirac(1.0), 4, zero_flux=True)
    row = gen.matrix[gen.afrak.node_index(0)]
    nz = np.flatnonzero(row)
    # x'(t) = x(t - r): a single unit entry in the theta=-r slot
    assert list(nz) == [gen.segment_index(0, 0)] and row[nz[0]] == 1.0


def test_miyadera_voigt_examples():
    assert miyadera_voigt_bound(dirac(1.0), NodeMatrixB(np.zeros(2)), 0.25) == pytest.approx(0.5)
    assert miyadera_voigt_bound(dirac(1.0, 2.0), NodeMatrixB(np.zeros(2)), 1.0) == pytest.approx(2.0)
    assert miyadera_voigt_bound(dirac(3.3), NodeMatrixB(np.array([-1.0])), 0.81) == pytest.approx(0.9)
    with pytest.raises(NonPositiveT0):
        miyadera_voigt_bound(dirac(1.0), NodeMatrixB(np.zeros(1)), 0.0)
