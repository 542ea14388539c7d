import numpy as np
import pytest

from relstate import bridge as br
from relstate.errors import InvalidGrid, InvalidInput
from relstate.evolution import PeriodicGrid


@pytest.fixture(scope="module")
def line():
    return PeriodicGrid.line(256, 40.0)


def test_covariant_derivative_without_k_is_plain_derivative():
    t = np.linspace(0, 1, 41)
    e = np.sin(3 * t)[:, None] * np.ones((1, 4))
    got = br.covariant_derivative(e, 0.0, t[1] - t[0])
    np.testing.assert_allclose(got, np.gradient(e, t[1] - t[0], axis=0, edge_order=2))


def test_covariant_derivative_isolates_k_term():
    e = np.full((9, 3), 2.0 - 1.0j)
    got = br.covariant_derivative(e, 0.7 + 0.2j, 0.1)
    np.testing.assert_allclose(got, 0.5 * (0.7 + 0.2j) * e, atol=1e-14)


def test_parallel_transport_has_zero_covariant_derivative():
    gamma = 0.8
    for n in (101, 201):
        t = np.linspace(0, 2, n)
        e = np.exp(-gamma * t)[:, None] * np.array([[1.0, 0.5j]])
        got = br.covariant_derivative(e, 2 * gamma, t[1] - t[0], node=n // 2)
        assert np.max(np.abs(got)) < 5e-4 * (100 / (n - 1)) ** 2


def test_covariant_derivative_needs_margin():
    with pytest.raises(InvalidGrid):
        br.covariant_derivative(np.ones((3, 2)), 0.0, 0.1)


def _plane_wave_residual(n, nt, omega=4.0):
    grid = PeriodicGrid.line(n, 2 * np.pi)
    k = 3.0
    times = np.linspace(0, 0.5, nt)
    x = grid.points()
    e = np.exp(1j * (k * x[None, :] - (k**2 / (2 * omega)) * times[:, None]))
    return br.schrodinger_residual(br.SlowFastSplit(omega, e, times, grid))[1]


def test_plane_wave_residual_is_second_order():
    coarse, fine = _plane_wave_residual(64, 21), _plane_wave_residual(128, 41)
    assert coarse < 5e-2
    assert 3.0 <= coarse / fine <= 5.0


def test_zero_field_has_zero_residual(line):
    split = br.SlowFastSplit(3.0, np.zeros((7,) + line.shape), np.linspace(0, 1, 7), line)
    field, rms = br.schrodinger_residual(split)
    assert rms == 0.0 and np.all(field == 0)
    assert split.slowness() == 0.0


def test_neglected_terms_shrink_with_omega(line):
    e0 = br.gaussian_packet(line)
    run = br.ket_run(e0, line, 8.0, 4.0, 200)
    e = run.split().e
    low = br.neglected_terms(br.SlowFastSplit(8.0, e, run.times, line))
    high = br.neglected_terms(br.SlowFastSplit(80.0, e, run.times, line))
    assert low / high == pytest.approx(10.0, rel=1e-2)


def test_reconstruct_round_trip(line):
    times = np.linspace(0, 1, 11)
    X = np.exp(-2j * times)[:, None] * br.gaussian_packet(line)[None, :]
    split = br.SlowFastSplit.from_fast(X, times, 2.0, line)
    np.testing.assert_allclose(split.reconstruct(), X, atol=1e-14)
    np.testing.assert_allclose(split.e, np.broadcast_to(br.gaussian_packet(line), X.shape), atol=1e-14)


def test_split_validation(line):
    with pytest.raises(InvalidInput):
        br.SlowFastSplit(-1.0, np.zeros((5,) + line.shape), np.arange(5.0), line)
    with pytest.raises(InvalidInput):
        br.SlowFastSplit(1.0, np.zeros((4,) + line.shape), np.arange(5.0), line)
    with pytest.raises(InvalidInput):
        br.SlowFastSplit(1.0, np.zeros((5,) + line.shape), np.array([0, 1, 2, 4, 5.0]), line)


def test_reference_conserves_norm(line):
    e0 = br.gaussian_packet(line, k0=1.0)
    ref = br.reference_solve(e0, line, 2.0, 0.05, 200)
    assert ref.norm_drift <= 1e-10
    norms = br._l2(ref.psi, line)
    np.testing.assert_allclose(norms, 1.0, atol=1e-10)


def test_reference_matches_exact_modes_of_the_discrete_laplacian(line):
    e0 = br.gaussian_packet(line)
    dt, steps, om = 0.01, 100, 3.0
    ref = br.reference_solve(e0, line, om, dt, steps)
    # implicit midpoint acts on each Fourier mode as a Cayley factor
    lam = line.eigenvalues(0)
    energy = -lam / (2 * om)
    factor = ((1 - 0.5j * dt * energy) / (1 + 0.5j * dt * energy)) ** steps
    expect = np.fft.ifft(np.fft.fft(e0) * factor)
    np.testing.assert_allclose(ref.psi[-1], expect, atol=1e-10)


def test_reference_grid_mismatch(line):
    with pytest.raises(InvalidInput):
        br.reference_solve(np.ones(10), line, 1.0, 0.1, 2)


def test_mass_emergence_scaling():
    grid = PeriodicGrid.line(128, 20.0)
    e0 = br.gaussian_packet(grid)
    c = 3.0
    base = br.reference_solve(e0, grid, 2.0, 0.02, 300, stride=10)
    scaled = br.reference_solve(e0, grid, c * 2.0, c * 0.02, 300, stride=10)
    np.testing.assert_allclose(scaled.times, c * base.times)
    assert np.max(np.abs(scaled.psi - base.psi)) <= 1e-8


def test_zero_initial_data_gives_zero_distance(line):
    zero = np.zeros(line.shape, complex)
    run = br.ket_run(zero, line, 4.0, 2.0, 20)
    ref = br.reference_solve(zero, line, 4.0, 0.01, 200, stride=10)
    rep = br.limit_comparison(run, ref)
    assert rep.max_L2 == 0.0 and np.all(rep.distances == 0)


def test_chart_mismatch_raises(line):
    e0 = br.gaussian_packet(line)
    run = br.ket_run(e0, line, 4.0, 2.0, 20)
    other = PeriodicGrid.line(128, 40.0)
    ref = br.reference_solve(br.gaussian_packet(other), other, 4.0, 0.01, 200, stride=10)
    with pytest.raises(InvalidInput):
        br.limit_comparison(run, ref)
    ref = br.reference_solve(e0, line, 5.0, 0.01, 200, stride=10)
    with pytest.raises(InvalidInput):
        br.limit_comparison(run, ref)


def test_slowness_breach_is_flagged(line):
    e0 = br.gaussian_packet(line, k0=2.0)
    run = br.ket_run(e0, line, 0.5, 2.0, 100, init="carrier")
    ref = br.reference_solve(e0, line, 0.5, 0.002, 1000, stride=10)
    rep = br.limit_comparison(run, ref)
    assert not rep.slow and rep.slowness > br.SLOWNESS_RATIO


def test_large_omega_is_slow_and_close(line):
    e0 = br.gaussian_packet(line)
    run = br.ket_run(e0, line, 16.0, 8.0, 200)
    ref = br.reference_solve(e0, line, 16.0, 8.0 / 2000, 2000, stride=10)
    rep = br.limit_comparison(run, ref)
    assert rep.slow
    assert rep.max_L2 < 1e-3
    assert set(rep.to_dict()) == {"omega", "horizon", "max_L2", "slope_vs_omega", "slowness", "slow"}


def test_residual_decreases_over_three_octaves(line):
    e0 = br.gaussian_packet(line)
    res = []
    for om in (2.0, 4.0, 8.0, 16.0):
        res.append(br.schrodinger_residual(br.ket_run(e0, line, om, 0.5 * om, 400).split())[1])
    assert all(b < a for a, b in zip(res, res[1:]))


def test_gap_decreases_with_omega():
    study = br.limit_scaling([4.0, 8.0], n=256, n_out=100, ref_steps=2000)
    assert all(r.slow for r in study.reports)
    assert study.ratios[0] < 1.0
    assert study.reports[0].slope_vs_omega == study.slope


def _norm_drift(line, gamma):
    e0 = br.gaussian_packet(line)
    K = lambda t: 0.5j + gamma * t  # noqa: E731
    split = br.ket_run(e0, line, 8.0, 10.0, 200, K=K).split()
    norms = br._l2(split.e, line)
    return float(np.max(np.abs(norms - norms[0])))


def test_unitarity_with_slow_k(line):
    assert _norm_drift(line, 1e-5) <= 1e-3


def test_nonunitarity_with_fast_k(line):
    assert _norm_drift(line, 1e-2) > 1e-2


def test_modal_evolution_solves_the_ket_equation(line):
    # the free run must satisfy X'' = lap X - omega^2 X at interior samples
    e0 = br.gaussian_packet(line)
    run = br.ket_run(e0, line, 4.0, 1.0, 400)
    dt = run.times[1] - run.times[0]
    acc = (run.X[2:] - 2 * run.X[1:-1] + run.X[:-2]) / dt**2
    rhs = np.stack([line.laplacian(f) for f in run.X[1:-1]]) - 16.0 * run.X[1:-1]
    assert np.max(np.abs(acc - rhs)) < 1e-2 * np.max(np.abs(rhs))


def test_ket_run_with_zero_k_matches_free_run(line):
    e0 = br.gaussian_packet(line)
    free = br.ket_run(e0, line, 4.0, 2.0, 40)
    rk = br.ket_run(e0, line, 4.0, 2.0, 40, K=0.0)
    assert np.max(np.abs(free.X - rk.X)) < 1e-8


def test_ket_run_validation(line):
    with pytest.raises(InvalidInput):
        br.ket_run(np.ones(5), line, 1.0, 1.0, 10)
    with pytest.raises(InvalidInput):
        br.ket_run(br.gaussian_packet(line), line, 1.0, 1.0, 10, init="bogus")
