import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from relstate import geometry as geo
from relstate import linalg
from relstate import phase as ph
from relstate.errors import InvalidInput, InvalidPath


def _spin_states(theta, n):
    """Spin-1/2 ground state of +n.sigma (anti-aligned) around a cone."""
    phi = np.linspace(0, 2 * np.pi, n + 1)
    states = np.stack([np.sin(theta / 2) * np.ones_like(phi), -np.exp(1j * phi) * np.cos(theta / 2)], axis=1)
    states[-1] = states[0]
    return ph.Path.circle(0, 1, n), states


def _pancharatnam(states):
    """Independent oracle: argument of the closed overlap product."""
    prod = 1.0 + 0j
    for a, b in zip(states[:-1], states[1:]):
        prod *= np.vdot(a, b)
    return float(np.angle(prod))


def _wrap(x):
    return float(np.angle(np.exp(1j * x)))


def test_zero_source_gives_zero():
    rec = ph.accumulate_phase(None, ph.Path.circle(0, 1, 50))
    assert rec.theta == 0 and rec.stretch == 1.0
    rec = ph.accumulate_phase(lambda t: 0 * t, ph.Path.segment(0, 1 + 1j, 5))
    assert rec.theta == 0


def test_record_parts_and_rows():
    rec = ph.accumulate_phase(lambda t: (0.4 + 2j) * np.ones_like(t), ph.Path.segment(0, 1, 11))
    assert rec.theta == pytest.approx(0.2 + 1j)
    assert rec.re_part == pytest.approx(0.2) and rec.im_part == pytest.approx(1.0)
    assert rec.stretch > 0
    rows = rec.records()
    assert len(rows) == 10 and rows[-1]["theta_im"] == pytest.approx(1.0)
    assert set(rows[0]) == {"segment", "t_re", "t_im", "dtheta_re", "dtheta_im", "theta_re", "theta_im"}


def test_holomorphic_gradient_loop_vanishes():
    # K = 2 d(phi)/dt for holomorphic phi integrates to the endpoint difference
    k = lambda t: 2 * (np.cos(t) + 3 * t**2)  # noqa: E731
    rec = ph.accumulate_phase(k, ph.Path.circle(0.2 + 0.1j, 0.8, 2000))
    assert abs(rec.theta) <= 1e-8


def test_linear_grid_field_loop_vanishes():
    chart = geo.CoordinateChart.square(21, 1.0)
    t = chart.coordinates()[0]
    grid = ph.GridK(chart, (0.3 - 0.2j) + (1.5 + 0.5j) * t)
    for loop in (ph.Path.circle(0.1, 0.6, 300), ph.Path.rectangle(-0.5 - 0.4j, 0.7 + 0.3j, 7)):
        assert abs(ph.accumulate_phase(grid, loop).theta) <= 1e-12


def test_grid_interpolation_matches_nodes():
    chart = geo.CoordinateChart.square(11, 1.0)
    t = chart.coordinates()[0]
    grid = ph.GridK(chart, np.exp(t))
    pts = t[3:6, 4]
    np.testing.assert_allclose(grid(pts), np.exp(pts), atol=1e-12)


def test_path_leaving_chart_raises():
    chart = geo.CoordinateChart.square(11, 1.0)
    grid = ph.GridK(chart, np.zeros(chart.shape))
    with pytest.raises(InvalidPath):
        ph.accumulate_phase(grid, ph.Path.circle(0, 1.2, 40))


def test_path_validation():
    with pytest.raises(InvalidPath):
        ph.Path([0.0])
    with pytest.raises(InvalidPath):
        ph.Path([0, 1, 2], closed=True)
    with pytest.raises(InvalidPath):
        ph.Path.segment(0, 1, 3).concat(ph.Path.segment(2, 3, 3))
    with pytest.raises(InvalidInput):
        ph.accumulate_phase(ph.StateSamples(np.eye(3)), ph.Path.segment(0, 1, 4))
    with pytest.raises(InvalidInput):
        ph.accumulate_phase("not a source", ph.Path.segment(0, 1, 4))


def test_multi_axis_callable():
    path = ph.Path(np.stack([np.linspace(0, 1, 5), 1j * np.linspace(0, 2, 5)], axis=1))
    rec = ph.accumulate_phase(lambda z: np.tile([2.0, 1.0], (z.shape[0], 1)), path)
    assert rec.theta == pytest.approx(1.0 + 1.0j)


def test_spin_half_geometric_phase():
    theta = 0.9
    loop, states = _spin_states(theta, 10_000)
    rec = ph.accumulate_phase(ph.StateSamples(states), loop)
    solid = 2 * np.pi * (1 - np.cos(theta))
    assert abs(_wrap(rec.im_part + solid / 2)) <= 1e-4
    assert abs(_wrap(rec.im_part - _pancharatnam(states))) <= 1e-6


def test_spin_half_connection_route_agrees():
    theta = 0.9
    loop, states = _spin_states(theta, 10_000)
    overlap = ph.accumulate_phase(ph.StateSamples(states), loop)
    # smooth gauge on z = exp(i phi): <psi|d psi> = cos^2(theta/2) dz / z
    conn = ph.accumulate_phase(lambda z: 2 * np.cos(theta / 2) ** 2 / z, loop)
    assert abs(_wrap(overlap.im_part - conn.im_part)) <= 1e-6


def test_overlap_phase_is_gauge_invariant_on_loops(rng):
    loop, states = _spin_states(0.6, 2000)
    gauge = np.exp(1j * rng.uniform(0, 2 * np.pi, size=states.shape[0]))
    gauge[-1] = gauge[0]
    a = ph.accumulate_phase(ph.StateSamples(states), loop)
    b = ph.accumulate_phase(ph.StateSamples(states * gauge[:, None]), loop)
    assert abs(_wrap(a.im_part - b.im_part)) <= 1e-10


_coef = st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False)


@settings(max_examples=40, deadline=None)
@given(_coef, _coef, _coef, st.integers(3, 60))
def test_reversal_antisymmetry(a, b, c, n):
    k = lambda t: a + b * t + c * np.conj(t) ** 2  # noqa: E731
    path = ph.Path(np.linspace(0, 1, n) * (1 + 0.5j) + 0.3j * np.sin(np.linspace(0, 3, n)))
    fwd = ph.accumulate_phase(k, path)
    back = ph.accumulate_phase(k, path.reversed())
    np.testing.assert_allclose(back.increments[::-1], -fwd.increments, rtol=0, atol=0)
    assert abs(back.theta + fwd.theta) <= 1e-13 * max(1.0, np.sum(np.abs(fwd.increments)))


@settings(max_examples=40, deadline=None)
@given(_coef, _coef, st.integers(2, 30), st.integers(2, 30))
def test_concatenation_additivity(a, b, n1, n2):
    k = lambda t: a * np.exp(t) + b * np.abs(t)  # noqa: E731
    p1 = ph.Path.segment(0, 0.5 + 0.5j, n1)
    p2 = ph.Path.segment(0.5 + 0.5j, 1 - 0.2j, n2)
    whole = ph.accumulate_phase(k, p1.concat(p2))
    parts = ph.accumulate_phase(k, p1).theta + ph.accumulate_phase(k, p2).theta
    np.testing.assert_allclose(whole.increments, np.concatenate([ph.accumulate_phase(k, p1).increments,
                                                                 ph.accumulate_phase(k, p2).increments]),
                               rtol=0, atol=0)
    assert abs(whole.theta - parts) <= 1e-13 * max(1.0, np.sum(np.abs(whole.increments)))


def test_gauge_shift_moves_open_path_by_endpoints_only():
    base = lambda t: np.conj(t) * np.exp(-np.abs(t) ** 2)  # noqa: E731
    pot = lambda t: np.sin(t) + t**3  # noqa: E731
    dpot = lambda t: np.cos(t) + 3 * t**2  # noqa: E731
    shifted = lambda t: base(t) + 2 * dpot(t)  # noqa: E731
    path = ph.Path(np.linspace(-0.3, 0.7, 20001) + 0.4j * np.linspace(0, 1, 20001) ** 2)
    diff = ph.accumulate_phase(shifted, path).theta - ph.accumulate_phase(base, path).theta
    ends = path.samples[:, 0]
    assert abs(diff - (pot(ends[-1]) - pot(ends[0]))) <= 1e-8
    loop = ph.Path.circle(0.1j, 0.5, 4000)
    assert abs(ph.accumulate_phase(shifted, loop).theta - ph.accumulate_phase(base, loop).theta) <= 1e-8


def test_norm_stretch_matches_transported_state():
    k = lambda t: 0.6 + 0.8j + 0.3 * t**2 - 0.2j * np.conj(t)  # noqa: E731
    start, stop = 0.1 + 0.0j, 1.2 + 0.7j
    path = ph.Path.segment(start, stop, 20001)
    rec = ph.accumulate_phase(k, path)

    def rhs(s, y):
        t = start + s * (stop - start)
        x = y[:2] + 1j * y[2:]
        dx = 0.5 * k(t) * (stop - start) * x
        return np.concatenate([dx.real, dx.imag])

    x0 = np.array([0.6, -0.3 + 0.2j])
    sol = solve_ivp(rhs, (0, 1), np.concatenate([x0.real, x0.imag]), rtol=1e-12, atol=1e-14)
    x1 = sol.y[:2, -1] + 1j * sol.y[2:, -1]
    assert abs(np.linalg.norm(x1) / np.linalg.norm(x0) - rec.stretch) <= 1e-8


def _stokes_fixture(n):
    chart = geo.CoordinateChart.square(n, 1.0)
    t = chart.coordinates()[0]
    k = np.conj(t) * np.exp(0.3 * t) + 0.5 * np.abs(t) ** 2
    return chart, ph.GridK(chart, k)


def test_stokes_gap_refines_second_order():
    loop = ph.Path.rectangle(-0.5 - 0.5j, 0.75 + 0.5j)
    gaps = [ph.stokes_check(_stokes_fixture(n)[1], loop).gap for n in (33, 65, 129)]
    ratios = [gaps[0] / gaps[1], gaps[1] / gaps[2]]
    assert all(3.0 <= r <= 5.0 for r in ratios)


def test_stokes_with_exact_curvature():
    chart, grid = _stokes_fixture(129)
    t = chart.coordinates()[0]
    f = np.exp(0.3 * t) + 0.5 * t  # dK/dt* of the fixture
    rep = ph.stokes_check(grid, ph.Path.rectangle(-0.5 - 0.5j, 0.75 + 0.5j), curvature=f)
    assert rep.gap < 1e-4
    # Berry flux equals Re of the surface term
    assert rep.berry_flux == pytest.approx(rep.surface.real, abs=1e-12)


def test_stokes_counterexample_exceeds_integrable_gap():
    chart, smooth = _stokes_fixture(65)
    loop = ph.Path.rectangle(-0.5 - 0.5j, 0.75 + 0.5j)
    good = ph.stokes_check(smooth, loop).gap
    t = chart.coordinates()[0]
    vortex = ph.GridK(chart, 0.5 / (t - (0.01 + 0.02j)))
    # the pointwise curvature of a vortex vanishes away from its core
    bad = ph.stokes_check(vortex, loop, curvature=np.zeros(chart.shape)).gap
    assert bad == pytest.approx(np.pi / 2, rel=1e-2)
    assert bad > 10 * good


def test_stokes_zero_field():
    chart = geo.CoordinateChart.square(17, 1.0)
    rep = ph.stokes_check(ph.GridK(chart, np.zeros(chart.shape)), ph.Path.rectangle(-0.5, 0.5 + 0.5j))
    assert rep.line == 0 and rep.surface == 0 and rep.gap == 0


def test_stokes_orientation():
    chart, grid = _stokes_fixture(33)
    ccw = ph.Path.rectangle(-0.5 - 0.5j, 0.75 + 0.5j)
    cw = ccw.reversed()
    a, b = ph.stokes_check(grid, ccw), ph.stokes_check(grid, cw)
    assert a.line == pytest.approx(-b.line) and a.gap == pytest.approx(b.gap)
    assert a.surface == -b.surface


def test_stokes_rejects_non_rectangles():
    chart, grid = _stokes_fixture(17)
    with pytest.raises(InvalidPath):
        ph.stokes_check(grid, ph.Path.circle(0, 0.5, 20))
    with pytest.raises(InvalidPath):
        ph.stokes_check(grid, ph.Path.rectangle(-0.51 - 0.5j, 0.5 + 0.5j))
    with pytest.raises(InvalidPath):
        ph.stokes_check(grid, ph.Path.segment(-0.5, 0.5, 3))


def test_anandan_aharonov_eigenstate_is_stationary():
    H = np.diag([1.0, 2.0, 4.0])
    traj = ph.unitary_trajectory(H, [0, 1, 0], 1e-3, 5)
    sv = ph.anandan_aharonov(traj, H, 1e-3)
    assert np.max(np.abs(sv.fs_speed2)) < 1e-9 and np.max(np.abs(sv.energy_variance)) < 1e-12


def test_anandan_aharonov_two_level():
    e1, e2, dt = 0.3, 1.7, 1e-3
    H = np.diag([e1, e2])
    traj = ph.unitary_trajectory(H, np.array([1, 1]) / np.sqrt(2), dt, 4)
    sv = ph.anandan_aharonov(traj, H, dt)
    np.testing.assert_allclose(sv.energy_variance, (e1 - e2) ** 2 / 4, atol=1e-14)
    # closed form: 2 (1 - cos(dE dt / 2)) / dt^2
    np.testing.assert_allclose(sv.fs_speed2, 2 * (1 - np.cos((e2 - e1) * dt / 2)) / dt**2, rtol=1e-6)
    assert sv.max_gap < (e1 - e2) ** 4 * dt**2


def test_anandan_aharonov_random_generators(rng):
    dt = 1e-4
    for _ in range(10):
        H = linalg.random_hermitian(rng, 5)
        psi = rng.normal(size=5) + 1j * rng.normal(size=5)
        psi /= np.linalg.norm(psi)
        step = expm(-1j * H * dt)
        traj = [psi]
        for _ in range(3):
            traj.append(step @ traj[-1])
        sv = ph.anandan_aharonov(np.array(traj), H, dt)
        assert sv.max_gap <= 1e-6


def test_unitary_trajectory_matches_expm(rng):
    H = linalg.random_hermitian(rng, 4)
    psi = rng.normal(size=4) + 0j
    traj = ph.unitary_trajectory(H, psi, 0.1, 3)
    np.testing.assert_allclose(traj[3], expm(-0.3j * H) @ psi, atol=1e-12)


def test_anandan_aharonov_rejects_non_hermitian():
    with pytest.raises(InvalidInput):
        ph.anandan_aharonov(np.eye(2), [[0, 1], [0, 0]], 0.1)
    with pytest.raises(InvalidInput):
        ph.unitary_trajectory([[0, 1], [0, 0]], [1, 0], 0.1, 2)
