"""Scenario engines: each task turns a parameter block into rows and metrics.

A task returns a :class:`TaskResult`. ``checks`` maps a metric name to its
default tolerance: a number ``b`` means ``metric <= b`` and a pair
``[lo, hi]`` means ``lo <= metric <= hi``. Scenario files may override them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import bridge, clock, core, evolution, geometry, linalg, phase
from .errors import InvalidInput


@dataclass
class TaskResult:
    rows: list[dict]
    metrics: dict
    checks: dict = field(default_factory=dict)
    headline: str = ""


def _complex(v) -> complex:
    """Scenario complex numbers are ``[re, im]`` pairs or plain reals."""
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise InvalidInput(f"complex numbers are [re, im] pairs, got {v!r}")
        return complex(float(v[0]), float(v[1]))
    return complex(float(v))


def _cvec(values) -> np.ndarray:
    return np.array([_complex(v) for v in values], dtype=np.complex128)


# relstate ---------------------------------------------------------------------

def _relstate_separable(p: dict, rng: np.random.Generator) -> TaskResult:
    rows, worst = [], 0.0
    for k in range(int(p.get("n_states", 50))):
        n = int(rng.integers(1, int(p.get("max_n", 6)) + 1))
        x = core.BasisFamily(linalg.random_basis(rng, n, n, float(p.get("cond_bound", 50.0))), 1, "x")
        t = core.BasisFamily(linalg.random_basis(rng, n, n, float(p.get("cond_bound", 50.0))), -1, "t")
        a = rng.normal(size=n) + 1j * rng.normal(size=n)
        b = rng.normal(size=n) + 1j * rng.normal(size=n)
        b /= np.linalg.norm(b)
        a /= np.linalg.norm(a)
        state = core.separable(a, b, x, t)
        # conditioning on the t-factor itself leaves |b_i|^2
        dist = core.conditional_project(state, core.SubsystemState(a, t), "renormalized")
        dev = float(np.max(np.abs(dist.probabilities - np.abs(b) ** 2)))
        worst = max(worst, dev)
        rows.append({"instance": k, "n": n, "deviation": dev})
    return TaskResult(rows, {"max_deviation": worst}, {"max_deviation": 1e-12}, "max_deviation")


def _relstate_partial_trace(p: dict, rng: np.random.Generator) -> TaskResult:
    rows, diag_dev, textbook_dev = [], 0.0, 0.0
    for k in range(int(p.get("n_states", 50))):
        n = int(rng.integers(1, int(p.get("max_n", 6)) + 1))
        state = core.random_state(rng, n, cond_bound=float(p.get("cond_bound", 50.0)))
        cond = state.reference_condition()
        m = core.partial_trace_metric(state)
        raw = core.conditional_project(state, cond, "raw").probabilities
        d1 = float(np.max(np.abs(np.real(np.diag(m)) - raw)))
        # orthonormal families reduce to the ordinary partial trace
        eye = core.BasisFamily(np.eye(n), 1, "x")
        ortho = core.EntangledState(state.coefficients, eye, core.BasisFamily(np.eye(n), -1, "t"))
        amb = ortho.ambient()
        d2 = float(np.max(np.abs(core.partial_trace_metric(ortho) - amb @ amb.conj().T)))
        diag_dev, textbook_dev = max(diag_dev, d1), max(textbook_dev, d2)
        rows.append({"instance": k, "n": n, "diagonal_deviation": d1, "textbook_deviation": d2})
    return TaskResult(rows, {"diagonal_deviation": diag_dev, "textbook_deviation": textbook_dev},
                      {"diagonal_deviation": 1e-10, "textbook_deviation": 1e-12}, "diagonal_deviation")


def _relstate_conditional(p: dict, rng: np.random.Generator) -> TaskResult:
    state = core.state_from_dict(p, normalize=True)
    cond = (core.SubsystemState(_cvec(p["condition"]), state.t_basis) if "condition" in p
            else state.reference_condition())
    dist = core.conditional_project(state, cond, p.get("mode", "renormalized"))
    rows = [{"index": int(i), "amplitude": a, "probability": float(q)}
            for i, a, q in zip(dist.indices, dist.amplitudes, dist.probabilities)]
    return TaskResult(rows, {"total_probability": float(np.sum(dist.probabilities))}, {}, "total_probability")


# geometry ---------------------------------------------------------------------

def _interior(a: np.ndarray, frac: int = 4) -> np.ndarray:
    m = (a.shape[0] - 1) // frac
    return a[m:-m, m:-m]


def _ricci_error(n: int, p: dict) -> float:
    chart = geometry.CoordinateChart.square(n, float(p.get("half_width", 1.0)))
    h = geometry.analytic_metric(p.get("metric", "fubini_study"), chart)
    r = geometry.ricci_field(h, p.get("route", "logdet"))[..., 0, 0]
    # R = 2h on the Fubini-Study line
    return float(np.max(np.abs(_interior(r - 2 * h.values[..., 0, 0]))))


def _geometry_ricci_convergence(p: dict, rng) -> TaskResult:
    n = int(p.get("n", 33))
    sizes = [n, 2 * n - 1]
    errs = [_ricci_error(m, p) for m in sizes]
    rows = [{"nodes": m, "max_error": e} for m, e in zip(sizes, errs)]
    return TaskResult(rows, {"error_coarse": errs[0], "error_fine": errs[1], "convergence_ratio": errs[0] / errs[1]},
                      {"convergence_ratio": [3.0, 5.0]}, "convergence_ratio")


def _geometry_ricci_norm(p: dict, rng) -> TaskResult:
    chart = geometry.CoordinateChart.square(int(p.get("n", 64)), float(p.get("half_width", 1.0)))
    h = geometry.analytic_metric(p.get("metric", "flat"), chart, **p.get("params", {}))
    r = geometry.ricci_field(h, p.get("route", "logdet"))
    norm = float(np.max(np.abs(r)))
    return TaskResult([{"nodes": int(p.get("n", 64)), "max_norm": norm}], {"max_norm": norm}, {"max_norm": 1e-10},
                      "max_norm")


def _geometry_kahler(p: dict, rng) -> TaskResult:
    rows, gaps = [], []
    for n in (int(p.get("n", 33)), 2 * int(p.get("n", 33)) - 1):
        chart = geometry.CoordinateChart.square(n, float(p.get("half_width", 1.0)))
        diag = geometry.kahler_check(geometry.analytic_metric(p.get("metric", "fubini_study"), chart),
                                     ((n - 1) // 2 + 1, (n - 1) // 2))
        gaps.append(diag.potential_gap)
        rows.append({"nodes": n, "potential_gap": diag.potential_gap, "closure_defect": diag.closure_defect})
    return TaskResult(rows, {"potential_gap": gaps[-1], "refinement_ratio": gaps[0] / gaps[1]},
                      {"refinement_ratio": [3.0, 5.0]}, "refinement_ratio")


def _geometry_field_dump(p: dict, rng) -> TaskResult:
    chart = geometry.CoordinateChart.square(int(p.get("n", 9)), float(p.get("half_width", 1.0)))
    h = geometry.analytic_metric(p.get("metric", "fubini_study"), chart, **p.get("params", {}))
    r = geometry.ricci_field(h, p.get("route", "logdet"))
    rows = geometry.field_records(chart, {"h": h.values, "ricci": r, "logdet": h.logdet()})
    return TaskResult(rows, {"max_ricci": float(np.max(np.abs(r)))}, {}, "max_ricci")


# evolve -----------------------------------------------------------------------

def _evolve_gc_convergence(p: dict, rng) -> TaskResult:
    sol = evolution.LogSolution(float(p.get("u0", 1.0)), float(p.get("v0", 0.5)))
    steps = tuple(float(s) for s in p.get("steps", [0.1, 0.05, 0.025]))
    errs, orders = evolution.convergence_order(sol, float(p.get("horizon", 1.0)), steps)
    rows = [{"step": s, "error": e, "order": (orders[k - 1] if k else float("nan"))}
            for k, (s, e) in enumerate(zip(steps, errs))]
    return TaskResult(rows, {"order_min": min(orders), "order_max": max(orders)},
                      {"order_min": [3.5, 4.5], "order_max": [3.5, 4.5]}, "order_min")


def _evolve_gc_trajectory(p: dict, rng) -> TaskResult:
    sol = evolution.LogSolution(float(p.get("u0", 1.0)), float(p.get("v0", 0.5)))
    n = int(p.get("n_steps", 400))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", evolution.ResidualWarning)
        traj = evolution.evolve_gc(sol.initial_state(float(p.get("step", 0.002))), sol.curvature, n)
    rows = traj.records()
    for r, s in zip(rows, traj.states):
        r["exact_h"] = sol.h(s.t)[0]
    err = max(abs(s.h[0, 0].real - sol.h(s.t)[0]) for s in traj.states)
    return TaskResult(rows, {"max_error": float(err), "max_drift": float(max(traj.drift))},
                      {"max_drift": 1e-10}, "max_error")


# bridge -----------------------------------------------------------------------

def _bridge_limit_scaling(p: dict, rng) -> TaskResult:
    omegas = [float(w) for w in p.get("omegas", [2, 4, 8, 16])]
    study = bridge.limit_scaling(omegas, n=int(p.get("n", 512)), length=float(p.get("length", 40.0)),
                                 sigma=float(p.get("sigma", 1.0)), k0=float(p.get("k0", 0.5)),
                                 tau=float(p.get("tau", 0.5)), n_out=int(p.get("n_out", 400)),
                                 ref_steps=int(p.get("ref_steps", 4000)), init=p.get("init", "slow"))
    rows = [dict(r.to_dict(), ratio_to_previous=(study.ratios[k - 1] if k else float("nan")))
            for k, r in enumerate(study.reports)]
    return TaskResult(rows, {"ratio_min": min(study.ratios), "ratio_max": max(study.ratios),
                             "slope_vs_omega": study.slope, "max_L2": study.reports[0].max_L2},
                      {"ratio_min": [0.375, 0.625], "ratio_max": [0.375, 0.625]}, "slope_vs_omega")


def _bridge_unitarity(p: dict, rng) -> TaskResult:
    grid = evolution.PeriodicGrid.line(int(p.get("n", 256)), float(p.get("length", 40.0)))
    e0 = bridge.gaussian_packet(grid, float(p.get("sigma", 1.0)), float(p.get("k0", 0.5)))
    kappa, gamma = float(p.get("kappa", 0.5)), float(p.get("gamma", 1e-5))
    run = bridge.ket_run(e0, grid, float(p.get("omega", 8.0)), float(p.get("horizon", 10.0)),
                         int(p.get("n_out", 200)), K=lambda t: 1j * kappa + gamma * t)
    split = run.split()
    norms = bridge._l2(split.e, grid)
    rows = [{"t": float(t), "norm": float(v)} for t, v in zip(run.times, norms)]
    drift = float(np.max(np.abs(norms - norms[0])))
    return TaskResult(rows, {"norm_drift": drift, "slowness": split.slowness()}, {"norm_drift": 1e-3}, "norm_drift")


# phase ------------------------------------------------------------------------

def _phase_integrable_loop(p: dict, rng) -> TaskResult:
    coeffs = _cvec(p.get("potential", [[0, 0], [1, 0], [0.5, 0.5], [0, 1]]))
    # K = 2 d(phi)/dt for the holomorphic polynomial phi(t) = sum c_k t^k
    dcoef = np.polynomial.polynomial.polyder(coeffs)
    loop = phase.Path.circle(_complex(p.get("center", 0)), float(p.get("radius", 0.8)), int(p.get("samples", 2000)))
    rec = phase.accumulate_phase(lambda t: 2 * np.polynomial.polynomial.polyval(t, dcoef), loop)
    return TaskResult(rec.records(), {"abs_theta": abs(rec.theta)}, {"abs_theta": 1e-8}, "abs_theta")


def _phase_spin_half(p: dict, rng) -> TaskResult:
    theta, n = float(p.get("cone_angle", 0.9)), int(p.get("samples", 10_000))
    phi = np.linspace(0, 2 * np.pi, n + 1)
    states = np.stack([np.sin(theta / 2) * np.ones_like(phi), -np.exp(1j * phi) * np.cos(theta / 2)], axis=1)
    states[-1] = states[0]
    loop = phase.Path.circle(0, 1, n)
    rec = phase.accumulate_phase(phase.StateSamples(states), loop)
    conn = phase.accumulate_phase(lambda z: 2 * np.cos(theta / 2) ** 2 / z, loop)
    solid = 2 * np.pi * (1 - np.cos(theta))
    err = abs(np.angle(np.exp(1j * (rec.im_part + solid / 2))))
    agree = abs(np.angle(np.exp(1j * (rec.im_part - conn.im_part))))
    rows = rec.records()[:: max(1, n // 100)]
    return TaskResult(rows, {"geometric_phase": rec.wrapped_phase, "expected": float(np.angle(np.exp(-0.5j * solid))),
                             "phase_error": float(err), "route_gap": float(agree)},
                      {"phase_error": 1e-4, "route_gap": 1e-6}, "phase_error")


def _phase_stokes(p: dict, rng) -> TaskResult:
    rows, gaps = [], []
    corner0, corner1 = _complex(p.get("corner0", [-0.5, -0.5])), _complex(p.get("corner1", [0.75, 0.5]))
    for n in p.get("nodes", [33, 65, 129]):
        chart = geometry.CoordinateChart.square(int(n), float(p.get("half_width", 1.0)))
        t = chart.coordinates()[0]
        grid = phase.GridK(chart, np.conj(t) * np.exp(0.3 * t) + 0.5 * np.abs(t) ** 2)
        rep = phase.stokes_check(grid, phase.Path.rectangle(corner0, corner1))
        gaps.append(rep.gap)
        rows.append({"nodes": int(n), "line": rep.line, "surface": rep.surface, "gap": rep.gap})
    ratios = [a / b for a, b in zip(gaps, gaps[1:])]
    return TaskResult(rows, {"ratio_min": min(ratios), "ratio_max": max(ratios), "gap_fine": gaps[-1]},
                      {"ratio_min": [3.0, 5.0], "ratio_max": [3.0, 5.0]}, "ratio_min")


def _phase_anandan_aharonov(p: dict, rng) -> TaskResult:
    dt, dim = float(p.get("dt", 1e-4)), int(p.get("levels", 5))
    rows, worst = [], 0.0
    for k in range(int(p.get("n_generators", 100))):
        h = linalg.random_hermitian(rng, dim)
        psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        traj = phase.unitary_trajectory(h, psi / np.linalg.norm(psi), dt, int(p.get("steps", 3)))
        sv = phase.anandan_aharonov(traj, h, dt)
        worst = max(worst, sv.max_gap)
        rows.append({"generator": k, "fs_speed2": float(sv.fs_speed2[0]),
                     "energy_variance": float(sv.energy_variance[0]), "gap": sv.max_gap})
    return TaskResult(rows, {"max_gap": worst}, {"max_gap": 1e-6}, "max_gap")


# clock ------------------------------------------------------------------------

def _clock_model(p: dict) -> clock.ClockSystemModel:
    x = np.linspace(0.0, float(p.get("length_x", 20.0)), int(p.get("d_x", 128)) + 2)[1:-1]
    pot = p.get("potential", {"kind": "none"})
    kind = pot.get("kind", "none")
    if kind == "none":
        v = None
    elif kind == "harmonic":
        v = 0.5 * float(pot.get("k", 1.0)) * (x - float(pot.get("center", x.mean()))) ** 2
    elif kind == "constant":
        v = np.full(x.size, float(pot.get("value", 0.0)))
    elif kind == "samples":
        v = np.asarray(pot["values"], dtype=float)
    else:
        raise InvalidInput(f"unknown potential kind {kind!r}")
    t = np.arange(int(p.get("d_t", 128))) * (float(p.get("length_t", 6.0)) / int(p.get("d_t", 128)))
    return clock.ClockSystemModel(x, t, float(p.get("m_x", 1.0)), p.get("m_t"), v, p.get("clock_mode", "ideal"))


def _clock_psi0(model: clock.ClockSystemModel, p: dict) -> np.ndarray:
    pk = p.get("packet", {})
    return clock.gaussian_state(model.x_grid, float(pk.get("center", model.x_grid.mean() - 2.0)),
                                float(pk.get("sigma", 1.0)), float(pk.get("k0", 1.0)))


def _clock_ideal(p: dict, rng) -> TaskResult:
    from scipy.sparse.linalg import expm_multiply

    model = _clock_model(p)
    psi0 = _clock_psi0(model, p)
    sol = clock.solve_constraint(model, psi0, float(p.get("wd_tol", clock.WD_TOL)))
    hx, _ = clock.build_hamiltonians(model)
    ref = expm_multiply(-1j * hx, psi0, start=0, stop=model.t_grid[-1], num=model.t_grid.size, endpoint=True)
    rows = []
    for T, r in zip(model.t_grid, ref):
        cond = clock.condition_on_clock(sol, T)
        rows.append({"T": float(T), "infidelity": 1 - clock.fidelity(cond, r),
                     "width": clock.packet_width(model.x_grid, cond)})
    return TaskResult(rows, {"max_infidelity": max(r["infidelity"] for r in rows),
                             "constraint_energy": abs(sol.energy), "constraint_residual": sol.residual},
                      {"max_infidelity": 1e-6, "constraint_energy": 1e-8}, "max_infidelity")


def _clock_finite_width(p: dict, rng) -> TaskResult:
    model = _clock_model(p)
    psi0 = _clock_psi0(model, p)
    sol = clock.solve_constraint(model, psi0)
    hx, _ = clock.build_hamiltonians(model)
    lo, hi = model.t_grid.size // 4, 3 * model.t_grid.size // 4
    rows = []
    for w in p.get("widths", [0.05, 0.1, 0.2]):
        dev = np.mean([1 - clock.fidelity(clock.condition_on_clock(sol, T, float(w)), clock.propagate(hx, psi0, T))
                       for T in model.t_grid[lo:hi]])
        rows.append({"width": float(w), "mean_deviation": float(dev)})
    devs = [r["mean_deviation"] for r in rows]
    steps = [b - a for a, b in zip(devs, devs[1:])]
    return TaskResult(rows, {"non_increasing_steps": sum(d <= 0 for d in steps), "min_increase": min(steps),
                             "largest_deviation": devs[-1]},
                      {"non_increasing_steps": 0}, "min_increase")


def _clock_semiclassical(p: dict, rng) -> TaskResult:
    from scipy.sparse.linalg import expm_multiply

    model = _clock_model(p)
    psi0 = _clock_psi0(model, p)
    hx, _ = clock.build_hamiltonians(model)
    tau = float(p.get("tau", 1.0))
    rows = []
    for rate in p.get("rates", [1.0, 2.0, 0.5]):
        red = clock.semiclassical_reduction(model, float(rate))
        f = clock.fidelity(expm_multiply(-1j * tau * hx, psi0), expm_multiply(-1j * float(rate) * tau * red.H, psi0))
        rows.append({"rate": float(rate), "M_x": red.M_x, "lapse": red.lapse, "infidelity": 1 - f})
    return TaskResult(rows, {"max_infidelity": max(r["infidelity"] for r in rows)}, {"max_infidelity": 1e-8},
                      "max_infidelity")


def _clock_generic(p: dict, rng) -> TaskResult:
    model = _clock_model(p)
    if "pair_levels" in p:
        # constant object shift that puts E_x[i] + E_t[j] exactly at zero
        i, j = (int(k) for k in p["pair_levels"])
        hx, ht = clock.build_hamiltonians(model)
        shift = np.linalg.eigvalsh(hx)[i] + np.linalg.eigvalsh(ht)[j]
        v = (model.V if model.V is not None else np.zeros(model.x_grid.size)) - shift
        model = clock.ClockSystemModel(model.x_grid, model.t_grid, model.m_x, model.m_t, v, model.clock_mode)
    sol = clock.solve_constraint(model, wd_tol=float(p.get("wd_tol", clock.WD_TOL)), zero_window=p.get("zero_window"))
    rows = [{"T": float(T), "norm_weight": float(np.linalg.norm(sol.psi @ sol.clock_states[k]) ** 2)}
            for k, T in enumerate(model.t_grid)]
    return TaskResult(rows, {"constraint_residual": sol.residual, "constraint_energy": abs(sol.energy)},
                      {"constraint_residual": 1e-8}, "constraint_residual")


TASKS: dict[str, dict[str, Callable[[dict, np.random.Generator], TaskResult]]] = {
    "relstate": {"separable": _relstate_separable, "partial_trace": _relstate_partial_trace,
                 "conditional": _relstate_conditional},
    "geometry": {"ricci_convergence": _geometry_ricci_convergence, "ricci_norm": _geometry_ricci_norm,
                 "kahler": _geometry_kahler, "field_dump": _geometry_field_dump},
    "evolve": {"gc_convergence": _evolve_gc_convergence, "gc_trajectory": _evolve_gc_trajectory},
    "bridge": {"limit_scaling": _bridge_limit_scaling, "unitarity": _bridge_unitarity},
    "phase": {"integrable_loop": _phase_integrable_loop, "spin_half": _phase_spin_half, "stokes": _phase_stokes,
              "anandan_aharonov": _phase_anandan_aharonov},
    "clock": {"ideal": _clock_ideal, "finite_width": _clock_finite_width, "semiclassical": _clock_semiclassical,
              "generic": _clock_generic},
}


def run_task(engine: str, block: dict, seed: int) -> TaskResult:
    """Dispatch ``block["task"]`` of ``engine`` with a seeded generator."""
    tasks = TASKS[engine]
    task = block.get("task")
    if task not in tasks:
        raise InvalidInput(f"engine {engine!r} has no task {task!r}")
    params = {k: v for k, v in block.items() if k != "task"}
    return tasks[task](params, np.random.default_rng(seed))
