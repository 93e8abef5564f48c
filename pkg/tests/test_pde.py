import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import solve_banded

from mems_quench.errors import NoQuench, WindowTooNarrow
from mems_quench.pde import (
    Boundary,
    Snapshot,
    assemble,
    build_mesh,
    collapse_distances,
    estimate_T,
    evolve,
    fit_power_law,
    initial_condition,
    next_dt,
    rescale_profile,
    run,
    slope_window,
    step,
    uniform_condition,
)
from mems_quench.similarity import C_STAR


@pytest.fixture(scope="module")
def report2():
    return run(2, 400)


# ---------------------------------------------------------------- mesh and operators


def test_mesh_nodes():
    mesh = build_mesh(8, 2)
    assert mesh.nodes[:3] == pytest.approx([0.0, 1 / 64, 4 / 64])
    assert mesh.nodes[-1] == 1.0 and np.all(np.diff(mesh.nodes) > 0)
    with pytest.raises(ValueError):
        build_mesh(4, 2)
    with pytest.raises(ValueError):
        build_mesh(16, 1)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_mass_and_stiffness(n):
    mesh = build_mesh(32, n)
    ops = assemble(mesh)
    M, K = ops.dense(ops.mass), ops.dense(ops.stiffness)
    assert M.sum() == pytest.approx(1.0 / n, rel=1e-13)
    assert ops.lumped == pytest.approx(M.sum(axis=1), rel=1e-13)
    assert np.max(np.abs(K @ np.ones(mesh.N + 1))) < 1e-13
    assert np.allclose(M, M.T) and np.allclose(K, K.T)
    # stiffness against the exact weighted Dirichlet form of r and r^2: int 2 r^(n+1) dr
    r = mesh.nodes
    assert r @ K @ r**2 == pytest.approx(2.0 / (n + 1), rel=1e-2)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_discrete_laplacian_of_r_squared(n):
    mesh = build_mesh(64, n)
    ops = assemble(mesh)
    x = solve_banded((1, 1), ops.mass, ops.apply(ops.stiffness, mesh.nodes**2))
    inside = (mesh.nodes >= 0.05) & (mesh.nodes <= 0.5)
    assert x[inside] == pytest.approx(-2.0 * n, rel=1e-2)


def test_mass_positive_definite():
    for n in (2, 5):
        ops = assemble(build_mesh(8, n))
        assert np.min(np.linalg.eigvalsh(ops.dense(ops.mass))) > 0


# ---------------------------------------------------------------- stepping


def test_uniform_solution_tracked():
    T = 5e-3
    mesh = build_mesh(64, 3)
    ops = assemble(mesh)
    state, history, snaps, _ = evolve(uniform_condition(mesh, T), mesh, ops, u_stop=1e-3, kappa=1e-3)
    spread = max(np.ptp(s.u) / np.min(s.u) for s in snaps)
    assert spread < 1e-8
    # the O(kappa) drift in the quench time is absorbed by measuring against the fitted T
    T_fit = estimate_T(history, (1e-3, 1e-2))
    assert T_fit == pytest.approx(T, rel=2e-3)
    t, m = history[:, 0], history[:, 1]
    exact = C_STAR * (T_fit - t) ** (2 / 3)
    assert np.max(np.abs(m / exact - 1)) < 0.01


def test_mass_conserved_without_source():
    mesh = build_mesh(64, 3)
    ops = assemble(mesh)
    state = initial_condition(mesh, 0.5, 1.0)
    integral0 = ops.lumped @ state.u
    energies = []
    for _ in range(50):
        state = step(state, mesh, ops, dt=1e-2, source=lambda u: np.zeros_like(u))
        energies.append(0.5 * state.w @ ops.apply(ops.mass, state.w) + 0.5 * state.u @ ops.apply(ops.stiffness, state.u))
    assert ops.lumped @ state.u == pytest.approx(integral0, rel=1e-12)
    assert np.all(np.diff(energies) <= 1e-14 * energies[0])


@settings(max_examples=10)
@given(g=st.floats(-2.0, 2.0), dt=st.floats(1e-3, 5e-2))
def test_frozen_source_energy_nonincreasing(g, dt):
    mesh = build_mesh(32, 2)
    ops = assemble(mesh)
    state = initial_condition(mesh, 2.0, 1.0)
    m1 = ops.apply(ops.mass, np.ones(mesh.N + 1))

    def energy(s):
        return 0.5 * s.w @ ops.apply(ops.mass, s.w) + 0.5 * s.u @ ops.apply(ops.stiffness, s.u) + g * m1 @ s.u

    E = [energy(state)]
    for _ in range(20):
        state = step(state, mesh, ops, dt=dt, source=lambda u: np.full_like(u, g))
        E.append(energy(state))
    assert np.all(np.diff(E) <= 1e-12 * (1 + abs(E[0])))


def test_dirichlet_keeps_boundary_value():
    mesh = build_mesh(32, 2)
    ops = assemble(mesh)
    state = initial_condition(mesh, 0.1, 1.0)
    for _ in range(5):
        state = step(state, mesh, ops, dt=1e-3, boundary=Boundary.DIRICHLET)
    assert state.u[-1] == pytest.approx(1.1, rel=1e-14)


def test_next_dt():
    assert next_dt(np.array([1e-2, 1.0]), kappa=0.1, dt_max=1.0) == pytest.approx(1e-4)
    assert next_dt(np.array([10.0]), kappa=0.1, dt_max=5e-4) == 5e-4


def test_no_quench_reported():
    mesh = build_mesh(16, 2)
    ops = assemble(mesh)
    with pytest.raises(NoQuench):
        evolve(initial_condition(mesh, 0.5, 0.0), mesh, ops, t_budget=0.05, dt_max=1e-2)


def test_initial_condition_validation():
    with pytest.raises(ValueError):
        initial_condition(build_mesh(8, 2), 0.0, 1.0)


# ---------------------------------------------------------------- fits and rescaling


@given(alpha=st.floats(0.5, 2.5), C=st.floats(0.1, 5.0))
def test_power_law_fit_exact(alpha, C):
    r = np.geomspace(1e-3, 0.3, 40)
    a, c = fit_power_law(r, C * r**alpha)
    assert a == pytest.approx(alpha, rel=1e-10) and c == pytest.approx(C, rel=1e-9)


def test_power_law_window_too_narrow():
    r = np.linspace(0.1, 0.2, 5)
    with pytest.raises(WindowTooNarrow):
        fit_power_law(r, r**2)


def test_slope_window_selects_decades():
    r = np.linspace(0, 1, 2001)
    u = 1e-4 + r ** (4 / 3)
    mask = slope_window(r, u, 1e-4)
    assert np.all(u[mask] >= 1e-3) and np.all(u[mask] <= 1e-1) and np.all(r[mask] <= 0.3)
    alpha, _ = fit_power_law(r, u, mask)
    assert alpha == pytest.approx(4 / 3, abs=0.05)


@given(tau=st.floats(1e-6, 1e-2))
def test_rescale_identities(tau):
    r = np.linspace(0, 1, 11)
    u = 0.3 + r**2
    xi, V = rescale_profile(Snapshot(0.0, u), tau, r)
    assert xi * np.sqrt(tau) == pytest.approx(r, rel=1e-12)
    assert V * tau ** (2 / 3) == pytest.approx(u, rel=1e-12)
    with pytest.raises(ValueError):
        rescale_profile(Snapshot(2.0 * tau, u), tau, r)


def test_unsupported_dimension():
    with pytest.raises(ValueError, match="2, 3, 4, 5"):
        run(6, 64)


# ---------------------------------------------------------------- full runs


def test_quench_run_profile(report2):
    assert report2.quench_radius == 0.0
    assert report2.T_max == pytest.approx(0.00110959, rel=1e-3)
    alpha, _ = report2.slope_fit
    assert alpha == pytest.approx(4 / 3, abs=0.05)
    assert report2.V0_limit == pytest.approx(C_STAR, rel=0.02)
    assert report2.snapshots[-1].t < report2.T_max
    d = report2.as_dict()
    assert d["n"] == 2 and "free_fit" in d


def test_collapse_improves(report2):
    dist = collapse_distances(report2)
    tail = dist[-5:]
    assert all(b < a for a, b in zip(tail[:-1], tail[1:]))


def test_kappa_halving():
    T = [run(2, 200, kappa=k).T_max for k in (0.002, 0.001)]
    assert abs(T[1] / T[0] - 1) < 1e-3


@pytest.mark.slow
def test_mesh_doubling():
    alphas = [run(2, N).slope_fit[0] for N in (400, 800)]
    assert abs(alphas[1] - alphas[0]) < 0.02


@pytest.mark.slow
@pytest.mark.parametrize("n", [3, 4, 5])
def test_higher_dimensions(n):
    rep = run(n, 200)
    assert rep.slope_fit[0] == pytest.approx(4 / 3, abs=0.05)
    assert rep.quench_radius == 0.0

