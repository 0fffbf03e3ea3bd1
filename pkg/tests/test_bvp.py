"""Traveling-wave boundary value solver: residual assembly, Jacobian
consistency, Newton convergence, kernel diagnostics."""

import math

import numpy as np
import pytest

from latticefronts.bvp import (
    DomainTooSmallError,
    IncommensurableShiftError,
    assemble_jacobian,
    assemble_residual,
    epsilon_scaled_problem,
    initial_guess,
    kernel_vectors,
    make_grid,
    nagumo_problem,
    newton_solve,
    shifted_profile,
    trapezoid_weights,
    _deriv_matrix,
    inner,
)

PDE_SPEED = math.sqrt(0.5) * (1.0 - 2.0 * 0.3)   # continuum front speed, a = 0.3


# --------------------------------------------------------------------------
# grids and guesses

def test_make_grid_counts_and_axis():
    grid = make_grid(40.0, 1.0, (-2.0, -1.0, 0.0, 1.0, 2.0))
    assert grid.n == 81
    assert grid.xi[0] == -40.0
    assert grid.xi[-1] == 40.0
    assert grid.xi[grid.half_steps] == 0.0


def test_make_grid_rejects_incommensurable_shift():
    with pytest.raises(IncommensurableShiftError):
        make_grid(40.0, 0.3, (-1.0, 0.0, 1.0))


def test_make_grid_rejects_tiny_domain():
    with pytest.raises(ValueError):
        make_grid(5.0, 1.0, (0.0,))


def test_initial_guess_connects_the_equilibria():
    grid = make_grid(40.0, 1.0, (0.0,))
    g = initial_guess(grid, components=2)
    assert g.shape == (grid.n, 2)
    assert np.max(np.abs(g[0])) <= 1e-10
    assert np.max(np.abs(g[-1] - 1.0)) <= 1e-10
    assert np.all(np.diff(g[:, 0]) >= 0.0)


# --------------------------------------------------------------------------
# residual and Jacobian consistency

def test_jacobian_matches_directional_difference():
    problem = nagumo_problem(1.0, 0.2, 0.3)
    grid = make_grid(30.0, 1.0, problem.all_shifts)
    rng = np.random.default_rng(0)
    profile = initial_guess(grid) + 0.01 * rng.standard_normal((grid.n, 1))
    c = 0.2
    D = _deriv_matrix(grid.n, grid.h)
    ref_deriv = D @ profile
    J = assemble_jacobian(problem, grid, profile, c, ref_deriv)
    v = rng.standard_normal(grid.n * 1 + 1)
    t = 1e-6
    dp, dc = v[:-1].reshape(grid.n, 1), v[-1]

    def full_residual(p, cc):
        res = assemble_residual(problem, grid, p, cc)
        w = trapezoid_weights(grid)
        phase = inner(w, p - profile, ref_deriv)
        return np.concatenate([res.ravel(), [phase]])

    fd = (full_residual(profile + t * dp, c + t * dc)
          - full_residual(profile - t * dp, c - t * dc)) / (2.0 * t)
    assert np.max(np.abs(J @ v - fd)) <= 1e-6


def test_equilibrium_profiles_have_zero_interior_residual():
    # flat equilibria annihilate the residual away from the clamped ends
    # (the boundary rows see the other equilibrium through the clamp)
    problem = nagumo_problem(1.0, 0.0, 0.3)
    grid = make_grid(30.0, 1.0, problem.all_shifts)
    res0 = assemble_residual(problem, grid, np.zeros((grid.n, 1)), 0.37)
    res1 = assemble_residual(problem, grid, np.ones((grid.n, 1)), 0.37)
    assert np.max(np.abs(res0[:-4])) <= 1e-14
    assert np.max(np.abs(res1[4:])) <= 1e-14
    # and the clamped rows do see the mismatch
    assert np.max(np.abs(res0[-4:])) > 0.1


def test_shifted_profile_clamps_to_equilibria():
    p = np.linspace(0.0, 1.0, 11)[:, None]
    right = shifted_profile(p, 3)
    assert np.array_equal(right[:8], p[3:])
    assert np.all(right[8:] == 1.0)
    left = shifted_profile(p, -2, left=0.0)
    assert np.all(left[:2] == 0.0)
    assert np.array_equal(left[2:], p[:-2])


# --------------------------------------------------------------------------
# Newton solve

def test_newton_solves_discrete_nagumo(nagumo_front):
    problem, grid, sol = nagumo_front
    assert sol.residual_norm <= 1e-10
    assert 0.2 < sol.c < 0.35
    assert abs(sol.phase_location) <= grid.h
    assert np.all(np.diff(sol.profile[:, 0]) > -1e-12)
    assert not sol.pinning_suspected


def test_newton_solution_satisfies_residual_independently(nagumo_front):
    problem, grid, sol = nagumo_front
    res = assemble_residual(problem, grid, sol.profile, sol.c)
    assert np.max(np.abs(res)) <= 1e-10


def test_newton_speed_is_grid_translation_invariant(nagumo_front):
    problem, grid, sol = nagumo_front
    shifted = shifted_profile(sol.profile, 4)
    again = newton_solve(problem, grid, shifted, sol.c)
    assert abs(again.c - sol.c) <= 1e-10
    # phase alignment brings the front back to the origin
    assert abs(again.phase_location - sol.phase_location) <= 1e-6


def test_pde_limit_speed(pde_limit_front):
    _, _, sol = pde_limit_front
    assert abs(sol.c - PDE_SPEED) <= 2e-2


def test_domain_too_small_raises():
    problem = nagumo_problem(1.0, 0.0, 0.3)
    grid = make_grid(25.0, 1.0, problem.all_shifts)
    guess = initial_guess(grid)
    with pytest.raises(DomainTooSmallError):
        newton_solve(problem, grid, guess, 0.25, tail_tol=1e-8)


def test_pinned_two_site_wave(two_site_front):
    problem, grid, sol = two_site_front
    assert sol.residual_norm <= 1e-10
    assert abs(sol.c) <= 1e-10
    assert sol.pinning_suspected


# --------------------------------------------------------------------------
# kernel diagnostics

def test_kernel_of_traveling_front_is_one_dimensional(nagumo_front):
    problem, grid, sol = nagumo_front
    kd = kernel_vectors(problem, grid, sol)
    assert kd.kernel_dim == 1
    # the kernel surrogate is the profile derivative, up to normalization
    D = _deriv_matrix(grid.n, grid.h)
    deriv = (D @ sol.profile).ravel()
    deriv /= np.linalg.norm(deriv)
    overlap = abs(float(deriv @ kd.psi_plus.ravel()))
    norm = np.linalg.norm(kd.psi_plus.ravel())
    assert overlap / norm >= 0.999


def test_kernel_vectors_annihilated_by_linearization(nagumo_front):
    from latticefronts.bvp import linearization_matrix
    problem, grid, sol = nagumo_front
    kd = kernel_vectors(problem, grid, sol)
    L = linearization_matrix(problem, grid, sol.profile, sol.c)
    # psi_plus is the discrete profile derivative, a kernel element only up
    # to the O(h^2) differentiation error; psi_minus is an exact singular
    # vector of the discrete adjoint
    assert np.linalg.norm(L @ kd.psi_plus.ravel()) <= 0.05
    assert np.linalg.norm(L.T @ kd.psi_minus.ravel()) <= 1e-4


def test_pinned_wave_has_trivial_kernel(two_site_front):
    problem, grid, sol = two_site_front
    kd = kernel_vectors(problem, grid, sol)
    assert kd.kernel_dim == 0
    assert kd.singular_values[-1] > 0.1


# --------------------------------------------------------------------------
# eps-scaled operator

def test_eps_scaled_matches_continuum_second_difference():
    problem = epsilon_scaled_problem(1.0, 0.25, 0.3, 0.1)
    shifts, mats = problem.effective_coupling()
    assert shifts == (-0.2, -0.1, 0.0, 0.1, 0.2)
    # applied to a smooth function the stencil approximates (d1 + 4 d2) u''
    x0 = 0.3

    def u(x):
        return math.sin(1.7 * x)

    val = sum(float(A[0, 0]) * u(x0 + r) for r, A in zip(shifts, mats))
    exact = (1.0 + 4.0 * 0.25) * (-1.7**2) * u(x0)
    assert abs(val - exact) <= 5e-2
