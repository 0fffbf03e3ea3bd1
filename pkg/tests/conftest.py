"""Shared fixtures: converged reference waves reused across test modules.

Everything here is deterministic; session scope only avoids re-running
Newton solves that several test modules need.
"""

import dataclasses

import numpy as np
import pytest

from latticefronts import (
    find_two_periodic_equilibria,
    two_site_transform,
    two_site_problem,
    nagumo_problem,
    epsilon_scaled_problem,
    make_grid,
    initial_guess,
    newton_solve,
)


def solve_front(problem, L=40.0, h=1.0, c0=0.1, width=np.sqrt(2.0)):
    grid = make_grid(L, h, problem.all_shifts)
    guess = initial_guess(grid, width, problem.dimension)
    sol = newton_solve(problem, grid, guess, c0)
    return grid, sol


@pytest.fixture(scope="session")
def nagumo_front():
    """Discrete Nagumo front (d1=1, d2=0, a=0.3) on the unit lattice."""
    problem = nagumo_problem(1.0, 0.0, 0.3)
    grid, sol = solve_front(problem)
    return problem, grid, sol


@pytest.fixture(scope="session")
def pde_limit_front():
    """Fine-grid front of the eps-scaled operator at eps=0.05."""
    problem = epsilon_scaled_problem(1.0, 0.0, 0.3, 0.05)
    grid, sol = solve_front(problem, h=0.05, c0=0.28)
    return problem, grid, sol


@pytest.fixture(scope="session")
def two_site_system():
    """Two-site system from the d1=-0.05, a=0.5 lattice, connecting the
    swapped pair of genuinely 2-periodic equilibria, with a weight-0.01
    second-neighbor perturbation attached."""
    states = find_two_periodic_equilibria(-0.05, 0.5)
    x_minus = 0.5 * (1.0 - np.sqrt(1.8))
    x_plus = 0.5 * (1.0 + np.sqrt(1.8))

    def pick(target):
        return min(states,
                   key=lambda st: np.max(np.abs(st.as_array()
                                                - np.asarray(target))))

    minus = pick((x_minus, x_plus))
    plus = pick((x_plus, x_minus))
    ts = two_site_transform(-0.05, 0.0, 0.5, minus, plus)
    return dataclasses.replace(ts, d2=0.01)


@pytest.fixture(scope="session")
def two_site_front(two_site_system):
    """Base (eps=0) wave of the two-site fixture; pinned, c = 0."""
    problem = two_site_problem(two_site_system)
    grid, sol = solve_front(problem, c0=0.0)
    return problem, grid, sol
