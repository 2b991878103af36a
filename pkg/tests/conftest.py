"""Shared fixtures: tiny hand-checkable instances and a random-instance factory."""

import numpy as np
import pytest

from lowpref import GeneratorConfig, make_instance, make_paper_instance, validate_instance


@pytest.fixture(scope="session")
def t1():
    """Single state, two actions, scalar features; rewards 1 and 0."""
    features = np.array([[[1.0], [0.0]]])
    schedule = np.zeros((1, 2, 2))
    schedule[0, 0, 1] = 1.0
    return validate_instance(make_instance(features, [1.0], [1.0], schedule, 1.0))


@pytest.fixture(scope="session")
def t2():
    """Two states sharing the same scalar features, unequal comparison mass."""
    features = np.array([[[1.0], [0.0]], [[1.0], [0.0]]])
    schedule = np.zeros((2, 2, 2))
    schedule[0, 0, 1] = 0.2
    schedule[1, 0, 1] = 0.8
    return validate_instance(make_instance(features, [1.0], [0.5, 0.5], schedule, 1.0))


@pytest.fixture(scope="session")
def tri():
    """One state, three planar actions, only (0,1) and (1,2) compared."""
    features = np.array([[[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]]])
    schedule = np.zeros((1, 3, 3))
    schedule[0, 0, 1] = 0.5
    schedule[0, 1, 2] = 0.5
    return validate_instance(
        make_instance(features, [1.0, -0.5], [1.0], schedule, 1.0)
    )


@pytest.fixture(scope="session")
def paper_instance():
    return make_paper_instance(GeneratorConfig(num_states=2, num_actions=10, dim=5, seed=7))


def random_consistent_instance(rng, s_max=3, a_max=4, d_max=4):
    """Random instance whose schedule provably spans all pairwise differences.

    Either every (i < j) cell carries mass (full mode) or only the chain
    (i, i + 1) does; chains still span every within-state difference by
    telescoping.
    """
    while True:
        S = int(rng.integers(1, s_max + 1))
        A = int(rng.integers(2, a_max + 1))
        d = int(rng.integers(1, d_max + 1))
        features = rng.normal(size=(S, A, d))
        theta = rng.normal(size=d)
        schedule = np.zeros((S, A, A))
        if rng.random() < 0.5:
            iu, ju = np.triu_indices(A, k=1)
            schedule[:, iu, ju] = rng.random(size=(S, iu.size)) + 0.1
        else:
            for i in range(A - 1):
                schedule[:, i, i + 1] = rng.random(size=S) + 0.1
        schedule /= schedule.sum()
        rho = rng.dirichlet(np.ones(S))
        rewards = features @ theta
        bound = float(np.max(np.abs(rewards))) + 0.1
        try:
            return validate_instance(
                make_instance(features, theta, rho, schedule, bound)
            )
        except Exception:
            continue  # measure-zero tie or duplicate; redraw
