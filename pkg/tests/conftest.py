"""Shared fixtures: the scalar closed-form benchmarks and the golden-ratio instance."""

import numpy as np
import pytest

import lqrnac as L


@pytest.fixture(scope="session")
def bench0():
    """Scalar instance with closed forms at K = 0 and no exploration noise.

    A=0.5, B=Q=R=Psi=1, sigma=0.  At K=0: Sigma = P = J = 4/3,
    E = -2/3, grad J = -16/9.
    """
    return L.ProblemInstance(
        A=[[0.5]], B=[[1.0]], Q=[[1.0]], R=[[1.0]], Psi=[[1.0]], sigma=0.0
    )


@pytest.fixture(scope="session")
def bench1():
    """Same scalar plant with exploration noise sigma = 1.

    At K=0: Psi_sigma = 2, Sigma = 8/3, J = 11/3.
    """
    return L.ProblemInstance(
        A=[[0.5]], B=[[1.0]], Q=[[1.0]], R=[[1.0]], Psi=[[1.0]], sigma=1.0
    )


@pytest.fixture(scope="session")
def golden():
    """A=B=Q=R=1: the optimal P is the golden ratio and K* = 1/phi."""
    return L.ProblemInstance(
        A=[[1.0]], B=[[1.0]], Q=[[1.0]], R=[[1.0]], Psi=[[1.0]], sigma=0.0
    )


@pytest.fixture(scope="session")
def k_zero():
    return L.PolicyParams([[0.0]])


@pytest.fixture(scope="session")
def phi():
    return (1.0 + np.sqrt(5.0)) / 2.0
