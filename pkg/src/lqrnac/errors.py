"""Error types shared across the package."""

from __future__ import annotations

__all__ = [
    "LqrError",
    "UnstablePolicy",
    "IllConditioned",
    "NoConvergence",
    "GenerationFailed",
    "DivergenceError",
    "StateOverflow",
    "RatioOverflow",
    "InstabilityDuringRun",
]


class LqrError(Exception):
    """Base class for all package-specific errors."""


class UnstablePolicy(LqrError):
    """The closed loop A - BK has spectral radius at or above one."""

    def __init__(self, rho: float, message: str | None = None):
        self.rho = float(rho)
        super().__init__(
            message or f"policy is not stable: spectral radius {self.rho:.6g} >= 1"
        )


class IllConditioned(LqrError):
    """A linear system required by the computation is numerically singular."""


class NoConvergence(LqrError):
    """An iterative solver exhausted its iteration budget."""

    def __init__(self, iterations: int, message: str | None = None):
        self.iterations = int(iterations)
        super().__init__(message or f"no convergence after {self.iterations} iterations")


class GenerationFailed(LqrError):
    """Random instance or gain generation exhausted its retry budget."""


class DivergenceError(LqrError):
    """A learning iterate became NaN or infinite.

    Carries the name of the offending field and the iteration index.
    """

    def __init__(self, field: str, iteration: int):
        self.field = field
        self.iteration = int(iteration)
        super().__init__(
            f"non-finite value in '{field}' at iteration {self.iteration}"
        )


class StateOverflow(LqrError):
    """A simulated state norm exceeded the overflow guard (1e12)."""

    def __init__(self, iteration: int, norm: float):
        self.iteration = int(iteration)
        self.norm = float(norm)
        super().__init__(
            f"state norm {self.norm:.3e} exceeded 1e12 at step {self.iteration}"
        )


class RatioOverflow(LqrError):
    """An importance ratio exceeded the overflow guard (1e12).

    Signals a mismatch between the behavior and target action
    distributions large enough that reweighting is meaningless.
    """

    def __init__(self, iteration: int, ratio: float):
        self.iteration = int(iteration)
        self.ratio = float(ratio)
        super().__init__(
            f"importance ratio {self.ratio:.3e} exceeded 1e12 at step "
            f"{self.iteration}: behavior and target policies are too far apart"
        )


class InstabilityDuringRun(LqrError):
    """An actor update produced an unstable gain mid-run.

    Carries the outer-step index at which instability appeared and the
    last stable gain.  Attached to the returned run log as a marker
    rather than raised, so partial results survive.
    """

    def __init__(self, outer_step: int, last_stable_K):
        self.outer_step = int(outer_step)
        self.last_stable_K = last_stable_K
        super().__init__(
            f"actor update produced an unstable gain at outer step {self.outer_step}"
        )
