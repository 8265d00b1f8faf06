"""Seeded samplers for the benchmark problems.

sinusoid: joint density proportional to 1 + sin(omega x) sin(omega y) on
(-pi, pi)^2, drawn by rejection from the uniform proposal with acceptance
probability (1 + sin(omega x) sin(omega y)) / 2 (envelope constant 2).
gsign: X standard normal in d dimensions, Y = |Z| * prod_k sign(X_k).
null: X and Y independent standard normals from disjoint substreams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset


@dataclass(frozen=True)
class SinusoidConfig:
    omega: int
    n: int

    def __post_init__(self):
        if int(self.omega) != self.omega or self.omega < 1:
            raise ValueError(f"omega must be a positive integer, got {self.omega}")
        if self.n < 1:
            raise ValueError("n must be >= 1")


@dataclass(frozen=True)
class GaussianSignConfig:
    d: int
    n: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.n < 1:
            raise ValueError("n must be >= 1")


def sinusoid_proposals(omega: int, count: int, rng: np.random.Generator):
    """One batch of uniform proposals on (-pi, pi)^2 with their accept mask.

    Exposed for tests: the proposal stream with the accept step ignored is
    exactly uniform on the square. Draw order: x block, y block, u block.
    """
    x = rng.uniform(-np.pi, np.pi, count)
    y = rng.uniform(-np.pi, np.pi, count)
    u = rng.uniform(0.0, 1.0, count)
    accept = u < 0.5 * (1.0 + np.sin(omega * x) * np.sin(omega * y))
    return x, y, accept


def sample_sinusoid(config: SinusoidConfig, seed) -> Dataset:
    """Rejection-sample n points from the sinusoid density; deterministic given seed."""
    rng = np.random.default_rng(seed)
    xs: list[np.ndarray] = []
    ys: list[np.ndarray] = []
    have = 0
    while have < config.n:
        # mean acceptance is 1/2; 2.2x plus slack keeps the loop count low
        batch = max(1024, int(2.2 * (config.n - have)) + 64)
        x, y, accept = sinusoid_proposals(config.omega, batch, rng)
        xs.append(x[accept])
        ys.append(y[accept])
        have += int(accept.sum())
    x_all = np.concatenate(xs)[: config.n]
    y_all = np.concatenate(ys)[: config.n]
    return Dataset(x_all[:, None], y_all[:, None])


def sample_gaussian_sign(config: GaussianSignConfig, seed) -> Dataset:
    """X ~ N(0, I_d); Y = |Z| * prod_k sign(X_k) with Z standard normal."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((config.n, config.d))
    z = rng.standard_normal(config.n)
    y = np.abs(z) * np.prod(np.sign(X), axis=1)
    return Dataset(X, y[:, None])


def sample_independent_null(n: int, d_x: int = 1, d_y: int = 1, seed=0) -> Dataset:
    """Independent standard normal X (n x d_x) and Y (n x d_y).

    The two blocks come from disjoint substreams of the seed, so they stay
    independent for every (n, d_x, d_y).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    child_x, child_y = root.spawn(2)
    X = np.random.default_rng(child_x).standard_normal((n, d_x))
    Y = np.random.default_rng(child_y).standard_normal((n, d_y))
    return Dataset(X, Y)
