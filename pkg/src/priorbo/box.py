"""The search box [-1, 1]^d and its optional low-dimensional parametrization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ConfigurationError(ValueError):
    """Invalid run or search-space configuration."""


def upsample(delta_low: np.ndarray, dim: int) -> np.ndarray:
    """Map a reduced-space point to the full box by block replication.

    Each low coordinate fills ``dim // dim_low`` consecutive high
    coordinates, so values (and hence box membership) are preserved.
    ``dim`` must be an integer multiple of the reduced dimension.
    """
    delta_low = np.asarray(delta_low, dtype=float)
    dim_low = delta_low.shape[-1]
    if dim % dim_low != 0:
        raise ConfigurationError(f"dim {dim} is not a multiple of dim_low {dim_low}")
    return np.repeat(delta_low, dim // dim_low, axis=-1)


def downsample_gradient(grad_full: np.ndarray, dim_low: int) -> np.ndarray:
    """Pull a full-space gradient back through the replication map (block sums)."""
    grad_full = np.asarray(grad_full, dtype=float)
    dim = grad_full.shape[-1]
    if dim % dim_low != 0:
        raise ConfigurationError(f"dim {dim} is not a multiple of dim_low {dim_low}")
    return grad_full.reshape(*grad_full.shape[:-1], dim_low, dim // dim_low).sum(axis=-1)


@dataclass(frozen=True)
class SearchBox:
    """Box ``[-1, 1]^dim``, optionally searched through a reduced space.

    When ``dim_low`` is set, optimization happens in ``[-1, 1]^dim_low``
    and points are replicated blockwise up to the full dimension before
    every objective or prior evaluation.
    """

    dim: int
    dim_low: int | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigurationError("dim must be >= 1")
        if self.dim_low is not None:
            if not (1 <= self.dim_low <= self.dim):
                raise ConfigurationError("dim_low must be in [1, dim]")
            if self.dim % self.dim_low != 0:
                raise ConfigurationError(
                    f"dim {self.dim} is not a multiple of dim_low {self.dim_low}"
                )

    @property
    def work_dim(self) -> int:
        return self.dim_low if self.dim_low is not None else self.dim

    def sample(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        """Uniform points in the working box, shape (n, work_dim)."""
        return rng.uniform(-1.0, 1.0, size=(n, self.work_dim))

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, -1.0, 1.0)

    def to_full(self, x: np.ndarray) -> np.ndarray:
        """Working-space point(s) mapped to the full box."""
        if self.dim_low is None:
            return np.asarray(x, dtype=float)
        return upsample(x, self.dim)
