"""Phase spaces and their metric geometry.

Two kinds of space are supported, both with unit fundamental domain:

* the flat torus T^d = R^d / Z^d (``periodic=True``), with coordinates
  normalized to [0, 1) and the quotient metric
  ``sqrt(sum_i min(|dx_i|, 1-|dx_i|)^2)``;
* the unit cube in R^d (``periodic=False``), plain Euclidean metric, no
  wraparound.  Contracting affine families live here: a genuine metric
  contraction like x/2 does not descend to the circle.

Points are plain float arrays of shape ``(..., d)``; every function in this
package is vectorized over leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DimensionError(ValueError):
    pass


class AntipodalError(ValueError):
    """Shortest-path displacement is ambiguous (a coordinate gap of exactly 1/2)."""


def _as_points(space: "Space", x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (space.dim,):
        raise DimensionError(
            f"expected points of dimension {space.dim}, got shape {x.shape}"
        )
    return x


@dataclass(frozen=True)
class Space:
    """A d-dimensional torus (default) or unit cube."""

    dim: int
    periodic: bool = True

    def __post_init__(self):
        if self.dim < 1:
            raise DimensionError(f"dim must be >= 1, got {self.dim}")

    def normalize(self, x) -> np.ndarray:
        """Map coordinates into the fundamental domain (mod 1 on the torus)."""
        x = _as_points(self, x)
        if not self.periodic:
            return x
        return x - np.floor(x)

    def displacement(self, p, q) -> np.ndarray:
        """Vector v with p + v = q, shortest representative on the torus.

        Components lie in (-1/2, 1/2] for periodic spaces; exact half-gaps
        resolve to +1/2.  For the cube this is just q - p.
        """
        p = _as_points(self, p)
        q = _as_points(self, q)
        if not self.periodic:
            return q - p
        r = (q - p) - np.floor(q - p)
        return np.where(r > 0.5, r - 1.0, r)

    def dist(self, p, q) -> np.ndarray:
        """Metric distance between point arrays, broadcasting over leading axes."""
        v = self.displacement(p, q)
        return np.sqrt(np.sum(v * v, axis=-1))

    def geodesic_displacement(self, p, q) -> np.ndarray:
        """Displacement along the unique shortest path from p to q.

        Requires dist(p, q) < 1/2 on the torus so the path is unique; raises
        AntipodalError if any coordinate gap is exactly 1/2.
        """
        v = self.displacement(p, q)
        if self.periodic:
            if np.any(np.abs(v) == 0.5):
                raise AntipodalError(
                    "coordinate gap of exactly 0.5; perturb the inputs"
                )
            if np.any(np.sqrt(np.sum(v * v, axis=-1)) >= 0.5):
                raise AntipodalError("points at distance >= 0.5 have no unique shortest path")
        return v

    def diameter(self) -> float:
        d = self.dim
        return 0.5 * np.sqrt(d) if self.periodic else np.sqrt(d)

    def uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n points drawn uniformly from the fundamental domain."""
        return rng.random((n, self.dim))


def ball_sample(rng: np.random.Generator, n: int, dim: int, radius: float) -> np.ndarray:
    """Uniform samples from the Euclidean ball of the given radius."""
    v = rng.standard_normal((n, dim))
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    norms[norms == 0.0] = 1.0
    r = radius * rng.random((n, 1)) ** (1.0 / dim)
    return v / norms * r


def lattice_samples(n: int, dim: int, generator: int | None = None) -> np.ndarray:
    """Rank-1 lattice point set: low-discrepancy samples with small covering radius.

    Points are (i/n, i*g/n, i*g^2/n, ...) mod 1.  For dim 2 and n = 200 the
    generator 43 covers the torus to radius ~0.044 (near the hexagonal
    optimum); by default g is chosen as a golden-ratio-like integer coprime
    to n.
    """
    if generator is None:
        generator = 43 if (dim, n) == (2, 200) else max(1, int(round(n * 0.6180339887)))
        while np.gcd(generator, n) != 1:
            generator += 1
    i = np.arange(n)
    cols = [i / n]
    g = 1
    for _ in range(dim - 1):
        g = (g * generator) % n
        cols.append((i * g % n) / n)
    return np.stack(cols, axis=-1)


_DEFAULT_RESOLUTION = {1: 4096, 2: 256, 3: 64, 4: 24}


def default_resolution(dim: int) -> int:
    if dim in _DEFAULT_RESOLUTION:
        return _DEFAULT_RESOLUTION[dim]
    return max(2, int(round(3.3e5 ** (1.0 / dim))))


@dataclass
class MetricGrid:
    """A (1/resolution)-net of the space.

    Every point of the space lies within sqrt(d)/(2*resolution) of a grid
    point: the torus grid is the lattice {i/res}, the cube grid the cell
    centers {(i+1/2)/res}.
    """

    space: Space
    resolution: int
    _points: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.resolution < 1:
            raise ValueError(f"resolution must be >= 1, got {self.resolution}")

    @property
    def points(self) -> np.ndarray:
        if self._points is None:
            d = self.space.dim
            axis = np.arange(self.resolution, dtype=float) / self.resolution
            if not self.space.periodic:
                axis = axis + 0.5 / self.resolution
            mesh = np.meshgrid(*([axis] * d), indexing="ij")
            self._points = np.stack(mesh, axis=-1).reshape(-1, d)
        return self._points

    def __len__(self) -> int:
        return self.resolution ** self.space.dim


def grid_for(space: Space, resolution: int | None = None) -> MetricGrid:
    return MetricGrid(space, resolution or default_resolution(space.dim))
