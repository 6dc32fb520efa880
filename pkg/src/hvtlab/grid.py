"""Finite direction grid standing in for the continuous set of measurement axes.

The exclusive-event model needs a normalizable set of directions; a finite
grid with uniform weight 1/M makes its activation ratio exactly 2/M.  The
grid always contains the antipode of every point, the six coordinate axes,
and any device directions registered up front.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .qcore import DIRECTION_DOT_TOL, Direction

DEFAULT_GRID_SIZE = 362

_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


class GridError(ValueError):
    """Raised when a direction is not registered on the grid."""


def _fibonacci_half_sphere(count: int) -> list[Direction]:
    # Lower hemisphere only (z < 0 strictly); antipodes fill the upper half
    # without collisions at the equator or the poles.
    points = []
    for i in range(count):
        z = -1.0 + (i + 0.5) / count
        r = math.sqrt(max(0.0, 1.0 - z * z))
        phi = i * _GOLDEN_ANGLE
        points.append(Direction.from_vector((r * math.cos(phi), r * math.sin(phi), z), normalize=True))
    return points


@dataclass(frozen=True)
class DirectionGrid:
    """Ordered set of unit directions with uniform weight 1/M."""

    points: tuple[Direction, ...]
    _matrix: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self) -> None:
        mat = np.array([[p.x, p.y, p.z] for p in self.points])
        mat.setflags(write=False)
        object.__setattr__(self, "_matrix", mat)

    @classmethod
    def build(
        cls,
        size: int = DEFAULT_GRID_SIZE,
        devices: Iterable[Direction] = (),
    ) -> "DirectionGrid":
        """Fibonacci layout of about `size` points, symmetrized with antipodes.

        The six coordinate axes are always present; each registered device
        direction is added together with its antipode unless an equivalent
        point already exists.  The actual M is len(points).
        """
        if size < 8:
            raise ValueError("grid size must be at least 8")
        axes = [
            Direction(1.0, 0.0, 0.0), Direction(-1.0, 0.0, 0.0),
            Direction(0.0, 1.0, 0.0), Direction(0.0, -1.0, 0.0),
            Direction(0.0, 0.0, 1.0), Direction(0.0, 0.0, -1.0),
        ]
        points = list(axes)
        half = _fibonacci_half_sphere(max(1, (size - len(axes)) // 2))
        for p in half:
            points.append(p)
            points.append(-p)
        matrix = np.array([[p.x, p.y, p.z] for p in points])
        for dev in devices:
            for cand in (dev, -dev):
                dots = matrix @ cand.as_array()
                if np.max(dots) < 1.0 - DIRECTION_DOT_TOL:
                    points.append(cand)
                    matrix = np.vstack([matrix, cand.as_array()])
        return cls(points=tuple(points))

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self) -> Iterator[Direction]:
        return iter(self.points)

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def weight(self) -> float:
        """Uniform direction weight 1/M."""
        return 1.0 / len(self.points)

    @property
    def matrix(self) -> np.ndarray:
        """(M, 3) array of the grid points, read-only."""
        return self._matrix

    def index_of(self, d: Direction) -> int:
        """Index of the grid point equivalent to d (dot-product proximity)."""
        dots = self._matrix @ d.as_array()
        i = int(np.argmax(dots))
        if dots[i] < 1.0 - DIRECTION_DOT_TOL:
            raise GridError(
                f"direction ({d.x:.4g},{d.y:.4g},{d.z:.4g}) is not on the grid; "
                "register device directions when building it"
            )
        return i

    def contains(self, d: Direction) -> bool:
        dots = self._matrix @ d.as_array()
        return bool(np.max(dots) >= 1.0 - DIRECTION_DOT_TOL)

    def antipode_index(self, i: int) -> int:
        return self.index_of(-self.points[i])
