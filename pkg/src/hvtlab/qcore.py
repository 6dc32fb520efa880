"""Dense complex linear algebra for spin-1/2 states and projective measurement.

Everything here is a pure function over small immutable values: directions on
the Bloch sphere, 2x2/4x4 density matrices, Born-rule probabilities, collapse,
convex mixtures, and the classical/quantum broadcast contrast.  Outcome values
use the Pauli convention (+1 up, -1 down); spin eigenvalues are s = sigma/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, NamedTuple

import numpy as np

# Tolerances: exact linear-algebra identities hold to 1e-12 in double
# precision on these matrix sizes; eigenvalue checks get 1e-10 slack.
ATOL = 1e-12
PSD_SLACK = 1e-10
DIRECTION_DOT_TOL = 1e-9

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)


class InvalidDirectionError(ValueError):
    """Raised when a vector is not a unit direction."""


class InvalidStateError(ValueError):
    """Raised when a matrix is not a valid density matrix."""


class ImpossibleOutcomeError(ValueError):
    """Raised when collapsing onto a zero-probability branch."""


class NormalizationError(ValueError):
    """Raised when mixture weights do not form a probability distribution."""


@dataclass(frozen=True)
class Direction:
    """Unit vector on the Bloch sphere (a measurement axis)."""

    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        norm_sq = self.x * self.x + self.y * self.y + self.z * self.z
        if abs(norm_sq - 1.0) > 1e-12:
            raise InvalidDirectionError(
                f"({self.x}, {self.y}, {self.z}) is not unit length"
            )

    @classmethod
    def from_angles(cls, theta: float, phi: float) -> "Direction":
        """Direction from polar angles, x = sin(theta)cos(phi) etc."""
        st = math.sin(theta)
        return cls(st * math.cos(phi), st * math.sin(phi), math.cos(theta))

    @classmethod
    def from_vector(cls, v, normalize: bool = False) -> "Direction":
        arr = np.asarray(v, dtype=float)
        if normalize:
            n = float(np.linalg.norm(arr))
            if n == 0.0:
                raise InvalidDirectionError("cannot normalize the zero vector")
            arr = arr / n
        return cls(float(arr[0]), float(arr[1]), float(arr[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def dot(self, other: "Direction") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def __neg__(self) -> "Direction":
        return Direction(-self.x, -self.y, -self.z)

    def is_close(self, other: "Direction", tol: float = DIRECTION_DOT_TOL) -> bool:
        """Dot-product proximity; robust for grid membership tests."""
        return abs(self.dot(other) - 1.0) < tol

    def angles(self) -> tuple[float, float]:
        """Polar angles (theta, phi) recovering this direction."""
        theta = math.acos(min(1.0, max(-1.0, self.z)))
        phi = math.atan2(self.y, self.x)
        return theta, phi


X = Direction(1.0, 0.0, 0.0)
Y = Direction(0.0, 1.0, 0.0)
Z = Direction(0.0, 0.0, 1.0)


def direction_from_angles(theta: float, phi: float) -> Direction:
    """Spherical-coordinate constructor; angles are taken mod 2*pi."""
    return Direction.from_angles(theta, phi)


class Outcome(Enum):
    """Result of one use of the measurement device.

    UP/DOWN carry the Pauli values +1/-1; NOT_ACTIVATED carries no value
    (the device saw no event along its axis).
    """

    UP = 1
    DOWN = -1
    NOT_ACTIVATED = 0

    @property
    def spin(self) -> int | None:
        """+1, -1, or None for a silent device."""
        if self is Outcome.NOT_ACTIVATED:
            return None
        return int(self.value)

    @property
    def activated(self) -> bool:
        return self is not Outcome.NOT_ACTIVATED

    @classmethod
    def from_sign(cls, sign: int) -> "Outcome":
        if sign == 1:
            return cls.UP
        if sign == -1:
            return cls.DOWN
        raise ValueError(f"sign must be +1 or -1, got {sign}")


class DensityMatrix:
    """Hermitian, positive semidefinite, unit-trace complex matrix (dim 2 or 4)."""

    __slots__ = ("_m",)

    def __init__(self, matrix) -> None:
        m = np.asarray(matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] not in (2, 4):
            raise InvalidStateError(f"expected a 2x2 or 4x4 matrix, got {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > ATOL:
            raise InvalidStateError("matrix is not Hermitian")
        if abs(np.trace(m).real - 1.0) > ATOL or abs(np.trace(m).imag) > ATOL:
            raise InvalidStateError("matrix does not have unit trace")
        if np.min(np.linalg.eigvalsh(m)) < -PSD_SLACK:
            raise InvalidStateError("matrix has a negative eigenvalue")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "_m", m)

    @property
    def matrix(self) -> np.ndarray:
        return self._m

    @property
    def dim(self) -> int:
        return self._m.shape[0]

    def entry(self, i: int, j: int) -> complex:
        return complex(self._m[i, j])

    def isclose(self, other: "DensityMatrix", atol: float = ATOL) -> bool:
        return self.dim == other.dim and bool(
            np.max(np.abs(self._m - other._m)) <= atol
        )

    def __repr__(self) -> str:
        return f"DensityMatrix(dim={self.dim})"


def spin_operator(d: Direction) -> np.ndarray:
    """Pauli operator sigma.d: traceless, Hermitian, eigenvalues exactly +/-1."""
    return d.x * SIGMA_X + d.y * SIGMA_Y + d.z * SIGMA_Z


def up_spinor(d: Direction) -> np.ndarray:
    """Normalized +1 eigenvector of sigma.d, (cos(t/2), e^{i phi} sin(t/2))."""
    theta, phi = d.angles()
    return np.array(
        [math.cos(theta / 2.0), math.sin(theta / 2.0) * np.exp(1j * phi)],
        dtype=complex,
    )


def up_projector(d: Direction) -> DensityMatrix:
    """Rank-1 projector (I + sigma.d)/2 onto the up state along d."""
    return DensityMatrix((IDENTITY_2 + spin_operator(d)) / 2.0)


def born(rho: DensityMatrix, d: Direction) -> tuple[float, float]:
    """Born probabilities (p_up, p_down) for measuring sigma.d on rho."""
    if rho.dim != 2:
        raise InvalidStateError("born expects a single-spin (2x2) state")
    p_up = float(np.trace(rho.matrix @ up_projector(d).matrix).real)
    p_up = min(1.0, max(0.0, p_up))
    return p_up, 1.0 - p_up


def expectation(rho: DensityMatrix, d: Direction) -> float:
    """tr(rho sigma.d) = p_up - p_down."""
    return float(np.trace(rho.matrix @ spin_operator(d)).real)


def collapse(rho: DensityMatrix, d: Direction, out: Outcome) -> DensityMatrix:
    """Post-measurement state: the projector for the recorded outcome.

    Collapsing onto a branch with zero Born probability raises
    ImpossibleOutcomeError.
    """
    if out.spin is None:
        raise ImpossibleOutcomeError("cannot collapse onto a silent outcome")
    p_up, p_down = born(rho, d)
    p = p_up if out is Outcome.UP else p_down
    if p <= ATOL:
        raise ImpossibleOutcomeError(
            f"outcome {out.name} along ({d.x:.3g},{d.y:.3g},{d.z:.3g}) has zero probability"
        )
    return up_projector(d if out is Outcome.UP else -d)


def mixture(components: Iterable[tuple[float, DensityMatrix]]) -> DensityMatrix:
    """Convex combination of density matrices; weights must sum to 1."""
    comps = list(components)
    if not comps:
        raise NormalizationError("mixture needs at least one component")
    total = sum(w for w, _ in comps)
    if any(w < 0.0 for w, _ in comps):
        raise NormalizationError("mixture weights must be nonnegative")
    if abs(total - 1.0) > ATOL:
        raise NormalizationError(f"mixture weights sum to {total}, expected 1")
    dim = comps[0][1].dim
    acc = np.zeros((dim, dim), dtype=complex)
    for w, rho in comps:
        if rho.dim != dim:
            raise InvalidStateError("mixture components must share a dimension")
        acc += w * rho.matrix
    return DensityMatrix(acc)


def partial_trace(rho: DensityMatrix, keep: int) -> DensityMatrix:
    """Trace a 4x4 two-spin state down to subsystem 0 or 1."""
    if rho.dim != 4:
        raise InvalidStateError("partial trace expects a two-spin (4x4) state")
    if keep not in (0, 1):
        raise ValueError("keep must be 0 or 1")
    t = rho.matrix.reshape(2, 2, 2, 2)
    reduced = np.trace(t, axis1=1, axis2=3) if keep == 0 else np.trace(t, axis1=0, axis2=2)
    return DensityMatrix(reduced)


class BroadcastResult(NamedTuple):
    joint: DensityMatrix
    reduced_object: DensityMatrix
    reduced_meter: DensityMatrix


def broadcast_demo(rho: DensityMatrix, basis: Direction) -> BroadcastResult:
    """Copy rho's components in the given basis onto a meter and trace back.

    The joint state carries rho's matrix elements between doubled basis
    vectors |m m><n n|.  For rho diagonal in `basis` both partial traces
    reproduce rho exactly (a classical state broadcasts); otherwise each
    reduced state is rho with its off-diagonals in `basis` removed, so a
    generic quantum state cannot be broadcast this way.
    """
    if rho.dim != 2:
        raise InvalidStateError("broadcast_demo expects a single-spin state")
    vecs = (up_spinor(basis), up_spinor(-basis))
    joint = np.zeros((4, 4), dtype=complex)
    for mu in range(2):
        for nu in range(2):
            coeff = vecs[mu].conj() @ rho.matrix @ vecs[nu]
            pair_mu = np.kron(vecs[mu], vecs[mu])
            pair_nu = np.kron(vecs[nu], vecs[nu])
            joint += coeff * np.outer(pair_mu, pair_nu.conj())
    joint_dm = DensityMatrix(joint)
    return BroadcastResult(
        joint=joint_dm,
        reduced_object=partial_trace(joint_dm, keep=0),
        reduced_meter=partial_trace(joint_dm, keep=1),
    )
