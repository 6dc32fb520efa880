"""Single-spin state models behind one measurable interface.

Six constructions answer the same question -- what does a measurement device
pointed along an arbitrary axis record? -- with different internal machinery:

  A  quantum reference (Born rule + projective collapse)
  B  classical two-face dice with a single event axis (z)
  C  exclusive-event model: every (direction, up/down) pair is one exclusive
     elementary event on a finite direction grid
  D  independent-event model: one two-valued hidden variable per direction,
     stored lazily as a mixture of product-state orientation components
  E  Bell's hidden-variable outcome rule with a uniform lambda in [-1/2, 1/2]
  F  Bohm-style stochastic collapse: outcome decided by a two-branch flow
     driven by a random normalized vector, on top of a D-type configuration

Each model supports two repeat-measurement rules.  STRICT keeps the textbook
classical rule (the state is the event just observed).  ADAPTED substitutes
the modified rule that restores quantum repeat statistics: the post state is
re-anchored on the measured axis with the recorded sign.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .grid import DirectionGrid, GridError
from .qcore import (
    DensityMatrix,
    Direction,
    IDENTITY_2,
    Outcome,
    X,
    Z,
    born,
    collapse,
    spin_operator,
    up_projector,
)

_BLOCH_TOL = 1e-9


class ModelError(ValueError):
    """Raised for unknown kinds or unrepresentable preparations."""


class IntegrationError(RuntimeError):
    """Raised when the collapse flow fails to converge."""


class ModelKind(Enum):
    """The six lineup states, plus the single-hidden-variable strawman."""

    QUANTUM = "A"
    DICE = "B"
    EXCLUSIVE = "C"
    INDEPENDENT = "D"
    BELL = "E"
    BOHM = "F"
    NAIVE = "naive"

    @classmethod
    def parse(cls, token: str) -> "ModelKind":
        t = token.strip()
        for kind in cls:
            if t.upper() == kind.value.upper() or t.lower() == kind.name.lower():
                return kind
        raise ModelError(f"unknown model kind {token!r}")

    @property
    def letter(self) -> str:
        return self.value


class RepeatRule(Enum):
    STRICT = "strict"
    ADAPTED = "adapted"

    @classmethod
    def parse(cls, token: str) -> "RepeatRule":
        try:
            return cls(token.strip().lower())
        except ValueError:
            raise ModelError(f"unknown repeat rule {token!r}") from None


@dataclass(frozen=True)
class Preparation:
    """Weighted orientation components defining an initial state.

    Each component is (weight, bloch vector).  A unit bloch vector means an
    up-state along that axis; shorter vectors describe partially polarized
    product configurations.  The component list matters for model D, which
    distinguishes representatives of the same reduced statistics; all other
    models only consume the mean bloch vector or sample one component.
    """

    components: tuple[tuple[float, tuple[float, float, float]], ...]
    label: str = ""

    def __post_init__(self) -> None:
        total = sum(w for w, _ in self.components)
        if abs(total - 1.0) > 1e-12 or any(w < 0 for w, _ in self.components):
            raise ModelError("preparation weights must be a probability distribution")
        for _, m in self.components:
            if math.sqrt(m[0] ** 2 + m[1] ** 2 + m[2] ** 2) > 1.0 + _BLOCH_TOL:
                raise ModelError("bloch vectors cannot exceed unit length")

    @classmethod
    def pure(cls, d: Direction) -> "Preparation":
        return cls(components=((1.0, (d.x, d.y, d.z)),), label=f"up({d.x:.4g},{d.y:.4g},{d.z:.4g})")

    @classmethod
    def canonical(cls, label: str) -> "Preparation":
        """The three equivalent preparations of the same reduced statistics.

        I   quarter up / three-quarter down along z
        II  equal mixture of up-states along the two axes at polar angle
            2*pi/3 with azimuth pi/2 and 3*pi/2
        III the single product state averaging either mixture (bloch -z/2)
        """
        if label == "I":
            return cls(components=((0.25, (0.0, 0.0, 1.0)), (0.75, (0.0, 0.0, -1.0))), label="I")
        if label == "II":
            r1 = Direction.from_angles(2.0 * math.pi / 3.0, math.pi / 2.0)
            r2 = Direction.from_angles(2.0 * math.pi / 3.0, 3.0 * math.pi / 2.0)
            return cls(components=((0.5, (r1.x, r1.y, r1.z)), (0.5, (r2.x, r2.y, r2.z))), label="II")
        if label == "III":
            return cls(components=((1.0, (0.0, 0.0, -0.5)),), label="III")
        raise ModelError(f"unknown canonical preparation {label!r}")

    def mean_bloch(self) -> np.ndarray:
        acc = np.zeros(3)
        for w, m in self.components:
            acc += w * np.asarray(m)
        return acc

    def density_matrix(self) -> DensityMatrix:
        b = self.mean_bloch()
        d_unit = Direction.from_vector(b, normalize=True) if np.linalg.norm(b) > 0 else Z
        sigma = spin_operator(d_unit) * float(np.linalg.norm(b))
        return DensityMatrix((IDENTITY_2 + sigma) / 2.0)


X_UP = Preparation.pure(X)


# ---------------------------------------------------------------------------
# per-model state values


@dataclass(frozen=True)
class QuantumState:
    rho: DensityMatrix


@dataclass(frozen=True)
class DiceState:
    """Two-face dice along z: tuple of (face sign, probability)."""

    faces: tuple[tuple[int, float], ...] = ((1, 0.5), (-1, 0.5))

    def __post_init__(self) -> None:
        if abs(sum(p for _, p in self.faces) - 1.0) > 1e-12:
            raise ModelError("dice face probabilities must sum to 1")

    def p_up(self) -> float:
        return sum(p for s, p in self.faces if s == 1)


@dataclass(frozen=True, eq=False)
class EhvtState:
    """Exclusive-event weights over (grid direction, up/down) pairs."""

    grid: DirectionGrid
    up: np.ndarray
    down: np.ndarray

    def __post_init__(self) -> None:
        total = float(self.up.sum() + self.down.sum())
        if abs(total - 1.0) > 1e-9 or self.up.min() < -1e-15 or self.down.min() < -1e-15:
            raise ModelError("exclusive-event weights must sum to 1 and be nonnegative")
        self.up.setflags(write=False)
        self.down.setflags(write=False)

    @classmethod
    def from_bloch(cls, grid: DirectionGrid, bloch) -> "EhvtState":
        """Uniform direction mass 1/M, split (1 +/- r.b)/2 between up and down."""
        proj = grid.matrix @ np.asarray(bloch, dtype=float)
        up = (1.0 + proj) / 2.0 / len(grid)
        down = (1.0 - proj) / 2.0 / len(grid)
        return cls(grid=grid, up=up, down=down)

    @classmethod
    def point_mass(cls, grid: DirectionGrid, index: int, sign: int) -> "EhvtState":
        up = np.zeros(len(grid))
        down = np.zeros(len(grid))
        (up if sign == 1 else down)[index] = 1.0
        return cls(grid=grid, up=up, down=down)


@dataclass(frozen=True)
class IhvtState:
    """Mixture of orientation components plus outcomes frozen by measurement.

    The infinite per-direction product is never materialized; every marginal
    a device can ask for follows from the components, and axes measured under
    the strict rule carry a frozen sign that overrides the formula.
    """

    components: tuple[tuple[float, tuple[float, float, float]], ...]
    frozen_axes: tuple[tuple[tuple[float, float, float], int], ...] = ()


@dataclass(frozen=True)
class BellState:
    """Hidden variable lambda plus the axis the outcome rule is anchored to."""

    lam: float
    anchor: Direction
    anchor_sign: int = 1

    def __post_init__(self) -> None:
        if not -0.5 <= self.lam <= 0.5:
            raise ModelError("lambda must lie in [-1/2, 1/2]")
        if self.anchor_sign not in (1, -1):
            raise ModelError("anchor sign must be +1 or -1")


@dataclass(frozen=True)
class BohmParams:
    """Collapse-flow integration settings (gamma*dt fixed at 0.01 by default)."""

    gamma: float = 1.0
    dt: float = 0.01
    eps: float = 1e-6
    max_steps: int = 10_000_000


@dataclass(frozen=True)
class BohmState:
    """Transient two-branch configuration during one device interaction."""

    j: tuple[float, float]
    xi_sq: tuple[float, float]
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if abs(self.j[0] + self.j[1] - 1.0) > 1e-12:
            raise ModelError("branch weights must sum to 1")
        if self.xi_sq[0] <= 0.0 or self.xi_sq[1] <= 0.0:
            raise ModelError("hidden-vector components must be positive")


@dataclass(frozen=True, eq=False)
class Model:
    """One prepared model instance; measuring returns a new instance."""

    kind: ModelKind
    rule: RepeatRule
    state: object
    grid: DirectionGrid | None = None
    bohm: BohmParams = field(default_factory=BohmParams)


# ---------------------------------------------------------------------------
# construction


def make_model(
    kind: ModelKind | str,
    preparation: Preparation | None = None,
    grid: DirectionGrid | None = None,
    rule: RepeatRule = RepeatRule.ADAPTED,
    rng: np.random.Generator | None = None,
) -> Model:
    """Initialize one of the lineup states.

    With no preparation, every kind starts from its canonical lineup state:
    the fair dice for B, the up-state along x for everything else.  Model E
    draws its hidden lambda here, so it needs a generator.
    """
    if isinstance(kind, str):
        kind = ModelKind.parse(kind)
    if kind is ModelKind.DICE:
        state = _dice_state(preparation)
        return Model(kind=kind, rule=rule, state=state)
    prep = preparation if preparation is not None else X_UP

    if kind in (ModelKind.QUANTUM, ModelKind.NAIVE):
        if kind is ModelKind.NAIVE:
            # single-hidden-variable construction: only the z-diagonal survives
            bz = float(prep.mean_bloch()[2])
            rho = DensityMatrix(np.diag([(1.0 + bz) / 2.0, (1.0 - bz) / 2.0]))
        else:
            rho = prep.density_matrix()
        return Model(kind=kind, rule=rule, state=QuantumState(rho))

    if kind in (ModelKind.EXCLUSIVE, ModelKind.INDEPENDENT, ModelKind.BOHM):
        if grid is None:
            grid = DirectionGrid.build()
        if kind is ModelKind.EXCLUSIVE:
            return Model(kind=kind, rule=rule, state=EhvtState.from_bloch(grid, prep.mean_bloch()), grid=grid)
        return Model(kind=kind, rule=rule, state=IhvtState(components=prep.components), grid=grid)

    if kind is ModelKind.BELL:
        if rng is None:
            raise ModelError("model E needs a generator to draw its hidden variable")
        weights = [w for w, _ in prep.components]
        idx = int(rng.choice(len(weights), p=weights)) if len(weights) > 1 else 0
        m = prep.components[idx][1]
        if abs(math.sqrt(m[0] ** 2 + m[1] ** 2 + m[2] ** 2) - 1.0) > _BLOCH_TOL:
            raise ModelError("model E preparations must mix unit orientations")
        anchor = Direction(m[0], m[1], m[2])
        lam = float(rng.uniform(-0.5, 0.5))
        return Model(kind=kind, rule=rule, state=BellState(lam=lam, anchor=anchor))

    raise ModelError(f"unknown model kind {kind!r}")


def _dice_state(preparation: Preparation | None) -> DiceState:
    if preparation is None:
        return DiceState()
    for _, m in preparation.components:
        if abs(m[0]) > _BLOCH_TOL or abs(m[1]) > _BLOCH_TOL:
            raise ModelError("the dice only represents z-diagonal preparations")
    p_up = float((1.0 + preparation.mean_bloch()[2]) / 2.0)
    return DiceState(faces=((1, p_up), (-1, 1.0 - p_up)))


# ---------------------------------------------------------------------------
# model-specific operations


def ehvt_sample(state: EhvtState, rng: np.random.Generator) -> tuple[Direction, Outcome]:
    """Draw one elementary event: a direction and its up/down value."""
    idx, sign = _ehvt_sample_index(state, rng)
    return state.grid.points[idx], Outcome.from_sign(sign)


def _ehvt_sample_index(state: EhvtState, rng: np.random.Generator) -> tuple[int, int]:
    m = len(state.grid)
    flat = np.concatenate([state.up, state.down])
    k = int(rng.choice(2 * m, p=flat))
    return (k, 1) if k < m else (k - m, -1)


def ihvt_reduced(state: IhvtState, r: Direction) -> tuple[float, float]:
    """Marginal (p_up, p_down) along r; frozen axes override the formula."""
    for axis, sign in state.frozen_axes:
        d = r.x * axis[0] + r.y * axis[1] + r.z * axis[2]
        if abs(d - 1.0) < _BLOCH_TOL:
            return ((1.0 + sign) / 2.0, (1.0 - sign) / 2.0)
        if abs(d + 1.0) < _BLOCH_TOL:
            return ((1.0 - sign) / 2.0, (1.0 + sign) / 2.0)
    p_up = 0.0
    for w, m in state.components:
        p_up += w * (1.0 + r.x * m[0] + r.y * m[1] + r.z * m[2]) / 2.0
    p_up = min(1.0, max(0.0, p_up))
    return p_up, 1.0 - p_up


def _ihvt_conditioned(state: IhvtState, device: Direction, sign: int) -> IhvtState:
    """Strict-rule post state: freeze the measured axis, reweight components."""
    axis = (device.x, device.y, device.z)
    for a, _ in state.frozen_axes:
        d = abs(a[0] * axis[0] + a[1] * axis[1] + a[2] * axis[2])
        if abs(d - 1.0) < _BLOCH_TOL:
            return state  # axis already frozen; the outcome was forced
    reweighted = []
    for w, m in state.components:
        lik = (1.0 + sign * (device.x * m[0] + device.y * m[1] + device.z * m[2])) / 2.0
        reweighted.append((w * lik, m))
    total = sum(w for w, _ in reweighted)
    comps = tuple((w / total, m) for w, m in reweighted if w > 0.0)
    return IhvtState(components=comps, frozen_axes=state.frozen_axes + ((axis, sign),))


def complement_frame(anchor: Direction) -> tuple[np.ndarray, np.ndarray]:
    """Two axes completing the anchor to a right-handed frame.

    The complement order follows the cyclic successors of the anchor's
    dominant coordinate axis, so anchors along +x or +z reproduce the
    component priority x->y->z and z->x->y respectively.
    """
    a = anchor.as_array()
    k = int(np.argmax(np.abs(a)))
    ex, ey, ez = np.eye(3)
    succ = {0: (ey, ez), 1: (ez, ex), 2: (ex, ey)}[k]
    e2 = succ[0] - float(succ[0] @ a) * a
    e2 /= np.linalg.norm(e2)
    e3 = np.cross(a, e2)
    return e2, e3


def _sign(v: float) -> int:
    # sign(0) = +1: the boundary has measure zero and a fixed convention
    # keeps runs reproducible.
    return 1 if v >= 0.0 else -1


def bell_outcome(lam: float, beta: Direction, anchor: Direction, anchor_sign: int = 1) -> int:
    """Deterministic +/-1 outcome of measuring along beta given lambda.

    With c = anchor_sign * (beta . anchor), the outcome is
    sign(lambda + |c|/2) * sign(c), whose mean over uniform lambda is exactly
    c (the quantum expectation).  When beta is orthogonal to the anchor the
    outcome is sign(lambda) times the sign of the first nonzero beta
    component in the anchor's complement frame.
    """
    c = anchor_sign * beta.dot(anchor)
    if abs(c) > 1e-12:
        return _sign(lam + abs(c) / 2.0) * _sign(c)
    e2, e3 = complement_frame(anchor)
    b = beta.as_array()
    for comp in (float(b @ e2), float(b @ e3)):
        if abs(comp) > 1e-12:
            return _sign(lam) * _sign(comp)
    return _sign(lam)


def bell_post(
    state: BellState,
    device: Direction,
    out: int,
    rule: RepeatRule,
    rng: np.random.Generator | None = None,
) -> BellState:
    """Post-measurement hidden-variable state.

    STRICT keeps lambda and the anchor.  ADAPTED redraws lambda and anchors
    the rule on the device axis with the recorded sign, which is what makes
    a later measurement statistically fresh.
    """
    if out not in (1, -1):
        raise ModelError("outcome must be +1 or -1")
    if rule is RepeatRule.STRICT:
        return state
    if rng is None:
        raise ModelError("the adapted rule redraws lambda and needs a generator")
    return BellState(lam=float(rng.uniform(-0.5, 0.5)), anchor=device, anchor_sign=out)


def bohm_draw_xi(rng: np.random.Generator) -> tuple[float, float]:
    """Normalized random two-component vector (u, 1-u), u uniform on (0, 1).

    This is the distribution for which the collapse flow selects branch 1
    with probability exactly J1: R1 > R2 reduces to u < J1.
    """
    u = float(rng.random())
    while u == 0.0:
        u = float(rng.random())
    return u, 1.0 - u


def bohm_evolve(
    state: BohmState,
    dt: float | None = None,
    eps: float = 1e-6,
    max_steps: int = 10_000_000,
    rng: np.random.Generator | None = None,
) -> tuple[int, np.ndarray]:
    """Integrate the two-branch collapse flow until one branch wins.

    dJ1/dt = 2*gamma*(R1 - R2)*J1*J2 with R_i = J_i/|xi_i|^2, and J2 moves
    oppositely, so J1+J2 is conserved up to rounding.  Returns the winning
    branch (1 or 2) and the (steps+1, 2) trajectory.  A fixed-step
    fourth-order scheme is enough: after the conservation reduction this is
    a smooth one-dimensional flow.  The measure-zero stationary start
    (R1 == R2) is resolved by a fair coin, which needs a generator.
    """
    j1, j2 = state.j
    xi1, xi2 = state.xi_sq
    gamma = state.gamma
    if not 0.0 < j1 < 1.0:
        raise ModelError("evolution requires 0 < J1 < 1")
    if not 0.0 < eps < 0.5:
        raise ModelError("eps must lie in (0, 1/2)")
    if dt is None:
        # the flow rate scales like 1/min(xi); shrink the default step for
        # extreme hidden vectors so the fixed-step scheme stays stable
        dt = (0.01 / gamma) * min(1.0, 2.0 * min(xi1, xi2))

    def f(a: float, b: float) -> float:
        return 2.0 * gamma * (a / xi1 - b / xi2) * a * b

    if f(j1, j2) == 0.0:
        if rng is None:
            raise IntegrationError("stationary start (R1 == R2); supply rng for the tie-break")
        winner = 1 if rng.random() < 0.5 else 2
        return winner, np.array([[j1, j2]])

    traj = [(j1, j2)]
    for _ in range(max_steps):
        k1 = f(j1, j2)
        k2 = f(j1 + 0.5 * dt * k1, j2 - 0.5 * dt * k1)
        k3 = f(j1 + 0.5 * dt * k2, j2 - 0.5 * dt * k2)
        k4 = f(j1 + dt * k3, j2 - dt * k3)
        inc = dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        j1 += inc
        j2 -= inc
        traj.append((j1, j2))
        if not math.isfinite(j1) or j1 > 1.5 or j1 < -0.5:
            raise IntegrationError("collapse flow diverged; dt too large for these hidden vectors")
        if min(j1, j2) < eps:
            return (1 if j1 > j2 else 2), np.array(traj)
    raise IntegrationError(
        f"no collapse within {max_steps} steps; decrease dt or increase eps"
    )


# ---------------------------------------------------------------------------
# the uniform measurement-device protocol


def measure(
    model: Model, device: Direction, rng: np.random.Generator
) -> tuple[Outcome, Model]:
    """Point the device along `device`, read the indicator, return the new state.

    The indicator is positive when the observed event points with the device
    and negative against it; models whose event structure has nothing along
    the device axis return NOT_ACTIVATED and are left unchanged.
    """
    kind = model.kind

    if kind in (ModelKind.QUANTUM, ModelKind.NAIVE):
        rho = model.state.rho
        p_up, _ = born(rho, device)
        out = Outcome.UP if rng.random() < p_up else Outcome.DOWN
        return out, Model(kind=kind, rule=model.rule, state=QuantumState(collapse(rho, device, out)))

    if kind is ModelKind.DICE:
        dz = device.dot(Z)
        if abs(abs(dz) - 1.0) > _BLOCH_TOL:
            return Outcome.NOT_ACTIVATED, model
        face = 1 if rng.random() < model.state.p_up() else -1
        out = Outcome.from_sign(face * _sign(dz))
        return out, Model(kind=kind, rule=model.rule, state=DiceState(faces=((face, 1.0),)))

    if kind is ModelKind.EXCLUSIVE:
        model.grid.index_of(device)  # raises GridError when unregistered
        idx, s = _ehvt_sample_index(model.state, rng)
        dot = model.grid.points[idx].dot(device)
        if abs(abs(dot) - 1.0) > _BLOCH_TOL:
            return Outcome.NOT_ACTIVATED, model
        ind = s * _sign(dot)
        if model.rule is RepeatRule.STRICT:
            new_state = EhvtState.point_mass(model.grid, idx, s)
        else:
            new_state = EhvtState.from_bloch(model.grid, ind * device.as_array())
        return Outcome.from_sign(ind), Model(kind=kind, rule=model.rule, state=new_state, grid=model.grid)

    if kind is ModelKind.INDEPENDENT:
        model.grid.index_of(device)
        p_up, _ = ihvt_reduced(model.state, device)
        s = 1 if rng.random() < p_up else -1
        new_state = _ihvt_post(model.state, device, s, model.rule)
        return Outcome.from_sign(s), Model(kind=kind, rule=model.rule, state=new_state, grid=model.grid)

    if kind is ModelKind.BELL:
        s = bell_outcome(model.state.lam, device, model.state.anchor, model.state.anchor_sign)
        new_state = bell_post(model.state, device, s, model.rule, rng)
        return Outcome.from_sign(s), Model(kind=kind, rule=model.rule, state=new_state)

    if kind is ModelKind.BOHM:
        p_up, _ = ihvt_reduced(model.state, device)
        u, v = bohm_draw_xi(rng)
        if p_up <= 0.0:
            s = -1
        elif p_up >= 1.0:
            s = 1
        else:
            winner, _ = bohm_evolve(
                BohmState(j=(p_up, 1.0 - p_up), xi_sq=(u, v), gamma=model.bohm.gamma),
                dt=model.bohm.dt * min(1.0, 2.0 * min(u, v)),
                eps=model.bohm.eps,
                max_steps=model.bohm.max_steps,
                rng=rng,
            )
            s = 1 if winner == 1 else -1
        new_state = _ihvt_post(model.state, device, s, model.rule)
        return Outcome.from_sign(s), Model(
            kind=kind, rule=model.rule, state=new_state, grid=model.grid, bohm=model.bohm
        )

    raise ModelError(f"unknown model kind {kind!r}")


def _ihvt_post(state: IhvtState, device: Direction, sign: int, rule: RepeatRule) -> IhvtState:
    if rule is RepeatRule.STRICT:
        return _ihvt_conditioned(state, device, sign)
    return IhvtState(components=((1.0, (sign * device.x, sign * device.y, sign * device.z)),))


# ---------------------------------------------------------------------------
# the single-hidden-variable strawman


def naive_hvt_sx_check() -> tuple[float, float]:
    """Measure sigma_x on the z-diagonal stand-in for the up-state along x.

    The single-hidden-variable construction stores only z-basis weights
    (1/2, 1/2), so transforming to the x basis yields (0.5, 0.5) where the
    true preparation gives (1, 0).
    """
    rho = DensityMatrix(np.diag([0.5, 0.5]))
    return born(rho, X)


NAIVE_SX_REFERENCE = (1.0, 0.0)


def naive_spectrum_check(theta: float, phi: float) -> tuple[float, ...]:
    """Attainable spin values when operator components carry independent signs.

    Composing s_r from per-axis +/-1/2 eigenvalues gives
    (sin(t)cos(p) +/- sin(t)sin(p) +/- cos(t))/2: four values that are
    generally not limited to +/-1/2.
    """
    sx = math.sin(theta) * math.cos(phi)
    sy = math.sin(theta) * math.sin(phi)
    sz = math.cos(theta)
    values = sorted(0.5 * (sx + a * sy + b * sz) for a in (1.0, -1.0) for b in (1.0, -1.0))
    merged: list[float] = []
    for v in values:
        if not merged or abs(v - merged[-1]) > 1e-12:
            merged.append(v)
    return tuple(merged)


def spectrum_is_two_valued(values: tuple[float, ...], tol: float = 1e-9) -> bool:
    """True when every attainable value is +1/2 or -1/2."""
    return all(abs(abs(v) - 0.5) <= tol for v in values)
