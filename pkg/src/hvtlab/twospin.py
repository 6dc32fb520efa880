"""Singlet-state pair: quantum reference and the classical pair construction.

Both backends expose the same joint-measurement protocol.  The quantum side
works on the full 4x4 density matrix; the classical side stores, for every
pair of axes (r1, r2), the four-outcome weights

    (1 - r1.r2)/4  for equal signs,   (1 + r1.r2)/4  for opposite signs,

and never materializes the product over all axis pairs.  The two routes must
agree to machine precision; the test suite checks this against the 4x4 Born
rule directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qcore import (
    DensityMatrix,
    Direction,
    Outcome,
    born,
    partial_trace,
    up_projector,
)

_JOINT_ORDER = ((1, 1), (-1, -1), (1, -1), (-1, 1))  # uu, dd, ud, du


def singlet_density() -> DensityMatrix:
    """The 4x4 projector onto (|ud> - |du>)/sqrt(2)."""
    up = np.array([1.0, 0.0], dtype=complex)
    down = np.array([0.0, 1.0], dtype=complex)
    psi = (np.kron(up, down) - np.kron(down, up)) / np.sqrt(2.0)
    return DensityMatrix(np.outer(psi, psi.conj()))


@dataclass(frozen=True)
class SingletQM:
    """Quantum singlet; measurement uses the Born rule on the joint state."""

    rho: DensityMatrix = None

    def __post_init__(self) -> None:
        if self.rho is None:
            object.__setattr__(self, "rho", singlet_density())

    def joint_probs(self, r1: Direction, r2: Direction) -> tuple[float, float, float, float]:
        probs = []
        for s1, s2 in _JOINT_ORDER:
            proj = np.kron(
                up_projector(r1 if s1 == 1 else -r1).matrix,
                up_projector(r2 if s2 == 1 else -r2).matrix,
            )
            probs.append(max(0.0, float(np.trace(self.rho.matrix @ proj).real)))
        return tuple(probs)

    def single_marginal(self, r: Direction, spin: int = 1) -> tuple[float, float]:
        reduced = partial_trace(self.rho, keep=spin - 1)
        return born(reduced, r)

    def measure_joint(self, a: Direction, b: Direction, rng: np.random.Generator):
        probs = self.joint_probs(a, b)
        idx = int(rng.choice(4, p=np.asarray(probs) / sum(probs)))
        s1, s2 = _JOINT_ORDER[idx]
        proj = np.kron(
            up_projector(a if s1 == 1 else -a).matrix,
            up_projector(b if s2 == 1 else -b).matrix,
        )
        post = proj @ self.rho.matrix @ proj / probs[idx]
        return (Outcome.from_sign(s1), Outcome.from_sign(s2)), SingletQM(DensityMatrix(post))


@dataclass(frozen=True)
class SingletPair:
    """Classical pair state evaluated lazily through its pair marginals.

    After a joint measurement each spin is re-anchored on its own device
    axis with the recorded sign (the adapted repeat rule), which reproduces
    the quantum post-measurement predictions for every follow-up.
    """

    post_anchors: tuple[tuple[tuple[float, float, float], int], ...] | None = None

    @staticmethod
    def _pair_weights(c: float) -> tuple[float, float, float, float]:
        return ((1.0 - c) / 4.0, (1.0 - c) / 4.0, (1.0 + c) / 4.0, (1.0 + c) / 4.0)

    def _anchor_p_up(self, spin: int, r: Direction) -> float:
        axis, sign = self.post_anchors[spin - 1]
        return (1.0 + sign * (r.x * axis[0] + r.y * axis[1] + r.z * axis[2])) / 2.0

    def joint_probs(self, r1: Direction, r2: Direction) -> tuple[float, float, float, float]:
        if self.post_anchors is None:
            return self._pair_weights(r1.dot(r2))
        p1 = self._anchor_p_up(1, r1)
        p2 = self._anchor_p_up(2, r2)
        return (p1 * p2, (1 - p1) * (1 - p2), p1 * (1 - p2), (1 - p1) * p2)

    def single_marginal(self, r: Direction, spin: int = 1) -> tuple[float, float]:
        if self.post_anchors is None:
            return 0.5, 0.5
        p = self._anchor_p_up(spin, r)
        return p, 1.0 - p

    def measure_joint(self, a: Direction, b: Direction, rng: np.random.Generator):
        probs = self.joint_probs(a, b)
        idx = int(rng.choice(4, p=np.asarray(probs) / sum(probs)))
        s1, s2 = _JOINT_ORDER[idx]
        anchors = (((a.x, a.y, a.z), s1), ((b.x, b.y, b.z), s2))
        return (Outcome.from_sign(s1), Outcome.from_sign(s2)), SingletPair(post_anchors=anchors)


PairState = SingletQM | SingletPair


def joint_probs(state: PairState, r1: Direction, r2: Direction) -> tuple[float, float, float, float]:
    """(p_uu, p_dd, p_ud, p_du) for joint measurement along (r1, r2)."""
    return state.joint_probs(r1, r2)


def correlation(state: PairState, r1: Direction, r2: Direction) -> float:
    """Expectation of the outcome product; -r1.r2 for the fresh singlet."""
    p_uu, p_dd, p_ud, p_du = state.joint_probs(r1, r2)
    return p_uu + p_dd - p_ud - p_du


def single_marginal(state: PairState, r: Direction, spin: int = 1) -> tuple[float, float]:
    """One spin's (p_up, p_down) along r, ignoring the other side's setting."""
    return state.single_marginal(r, spin)


def measure_joint(state: PairState, a: Direction, b: Direction, rng: np.random.Generator):
    """Sample a joint outcome and return it with the post-measurement state."""
    return state.measure_joint(a, b, rng)


def chsh(state: PairState, a: Direction, a2: Direction, b: Direction, b2: Direction) -> float:
    """E(a,b) - E(a,b') + E(a',b) + E(a',b')."""
    return (
        correlation(state, a, b)
        - correlation(state, a, b2)
        + correlation(state, a2, b)
        + correlation(state, a2, b2)
    )


@dataclass(frozen=True)
class PairSelector:
    """Identifier of the pair marginal consulted for settings (a, b).

    The hidden-variable slot actually sampled depends on both device axes;
    two calls differing only in the far setting select different slots even
    when only the near outcome is read.
    """

    spin1_axis: tuple[float, float, float]
    spin2_axis: tuple[float, float, float]

    @property
    def key(self) -> str:
        fmt = lambda v: ",".join(f"{x:.12g}" for x in v)  # noqa: E731
        return f"<{fmt(self.spin1_axis)}|{fmt(self.spin2_axis)}>"


def nonlocality_witness(state: PairState, a: Direction, b: Direction) -> PairSelector:
    """Which hidden-variable slot a joint measurement along (a, b) consults."""
    return PairSelector(spin1_axis=(a.x, a.y, a.z), spin2_axis=(b.x, b.y, b.z))


@dataclass(frozen=True)
class FactorizationAudit:
    """Outcome products factor per spin, but the slot selection is global."""

    selector: PairSelector
    selector_alt: PairSelector
    product_factorizes: bool
    selector_depends_on_far_setting: bool
    samples: int


def factorization_audit(
    state: PairState,
    a: Direction,
    b: Direction,
    b_alt: Direction,
    rng: np.random.Generator,
    samples: int = 256,
) -> FactorizationAudit:
    """Check the locality-shaped factorization against the slot selection.

    Each sample draws the hidden value of the (a, b) slot: a pair of signs.
    Every side's local readout consumes only its own setting and the shared
    hidden value, and the product of the local readouts reproduces the joint
    outcome product -- the expression looks local.  The nonlocal step is the
    slot selection itself: replacing b with b_alt changes which slot is
    sampled even though spin 1 is untouched.
    """
    sel = nonlocality_witness(state, a, b)

    def local_readout(side: int, setting: Direction, hidden: tuple[int, int]) -> int:
        axis = sel.spin1_axis if side == 1 else sel.spin2_axis
        if abs(setting.x * axis[0] + setting.y * axis[1] + setting.z * axis[2] - 1.0) > 1e-9:
            raise ValueError("slot does not carry this side's setting")
        return hidden[side - 1]

    factorizes = True
    for _ in range(samples):
        (o1, o2), _post = state.measure_joint(a, b, rng)
        hidden = (o1.spin, o2.spin)  # the sampled value of the (a, b) slot
        joint_product = o1.spin * o2.spin
        local_product = local_readout(1, a, hidden) * local_readout(2, b, hidden)
        factorizes &= joint_product == local_product
    sel_alt = nonlocality_witness(state, a, b_alt)
    return FactorizationAudit(
        selector=sel,
        selector_alt=sel_alt,
        product_factorizes=factorizes,
        selector_depends_on_far_setting=sel.key != sel_alt.key,
        samples=samples,
    )


__all__ = [
    "FactorizationAudit",
    "PairSelector",
    "SingletPair",
    "SingletQM",
    "chsh",
    "correlation",
    "factorization_audit",
    "joint_probs",
    "measure_joint",
    "nonlocality_witness",
    "single_marginal",
    "singlet_density",
]
