"""Trial engines behind the experiment harness.

Two routes compute every protocol statistic:

  * a chunked, vectorized Monte Carlo engine whose per-trial semantics match
    ``models.measure`` (cross-checked in the test suite), and
  * an exact engine that enumerates outcome branches in closed form.

Chunks are fixed-size and each one derives its generator from
(seed, stream..., chunk index) through ``numpy.random.SeedSequence``, so
aggregated counts are identical for any worker count and any scheduling.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from .grid import DirectionGrid
from .models import (
    BohmParams,
    IntegrationError,
    ModelError,
    ModelKind,
    Preparation,
    RepeatRule,
    complement_frame,
)
from .qcore import Direction

CHUNK_TRIALS = 8192
_ALIGN_TOL = 1e-9
_C_TOL = 1e-12


def stream_rng(seed: int, stream: Sequence[int]) -> np.random.Generator:
    """Generator for one logical stream, stable across runs and platforms."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(s) for s in stream)))


def _chunks(n: int) -> list[tuple[int, int]]:
    return [(ci, min(CHUNK_TRIALS, n - lo)) for ci, lo in enumerate(range(0, n, CHUNK_TRIALS))]


def _run_chunked(task, n: int, workers: int = 1):
    """Map `task(chunk_index, count)` over fixed chunks and sum the results."""
    parts = _chunks(n)
    if workers <= 1:
        results = [task(ci, k) for ci, k in parts]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda p: task(p[0], p[1]), parts))
    total = results[0]
    for r in results[1:]:
        total = total + r
    return total


@dataclass
class SingleCounts:
    """Counts from one-shot measurements.

    `p_trials` is the number of indicator draws behind `positive`; it equals
    `activated` except for the exclusive-event model, whose indicator is
    sampled conditionally on activation so that P carries n observations.
    """

    n: int = 0
    activated: int = 0
    positive: int = 0
    p_trials: int = 0

    def __add__(self, other: "SingleCounts") -> "SingleCounts":
        return SingleCounts(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))


@dataclass
class RepeatCounts:
    """Counts from two-stage measurements, split by first indicator sign."""

    n: int = 0
    act1: int = 0
    pos1: int = 0
    p1_trials: int = 0
    fed: int = 0
    act2: int = 0
    pos2: int = 0
    p2_trials: int = 0
    n_plus: int = 0
    act2_plus: int = 0
    pos2_plus: int = 0
    p2_trials_plus: int = 0
    n_minus: int = 0
    act2_minus: int = 0
    pos2_minus: int = 0
    p2_trials_minus: int = 0
    mismatches: int = 0

    def __add__(self, other: "RepeatCounts") -> "RepeatCounts":
        return RepeatCounts(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))


def _prep_arrays(prep: Preparation) -> tuple[np.ndarray, np.ndarray]:
    weights = np.array([w for w, _ in prep.components])
    blochs = np.array([m for _, m in prep.components])
    return weights, blochs


def _unit_anchors(blochs: np.ndarray) -> list[Direction]:
    norms = np.linalg.norm(blochs, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise ModelError("model E preparations must mix unit orientations")
    return [Direction.from_vector(m) for m in blochs]


def _signs(mask: np.ndarray) -> np.ndarray:
    return np.where(mask, 1, -1)


def _sign_arr(values: np.ndarray) -> np.ndarray:
    return np.where(values >= 0.0, 1, -1)


def _bell_vec(lam: np.ndarray, c: np.ndarray, fallback: np.ndarray | int) -> np.ndarray:
    """Vectorized deterministic outcome of the lambda rule."""
    det = _sign_arr(lam + np.abs(c) / 2.0) * _sign_arr(c)
    orth = _sign_arr(lam) * fallback
    return np.where(np.abs(c) > _C_TOL, det, orth)


def _fallback_sign(anchor: Direction, device: Direction) -> int:
    e2, e3 = complement_frame(anchor)
    b = device.as_array()
    for comp in (float(b @ e2), float(b @ e3)):
        if abs(comp) > _C_TOL:
            return 1 if comp >= 0 else -1
    return 1


def _aligned_sign(d1: Direction, d2: Direction) -> int:
    """+1/-1 when d2 is (anti)parallel to d1, else 0."""
    dot = d1.dot(d2)
    if abs(dot - 1.0) < _ALIGN_TOL:
        return 1
    if abs(dot + 1.0) < _ALIGN_TOL:
        return -1
    return 0


def stable_dt(base_dt: float, xi1, xi2):
    """Per-trajectory step keeping the flow inside the integrator's stability.

    The collapse rate scales like 1/min(xi1, xi2), so the base step (the
    gamma*dt = 0.01 default) is shrunk proportionally for extreme hidden
    vectors; the step count per trajectory stays roughly constant.
    """
    return base_dt * np.minimum(1.0, 2.0 * np.minimum(xi1, xi2))


def bohm_winner_batch(
    j1: np.ndarray,
    u: np.ndarray,
    params: BohmParams,
    rng: np.random.Generator,
) -> tuple[np.ndarray, dict]:
    """Integrate the collapse flow for a batch of trials.

    Returns indicator signs (+1 branch 1, -1 branch 2) and integration
    statistics: the worst conservation drift, the count of non-monotone
    steps, and the largest step count.  Degenerate inputs (J1 in {0, 1}) are
    decided immediately; exactly stationary starts get a fair coin.
    """
    n = len(j1)
    out = np.zeros(n, dtype=np.int64)
    out[j1 <= 0.0] = -1
    out[j1 >= 1.0] = 1
    live = np.nonzero(out == 0)[0]

    a = j1[live].copy()
    b = 1.0 - a
    xi1 = u[live]
    xi2 = 1.0 - xi1
    gamma, eps = params.gamma, params.eps
    dt = stable_dt(params.dt, xi1, xi2)

    def f(x, y):
        return 2.0 * gamma * (x / xi1 - y / xi2) * x * y

    f0 = f(a, b)
    ties = f0 == 0.0
    if np.any(ties):
        coins = _signs(rng.random(int(ties.sum())) < 0.5)
        out[live[ties]] = coins
        keep = ~ties
        live, a, b, xi1, xi2, dt, f0 = (
            live[keep], a[keep], b[keep], xi1[keep], xi2[keep], dt[keep], f0[keep],
        )

    # f reads xi1/xi2 from the enclosing scope, so compaction below keeps it
    # consistent without rebinding.
    direction = _sign_arr(f0).astype(float)
    drift_max = 0.0
    mono_violations = 0
    steps = 0
    block = 16
    while live.size:
        for _ in range(block):
            k1 = f(a, b)
            k2 = f(a + 0.5 * dt * k1, b - 0.5 * dt * k1)
            k3 = f(a + 0.5 * dt * k2, b - 0.5 * dt * k2)
            k4 = f(a + dt * k3, b - dt * k3)
            inc = dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            a += inc
            b -= inc
            mono_violations += int(np.count_nonzero(inc * direction < -1e-15))
        steps += block
        if not np.all(np.isfinite(a)) or float(np.max(a)) > 1.5 or float(np.min(a)) < -0.5:
            raise IntegrationError("collapse flow diverged; dt too large for these hidden vectors")
        drift_max = max(drift_max, float(np.max(np.abs(a + b - 1.0))))
        done = (a < eps) | (b < eps)
        if np.any(done):
            out[live[done]] = _signs(a[done] > b[done])
            keep = ~done
            live, a, b, xi1, xi2, dt, direction = (
                live[keep], a[keep], b[keep], xi1[keep], xi2[keep], dt[keep], direction[keep],
            )
        if steps > params.max_steps:
            raise IntegrationError(f"{live.size} trajectories still open after {steps} steps")
    return out, {"drift_max": drift_max, "mono_violations": mono_violations, "steps": steps}


# ---------------------------------------------------------------------------
# Monte Carlo kernels (one chunk each); semantics mirror models.measure


def _comp_index(rng, weights: np.ndarray, k: int) -> np.ndarray:
    if len(weights) == 1:
        return np.zeros(k, dtype=np.int64)
    return rng.choice(len(weights), size=k, p=weights)


def _single_chunk(kind, prep, rule, device, grid, bohm, rng, k) -> SingleCounts:
    weights, blochs = _prep_arrays(prep)
    dots = blochs @ device.as_array()

    if kind in (ModelKind.QUANTUM, ModelKind.NAIVE):
        bloch = prep.mean_bloch()
        if kind is ModelKind.NAIVE:
            bloch = np.array([0.0, 0.0, bloch[2]])
        p_up = (1.0 + float(bloch @ device.as_array())) / 2.0
        pos = int(np.count_nonzero(rng.random(k) < p_up))
        return SingleCounts(k, k, pos, k)

    if kind is ModelKind.DICE:
        aligned = _aligned_sign(Direction(0.0, 0.0, 1.0), device)
        if aligned == 0:
            return SingleCounts(k, 0, 0, 0)
        p_face = (1.0 + float(prep.mean_bloch()[2])) / 2.0
        faces = _signs(rng.random(k) < p_face)
        pos = int(np.count_nonzero(faces * aligned > 0))
        return SingleCounts(k, k, pos, k)

    if kind is ModelKind.EXCLUSIVE:
        q = 2.0 / len(grid)
        act = int(np.count_nonzero(rng.random(k) < q))
        g = _signs(rng.random(k) < 0.5)
        c = float(prep.mean_bloch() @ device.as_array())
        s = _signs(rng.random(k) < (1.0 + g * c) / 2.0)
        pos = int(np.count_nonzero(s * g > 0))
        return SingleCounts(k, act, pos, k)

    if kind is ModelKind.INDEPENDENT:
        comp = _comp_index(rng, weights, k)
        s = _signs(rng.random(k) < (1.0 + dots[comp]) / 2.0)
        return SingleCounts(k, k, int(np.count_nonzero(s > 0)), k)

    if kind is ModelKind.BELL:
        comp = _comp_index(rng, weights, k)
        lam = rng.uniform(-0.5, 0.5, k)
        fallback = np.array([_fallback_sign(a, device) for a in _unit_anchors(blochs)])
        s = _bell_vec(lam, dots[comp], fallback[comp])
        return SingleCounts(k, k, int(np.count_nonzero(s > 0)), k)

    if kind is ModelKind.BOHM:
        comp = _comp_index(rng, weights, k)
        j1 = (1.0 + dots[comp]) / 2.0
        u = rng.random(k)
        s, _ = bohm_winner_batch(j1, u, bohm, rng)
        return SingleCounts(k, k, int(np.count_nonzero(s > 0)), k)

    raise ModelError(f"no Monte Carlo kernel for {kind!r}")


def _repeat_chunk(kind, prep, rule, d1, d2, grid, bohm, rng, k) -> RepeatCounts:
    weights, blochs = _prep_arrays(prep)
    dots1 = blochs @ d1.as_array()
    dots2 = blochs @ d2.as_array()
    dot12 = d1.dot(d2)
    align12 = _aligned_sign(d1, d2)

    def assemble(s1, s2, act2_mask, p1t, p2t_mask) -> RepeatCounts:
        # s1/s2 are +/-1 indicator arrays over the fed trials; act2_mask marks
        # second-stage activation; p2t_mask marks trials contributing to P2.
        fed = len(s1)
        plus = s1 > 0
        both = act2_mask & p2t_mask
        return RepeatCounts(
            n=k,
            act1=fed,
            pos1=int(np.count_nonzero(s1 > 0)),
            p1_trials=p1t,
            fed=fed,
            act2=int(np.count_nonzero(act2_mask)),
            pos2=int(np.count_nonzero((s2 > 0) & p2t_mask)),
            p2_trials=int(np.count_nonzero(p2t_mask)),
            n_plus=int(np.count_nonzero(plus)),
            act2_plus=int(np.count_nonzero(act2_mask & plus)),
            pos2_plus=int(np.count_nonzero((s2 > 0) & p2t_mask & plus)),
            p2_trials_plus=int(np.count_nonzero(p2t_mask & plus)),
            n_minus=int(np.count_nonzero(~plus)),
            act2_minus=int(np.count_nonzero(act2_mask & ~plus)),
            pos2_minus=int(np.count_nonzero((s2 > 0) & p2t_mask & ~plus)),
            p2_trials_minus=int(np.count_nonzero(p2t_mask & ~plus)),
            mismatches=int(np.count_nonzero((s2 != s1) & both)),
        )

    full = np.ones(k, dtype=bool)

    if kind in (ModelKind.QUANTUM, ModelKind.NAIVE):
        bloch = prep.mean_bloch()
        if kind is ModelKind.NAIVE:
            bloch = np.array([0.0, 0.0, bloch[2]])
        p1 = (1.0 + float(bloch @ d1.as_array())) / 2.0
        s1 = _signs(rng.random(k) < p1)
        s2 = _signs(rng.random(k) < (1.0 + s1 * dot12) / 2.0)
        return assemble(s1, s2, full, k, full)

    if kind is ModelKind.DICE:
        a1 = _aligned_sign(Direction(0.0, 0.0, 1.0), d1)
        if a1 == 0:
            return RepeatCounts(n=k)
        a2 = _aligned_sign(Direction(0.0, 0.0, 1.0), d2)
        p_face = (1.0 + float(prep.mean_bloch()[2])) / 2.0
        faces = _signs(rng.random(k) < p_face)
        s1 = faces * a1
        if a2 == 0:
            return assemble(s1, s1, np.zeros(k, bool), k, np.zeros(k, bool))
        return assemble(s1, faces * a2, full, k, full)

    if kind is ModelKind.EXCLUSIVE:
        # Stage indicators are sampled conditionally on activation; the
        # unconditioned activation ratios come from separate Bernoulli draws.
        q = 2.0 / len(grid)
        c1 = float(prep.mean_bloch() @ d1.as_array())
        g1 = _signs(rng.random(k) < 0.5)
        s1 = _signs(rng.random(k) < (1.0 + g1 * c1) / 2.0) * g1
        if rule is RepeatRule.STRICT:
            if align12 == 0:
                counts = assemble(s1, s1, np.zeros(k, bool), k, np.zeros(k, bool))
            else:
                counts = assemble(s1, s1 * align12, full, k, full)
        else:
            act2_mask = rng.random(k) < q
            g2 = _signs(rng.random(k) < 0.5)
            s2 = _signs(rng.random(k) < (1.0 + g2 * s1 * dot12) / 2.0) * g2
            counts = assemble(s1, s2, act2_mask, k, full)
        counts.act1 = int(np.count_nonzero(rng.random(k) < q))
        return counts

    if kind is ModelKind.INDEPENDENT or kind is ModelKind.BOHM:
        comp = _comp_index(rng, weights, k)
        p1 = (1.0 + dots1[comp]) / 2.0
        if kind is ModelKind.BOHM:
            s1, _ = bohm_winner_batch(p1, rng.random(k), bohm, rng)
        else:
            s1 = _signs(rng.random(k) < p1)
        if rule is RepeatRule.STRICT:
            p2 = (1.0 + dots2[comp]) / 2.0 if align12 == 0 else (1.0 + s1 * align12) / 2.0
        else:
            p2 = (1.0 + s1 * dot12) / 2.0
        if kind is ModelKind.BOHM:
            s2, _ = bohm_winner_batch(p2, rng.random(k), bohm, rng)
        else:
            s2 = _signs(rng.random(k) < p2)
        return assemble(s1, s2, full, k, full)

    if kind is ModelKind.BELL:
        comp = _comp_index(rng, weights, k)
        lam = rng.uniform(-0.5, 0.5, k)
        anchors = _unit_anchors(blochs)
        fb1 = np.array([_fallback_sign(a, d1) for a in anchors])
        s1 = _bell_vec(lam, dots1[comp], fb1[comp])
        if rule is RepeatRule.STRICT:
            fb2 = np.array([_fallback_sign(a, d2) for a in anchors])
            s2 = _bell_vec(lam, dots2[comp], fb2[comp])
        else:
            lam2 = rng.uniform(-0.5, 0.5, k)
            fb2 = _fallback_sign(d1, d2)
            s2 = _bell_vec(lam2, s1 * dot12, fb2)
        return assemble(s1, s2, full, k, full)

    raise ModelError(f"no Monte Carlo kernel for {kind!r}")


def mc_single(
    kind: ModelKind,
    prep: Preparation,
    rule: RepeatRule,
    device: Direction,
    grid: DirectionGrid | None,
    n: int,
    seed: int,
    stream: Sequence[int],
    bohm: BohmParams = BohmParams(),
    workers: int = 1,
) -> SingleCounts:
    def task(ci, k):
        rng = stream_rng(seed, (*stream, ci))
        return _single_chunk(kind, prep, rule, device, grid, bohm, rng, k)

    return _run_chunked(task, n, workers)


def mc_repeat(
    kind: ModelKind,
    prep: Preparation,
    rule: RepeatRule,
    d1: Direction,
    d2: Direction,
    grid: DirectionGrid | None,
    n: int,
    seed: int,
    stream: Sequence[int],
    bohm: BohmParams = BohmParams(),
    workers: int = 1,
) -> RepeatCounts:
    def task(ci, k):
        rng = stream_rng(seed, (*stream, ci))
        return _repeat_chunk(kind, prep, rule, d1, d2, grid, bohm, rng, k)

    return _run_chunked(task, n, workers)


def mc_categorical(
    probs: Sequence[float],
    n: int,
    seed: int,
    stream: Sequence[int],
    workers: int = 1,
) -> np.ndarray:
    """Multinomial counts over a fixed outcome distribution."""
    p = np.asarray(probs, dtype=float)

    def task(ci, k):
        rng = stream_rng(seed, (*stream, ci))
        return rng.multinomial(k, p)

    return _run_chunked(task, n, workers)


# ---------------------------------------------------------------------------
# exact engine: closed-form branch enumeration

Branch = tuple[float, int | None, "object"]


@dataclass(frozen=True)
class _BlochExact:
    """Quantum 2x2 state as a bloch vector; Born rule plus collapse."""

    bloch: tuple[float, float, float]

    def branches(self, device: Direction, rule: RepeatRule) -> list[Branch]:
        d = device.as_array()
        p = (1.0 + float(np.asarray(self.bloch) @ d)) / 2.0
        out: list[Branch] = []
        if p > 0.0:
            out.append((p, 1, _BlochExact(tuple(d))))
        if p < 1.0:
            out.append((1.0 - p, -1, _BlochExact(tuple(-d))))
        return out


@dataclass(frozen=True)
class _DiceExact:
    p_up: float
    frozen: int | None = None

    def branches(self, device: Direction, rule: RepeatRule) -> list[Branch]:
        a = _aligned_sign(Direction(0.0, 0.0, 1.0), device)
        if a == 0:
            return [(1.0, None, self)]
        if self.frozen is not None:
            return [(1.0, self.frozen * a, self)]
        out: list[Branch] = []
        if self.p_up > 0.0:
            out.append((self.p_up, a, _DiceExact(self.p_up, frozen=1)))
        if self.p_up < 1.0:
            out.append((1.0 - self.p_up, -a, _DiceExact(self.p_up, frozen=-1)))
        return out


@dataclass(frozen=True)
class _EhvtExact:
    m: int
    bloch: tuple[float, float, float] | None = None
    point: tuple[tuple[float, float, float], int] | None = None

    def branches(self, device: Direction, rule: RepeatRule) -> list[Branch]:
        d = device.as_array()
        if self.point is not None:
            axis, s = self.point
            a = _aligned_sign(Direction.from_vector(axis, normalize=True), device)
            if a == 0:
                return [(1.0, None, self)]
            return [(1.0, s * a, self)]
        q = 2.0 / self.m
        c = float(np.asarray(self.bloch) @ d)
        out: list[Branch] = [(1.0 - q, None, self)]
        # Activated elementary events: direction g*d with value s, mass
        # (1/M)(1 + s*g*c)/2; the indicator reads s*g.
        for g in (1, -1):
            for s in (1, -1):
                prob = (1.0 / self.m) * (1.0 + s * g * c) / 2.0
                if prob <= 0.0:
                    continue
                ind = s * g
                if rule is RepeatRule.STRICT:
                    post = _EhvtExact(self.m, point=(tuple(g * d), s))
                else:
                    post = _EhvtExact(self.m, bloch=tuple(ind * d))
                out.append((prob, ind, post))
        return out


@dataclass(frozen=True)
class _IhvtExact:
    components: tuple[tuple[float, tuple[float, float, float]], ...]
    frozen_axes: tuple[tuple[tuple[float, float, float], int], ...] = ()

    def branches(self, device: Direction, rule: RepeatRule) -> list[Branch]:
        d = device.as_array()
        for axis, s in self.frozen_axes:
            a = _aligned_sign(Direction.from_vector(axis, normalize=True), device)
            if a != 0:
                return [(1.0, s * a, self)]
        out: list[Branch] = []
        for sign in (1, -1):
            liks = [(w * (1.0 + sign * float(np.asarray(m) @ d)) / 2.0, m) for w, m in self.components]
            p = sum(w for w, _ in liks)
            if p <= 0.0:
                continue
            if rule is RepeatRule.STRICT:
                comps = tuple((w / p, m) for w, m in liks if w > 0.0)
                post = _IhvtExact(comps, self.frozen_axes + ((tuple(d), sign),))
            else:
                post = _IhvtExact(((1.0, tuple(sign * d)),))
            out.append((p, sign, post))
        return out


def _split_segments(segments, thr):
    below, above = [], []
    for lo, hi in segments:
        if hi <= thr:
            below.append((lo, hi))
        elif lo >= thr:
            above.append((lo, hi))
        else:
            below.append((lo, thr))
            above.append((thr, hi))
    return tuple(below), tuple(above)


def _measure_of(segments) -> float:
    return sum(hi - lo for lo, hi in segments)


@dataclass(frozen=True)
class _BellExact:
    """Uniform lambda restricted to a union of intervals of [-1/2, 1/2]."""

    segments: tuple[tuple[float, float], ...]
    anchor: tuple[float, float, float]
    sign: int = 1

    def branches(self, device: Direction, rule: RepeatRule) -> list[Branch]:
        anchor_dir = Direction.from_vector(self.anchor, normalize=True)
        c = self.sign * device.dot(anchor_dir)
        if abs(c) > _C_TOL:
            thr = -abs(c) / 2.0
            up_sign = 1 if c > 0 else -1
        else:
            thr = 0.0
            up_sign = _fallback_sign(anchor_dir, device)
        below, above = _split_segments(self.segments, thr)
        total = _measure_of(self.segments)
        out: list[Branch] = []
        for segs, ind in ((above, up_sign), (below, -up_sign)):
            w = _measure_of(segs)
            if w <= 0.0:
                continue
            if rule is RepeatRule.STRICT:
                post = _BellExact(segs, self.anchor, self.sign)
            else:
                post = _BellExact(((-0.5, 0.5),), (device.x, device.y, device.z), ind)
            out.append((w / total, ind, post))
        return out


@dataclass(frozen=True)
class _MixExact:
    parts: tuple[tuple[float, object], ...]

    def branches(self, device: Direction, rule: RepeatRule) -> list[Branch]:
        out: list[Branch] = []
        for w, ens in self.parts:
            for p, ind, post in ens.branches(device, rule):
                out.append((w * p, ind, post))
        return out


def build_exact(
    kind: ModelKind,
    prep: Preparation,
    grid: DirectionGrid | None = None,
):
    """Exact ensemble for a kind/preparation pair."""
    if kind is ModelKind.QUANTUM:
        return _BlochExact(tuple(prep.mean_bloch()))
    if kind is ModelKind.NAIVE:
        return _BlochExact((0.0, 0.0, float(prep.mean_bloch()[2])))
    if kind is ModelKind.DICE:
        b = prep.mean_bloch()
        if abs(b[0]) > 1e-9 or abs(b[1]) > 1e-9:
            raise ModelError("the dice only represents z-diagonal preparations")
        return _DiceExact((1.0 + float(b[2])) / 2.0)
    if kind is ModelKind.EXCLUSIVE:
        m = len(grid) if grid is not None else 0
        if m == 0:
            raise ModelError("the exclusive-event model needs a direction grid")
        return _EhvtExact(m, bloch=tuple(prep.mean_bloch()))
    if kind in (ModelKind.INDEPENDENT, ModelKind.BOHM):
        return _IhvtExact(tuple(prep.components))
    if kind is ModelKind.BELL:
        parts = []
        for w, m in prep.components:
            if abs(math.sqrt(m[0] ** 2 + m[1] ** 2 + m[2] ** 2) - 1.0) > 1e-9:
                raise ModelError("model E preparations must mix unit orientations")
            parts.append((w, _BellExact(((-0.5, 0.5),), m, 1)))
        return _MixExact(tuple(parts))
    raise ModelError(f"no exact ensemble for {kind!r}")


@dataclass(frozen=True)
class ExactSingle:
    q: float
    p: float | None


@dataclass(frozen=True)
class ExactRepeat:
    q1: float
    p1: float | None
    q2: float | None
    p2: float | None
    by_first: dict


def exact_single(ens, device: Direction, rule: RepeatRule) -> ExactSingle:
    q = 0.0
    pos = 0.0
    for prob, ind, _ in ens.branches(device, rule):
        if ind is None:
            continue
        q += prob
        if ind == 1:
            pos += prob
    return ExactSingle(q=q, p=(pos / q if q > 0.0 else None))


def exact_repeat(ens, d1: Direction, d2: Direction, rule: RepeatRule) -> ExactRepeat:
    w_act = 0.0
    pos1 = 0.0
    act2 = 0.0
    pos2 = 0.0
    by = {1: [0.0, 0.0, 0.0], -1: [0.0, 0.0, 0.0]}  # weight, act2, pos2
    for prob, ind, post in ens.branches(d1, rule):
        if ind is None:
            continue
        w_act += prob
        if ind == 1:
            pos1 += prob
        by[ind][0] += prob
        for prob2, ind2, _ in post.branches(d2, rule):
            if ind2 is None:
                continue
            act2 += prob * prob2
            by[ind][1] += prob * prob2
            if ind2 == 1:
                pos2 += prob * prob2
                by[ind][2] += prob * prob2
    if w_act <= 0.0:
        return ExactRepeat(q1=0.0, p1=None, q2=None, p2=None, by_first={})
    by_first = {}
    for s, (w, a2, p2) in by.items():
        if w > 0.0:
            by_first[s] = {
                "weight": w / w_act,
                "q2": a2 / w,
                "p2": (p2 / a2 if a2 > 0.0 else None),
            }
    return ExactRepeat(
        q1=w_act,
        p1=pos1 / w_act,
        q2=act2 / w_act,
        p2=(pos2 / act2 if act2 > 0.0 else None),
        by_first=by_first,
    )
