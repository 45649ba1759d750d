"""Running schedules over the homodyne outcome space.

Everything here is vectorized over outcome batches: an ``(G, N)`` array of
outcomes yields ``G`` conditioned states at once. Grids are split into chunks
that can be evaluated by a thread pool; results are reassembled in grid order
before any reduction, so integrals do not depend on the number of workers.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import cvstate, ops
from .cvstate import FockVector, PolyGaussian
from .exceptions import ScheduleMismatchError
from .ops import Displacement
from .schedule import Schedule

log = logging.getLogger(__name__)

MAX_GRID_STEPS = 3
DEFAULT_L = 6.0
DEFAULT_H_1D = 0.02
DEFAULT_H_2D = 0.05
CHUNK = 20000


# -- execution -------------------------------------------------------------------


def _apply_step(step, state: PolyGaussian, outcome) -> PolyGaussian:
    state = ops.displace(step.displacement, state)
    if step.light is None:
        return ops.theta_s(replace(step.theta, p_L=outcome), state)
    kernel = ops.theta_from_light(step.light, step.theta.kappa, outcome)
    return cvstate.multiply(kernel, state)


def execute(schedule: Schedule, outcomes) -> tuple:
    """Run the schedule for given outcomes.

    ``outcomes`` has shape ``(..., n_steps)``. Returns the unnormalized final
    state (batched over the leading dimensions) and its squared norm, which is
    the joint outcome density.
    """
    outcomes = np.asarray(outcomes, dtype=float)
    if outcomes.ndim == 0 or outcomes.shape[-1] != schedule.n_steps:
        if not (schedule.n_steps == 0 and outcomes.size == 0):
            raise ScheduleMismatchError(
                f"expected {schedule.n_steps} outcomes per run, got shape {outcomes.shape}"
            )
    state = schedule.initial_state()
    for j, step in enumerate(schedule.steps):
        state = _apply_step(step, state, outcomes[..., j])
    state = ops.displace(schedule.final_displacement, state)
    return state, cvstate.norm_sq(state)


# -- grids -------------------------------------------------------------------------


@dataclass(frozen=True)
class OutcomeGrid:
    """Uniform symmetric grid ``-L..L`` with spacing ``h`` in each outcome."""

    L: float = DEFAULT_L
    h: float = DEFAULT_H_1D
    dims: int = 1

    def __post_init__(self):
        if self.h <= 0 or self.L < 0:
            raise ValueError("grid needs h > 0 and L >= 0")
        if self.dims > MAX_GRID_STEPS:
            raise ValueError(f"tensor grids support at most {MAX_GRID_STEPS} outcomes")

    @property
    def axis(self) -> np.ndarray:
        n = int(round(self.L / self.h))
        return self.h * np.arange(-n, n + 1)

    @property
    def axis_weights(self) -> np.ndarray:
        w = np.full(self.axis.size, self.h)
        if w.size > 1:
            w[0] = w[-1] = self.h / 2
        return w

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*([self.axis] * self.dims), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def weights(self) -> np.ndarray:
        w = self.axis_weights
        total = w
        for _ in range(self.dims - 1):
            total = np.multiply.outer(total, w)
        return np.ravel(total)

    @classmethod
    def default(cls, schedule: Schedule) -> "OutcomeGrid":
        """Default grid sized to the light's momentum spread.

        ``L`` is at least 6 and widened to four widths of the conditioned
        outcome density, which for x-squeezed light extends as ``exp(r)``.
        """
        dims = schedule.n_steps
        h = DEFAULT_H_1D if dims <= 1 else DEFAULT_H_2D
        width = 0.0
        for step in schedule.steps:
            light = step.light if step.light is not None else ops.light_pssv(step.theta.r)
            spread = 1.0 / np.real(1.0 / light.gamma)
            width = max(width, math.sqrt(spread + step.theta.kappa**2))
        L = max(DEFAULT_L, 4.0 * width)
        L = h * math.ceil(L / h - 1e-9)
        return cls(L=L, h=h, dims=max(dims, 1))


def _chunked(func, n: int, workers: int):
    if n == 0:
        return [np.zeros(0, dtype=complex) for _ in func(0, 0)]
    bounds = [(i, min(i + CHUNK, n)) for i in range(0, n, CHUNK)]
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: func(*b), bounds))
    else:
        parts = [func(*b) for b in bounds]
    return [np.concatenate([p[k] for p in parts]) for k in range(len(parts[0]))]


def completeness_check(
    schedule: Schedule, grid: Optional[OutcomeGrid] = None, workers: int = 1
) -> float:
    """Trapezoid integral of the joint outcome density over the grid."""
    grid = grid or OutcomeGrid.default(schedule)
    if grid.dims != schedule.n_steps:
        raise ScheduleMismatchError("grid dimension must match the number of steps")
    pts = grid.points()

    def dens(lo, hi):
        return (execute(schedule, pts[lo:hi])[1],)

    (density,) = _chunked(dens, len(pts), workers)
    return float(np.sum(density * grid.weights()))


# -- feedback -------------------------------------------------------------------


def _fidelity_after(state: PolyGaussian, nsq, target: np.ndarray, delta) -> np.ndarray:
    moved = ops.displace(Displacement(delta), state)
    amps = cvstate.to_fock(moved, target.size - 1).amps
    return np.abs(amps @ np.conj(target)) ** 2 / nsq


FEEDBACK_STARTS = (0.0, 0.5, -0.5, 0.5j, -0.5j)


def _pattern_search(state, nsq, target, real_only, step0=0.5, shrink=0.5, tol=1e-6):
    """Compass search over complex ``delta``, vectorized across the batch."""
    n = state.batch_shape[0]
    best_val = np.full(n, -np.inf)
    best_pos = np.zeros(n, dtype=complex)
    dirs = (1.0, -1.0) if real_only else (1.0, -1.0, 1j, -1j)
    starts = [s for s in FEEDBACK_STARTS if not (real_only and np.imag(s) != 0)]
    for start in starts:
        pos = np.full(n, start, dtype=complex)
        val = _fidelity_after(state, nsq, target, pos)
        step = np.full(n, step0)
        active = np.arange(n)
        while active.size:
            sub = state[active]
            sub_nsq = nsq[active]
            cur = val[active]
            moved = pos[active].copy()
            for d in dirs:
                trial = pos[active] + d * step[active]
                f = _fidelity_after(sub, sub_nsq, target, trial)
                better = f > cur
                cur = np.where(better, f, cur)
                moved = np.where(better, trial, moved)
            improved = cur > val[active]
            val[active] = cur
            pos[active] = moved
            step[active[~improved]] *= shrink
            active = active[step[active] >= tol]
        better = val > best_val
        best_val = np.where(better, val, best_val)
        best_pos = np.where(better, pos, best_pos)
    return best_pos, np.clip(best_val, 0.0, 1.0)


def feedback_displacement(state: PolyGaussian, target, real_only: bool = False) -> tuple:
    """Displacement maximizing the fidelity of ``displace(delta, state)``.

    Pattern search (initial step 0.5, halving, stop below 1e-6) from
    ``delta = 0, +-0.5, +-0.5i``. Returns ``(Displacement, fidelity)``.
    """
    t = _unit(target)
    batched = state.batch_shape != ()
    st = state if batched else PolyGaussian(state.coeffs[None], state.gamma[None], state.beta[None])
    nsq = np.atleast_1d(cvstate.norm_sq(st))
    pos, val = _pattern_search(st, nsq, t, real_only)
    if batched:
        return Displacement(pos), val
    return Displacement(complex(pos[0])), float(val[0])


def _unit(target) -> np.ndarray:
    t = np.asarray(getattr(target, "amps", target), dtype=complex)
    return t / np.linalg.norm(t)


# -- grid evaluation --------------------------------------------------------------


@dataclass
class GridEvaluation:
    """Per-outcome density and fidelity on a grid.

    Points whose density is below ``min_density`` times the maximum are not
    scored; their fidelity is recorded as 0.
    """

    points: np.ndarray
    weights: np.ndarray
    density: np.ndarray
    fidelity: np.ndarray
    feedback_delta: Optional[np.ndarray]
    meta: dict = field(default_factory=dict)

    @property
    def mass(self) -> float:
        return float(np.sum(self.density * self.weights))


def evaluate_grid(
    schedule: Schedule,
    target,
    grid: Optional[OutcomeGrid] = None,
    *,
    feedback: bool = False,
    rescale: bool = True,
    real_feedback: bool = False,
    min_density: float = 1e-12,
    workers: int = 1,
) -> GridEvaluation:
    grid = grid or OutcomeGrid.default(schedule)
    if grid.dims != schedule.n_steps:
        raise ScheduleMismatchError("grid dimension must match the number of steps")
    t = _unit(target)
    pts = grid.points()
    factor = schedule.rescale_factor if rescale else 1.0

    def dens(lo, hi):
        return (execute(schedule, pts[lo:hi])[1],)

    (density,) = _chunked(dens, len(pts), workers)
    scored = np.nonzero(density > min_density * density.max())[0]

    def score(lo, hi):
        idx = scored[lo:hi]
        state, nsq = execute(schedule, pts[idx])
        if factor != 1.0:
            state = cvstate.rescale_quadrature(state, factor)
        if feedback:
            pos, fid = _pattern_search(state, nsq, t, real_feedback)
        else:
            pos = np.zeros(len(idx), dtype=complex)
            fid = _fidelity_after(state, nsq, t, pos)
        return fid, pos

    fid_s, pos_s = _chunked(score, len(scored), workers)
    fidelity = np.zeros(len(pts))
    fidelity[scored] = np.clip(fid_s, 0.0, 1.0)
    delta = None
    if feedback:
        delta = np.zeros(len(pts), dtype=complex)
        delta[scored] = pos_s
    meta = {
        "rescale": bool(rescale),
        "rescale_factor": float(factor),
        "feedback": bool(feedback),
        "real_feedback": bool(real_feedback),
        "grid": {"L": grid.L, "h": grid.h, "dims": grid.dims},
        "min_density": min_density,
    }
    return GridEvaluation(pts, grid.weights(), density, fidelity, delta, meta)


# -- trade-off curves ---------------------------------------------------------------


@dataclass(frozen=True)
class AcceptanceStrategy:
    """``basic``: accept ``|p_j| < eta`` for all j; ``advanced``: accept F >= threshold."""

    kind: str
    feedback: bool = False

    def __post_init__(self):
        if self.kind not in ("basic", "advanced"):
            raise ValueError(f"unknown acceptance strategy {self.kind!r}")

    @property
    def label(self) -> str:
        return self.kind + ("+feedback" if self.feedback else "")


@dataclass
class TradeoffCurve:
    """Points ``(success_probability, average_fidelity, parameter)`` sorted by probability."""

    points: list
    strategy: str = ""
    skipped: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def probability(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def fidelity(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])

    @property
    def parameter(self) -> np.ndarray:
        return np.array([p[2] for p in self.points])

    def fidelity_at(self, probability) -> np.ndarray:
        """Linear interpolation of average fidelity at given success probabilities.

        Values outside the sampled probability range are NaN.
        """
        P, F = self.probability, self.fidelity
        q = np.asarray(probability, dtype=float)
        out = np.interp(q, P, F)
        return np.where((q < P[0]) | (q > P[-1]), np.nan, out)[()]


def default_sweep(evaluation: GridEvaluation, kind: str, n: int = 120) -> np.ndarray:
    """Sweep values spread evenly in success probability."""
    if kind == "basic":
        axis = np.unique(np.abs(evaluation.points[:, 0]))
        step = axis[1] - axis[0] if axis.size > 1 else 1.0
        return np.concatenate([[0.5 * step], axis[1:] + 0.5 * step])
    mass = evaluation.density * evaluation.weights
    order = np.argsort(-evaluation.fidelity, kind="stable")
    cum = np.cumsum(mass[order])
    levels = np.linspace(0, cum[-1], n + 1)[1:]
    idx = np.minimum(np.searchsorted(cum, levels), len(order) - 1)
    return np.unique(evaluation.fidelity[order][idx])[::-1]


def tradeoff_from_evaluation(
    evaluation: GridEvaluation, strategy: AcceptanceStrategy, sweep: Optional[Sequence] = None
) -> TradeoffCurve:
    if sweep is None:
        sweep = default_sweep(evaluation, strategy.kind)
    mass = evaluation.density * evaluation.weights
    weighted = mass * evaluation.fidelity
    if strategy.kind == "basic":
        radius = np.max(np.abs(evaluation.points), axis=1)
    points, skipped = [], []
    for value in sweep:
        value = float(value)
        if strategy.kind == "basic":
            if value <= 0:
                raise ValueError("basic window needs eta > 0")
            inside = radius < value
        else:
            if not 0.0 <= value <= 1.0:
                raise ValueError("fidelity threshold must lie in [0, 1]")
            inside = evaluation.fidelity >= value
        prob = float(np.sum(mass[inside]))
        if prob <= 0.0:
            skipped.append(value)
            continue
        points.append((min(prob, 1.0), float(np.sum(weighted[inside]) / prob), value))
    if skipped:
        log.warning("%s: %d sweep values gave empty acceptance regions", strategy.label, len(skipped))
    points.sort(key=lambda p: (p[0], -p[1]))
    return TradeoffCurve(points, strategy.label, skipped, dict(evaluation.meta))


def tradeoff(
    schedule: Schedule,
    target,
    strategy: AcceptanceStrategy,
    grid: Optional[OutcomeGrid] = None,
    sweep: Optional[Sequence] = None,
    *,
    rescale: bool = True,
    real_feedback: bool = False,
    workers: int = 1,
) -> TradeoffCurve:
    """Fidelity / success-probability trade-off for one acceptance strategy."""
    evaluation = evaluate_grid(
        schedule, target, grid, feedback=strategy.feedback, rescale=rescale,
        real_feedback=real_feedback, workers=workers,
    )
    return tradeoff_from_evaluation(evaluation, strategy, sweep)


STANDARD_STRATEGIES = (
    AcceptanceStrategy("basic"),
    AcceptanceStrategy("advanced"),
    AcceptanceStrategy("advanced", feedback=True),
)


def standard_curves(
    schedule: Schedule, target, grid: Optional[OutcomeGrid] = None, *,
    rescale: bool = True, workers: int = 1,
) -> dict:
    """Curves for basic, advanced and advanced+feedback windows.

    Basic and advanced share one evaluation without feedback.
    """
    grid = grid or OutcomeGrid.default(schedule)
    plain = evaluate_grid(schedule, target, grid, rescale=rescale, workers=workers)
    fb = evaluate_grid(schedule, target, grid, feedback=True, rescale=rescale, workers=workers)
    return {
        "basic": tradeoff_from_evaluation(plain, STANDARD_STRATEGIES[0]),
        "advanced": tradeoff_from_evaluation(plain, STANDARD_STRATEGIES[1]),
        "advanced+feedback": tradeoff_from_evaluation(fb, STANDARD_STRATEGIES[2]),
    }


def dominance_gap(lower: TradeoffCurve, upper: TradeoffCurve) -> float:
    """Largest amount by which ``lower`` exceeds ``upper`` on their common range."""
    lo = max(lower.probability[0], upper.probability[0])
    hi = min(lower.probability[-1], upper.probability[-1])
    P = lower.probability
    P = P[(P >= lo) & (P <= hi)]
    if P.size == 0:
        return 0.0
    return float(np.max(lower.fidelity_at(P) - upper.fidelity_at(P)))


# -- joint-outcome map -----------------------------------------------------------


@dataclass
class FidelityMap:
    p1: np.ndarray
    p2: np.ndarray
    density: np.ndarray
    fidelity: np.ndarray
    mass: float
    meta: dict = field(default_factory=dict)

    def rows(self):
        return zip(self.p1, self.p2, self.density, self.fidelity)

    def max_density_location(self) -> tuple:
        i = int(np.argmax(self.density))
        return float(self.p1[i]), float(self.p2[i])


def fidelity_map(
    schedule: Schedule,
    target,
    grid: Optional[OutcomeGrid] = None,
    *,
    feedback: bool = True,
    rescale: bool = True,
    workers: int = 1,
) -> FidelityMap:
    """Joint density and per-outcome fidelity over a two-outcome grid."""
    if schedule.n_steps != 2:
        raise ScheduleMismatchError(f"fidelity map needs 2 steps, schedule has {schedule.n_steps}")
    grid = grid or OutcomeGrid.default(schedule)
    ev = evaluate_grid(schedule, target, grid, feedback=feedback, rescale=rescale, workers=workers)
    return FidelityMap(ev.points[:, 0], ev.points[:, 1], ev.density, ev.fidelity, ev.mass, ev.meta)
