"""Homodyne detection on Gaussian states and the 14-copy measurement cycle.

One measurement cycle consumes 14 fresh copies of a two-mode state
(mode 0: reconstructed secret, mode 1: reference). Quadrature index order is
``(q0, p0, q1, p1)``. The slots are:

====  ==============================  ===========================
slot  measured                        accumulated into
====  ==============================  ===========================
1-4   q0, p0, q1, p1                  ``hom_result[i] += x``
5     q0                              ``second_mom[0, 0] += x^2``
6     q0 then q1                      ``second_mom[0, 2] += x y``
7     q0 then p1                      ``second_mom[0, 3] += x y``
8     p0                              ``second_mom[1, 1] += x^2``
9     p0 then q1                      ``second_mom[1, 2] += x y``
10    p0 then p1                      ``second_mom[1, 3] += x y``
11    q1                              ``second_mom[2, 2] += x^2``
12    p1                              ``second_mom[3, 3] += x^2``
13    (q0 + p0)/sqrt 2                ``second_mom[0, 1] += x^2``
14    (q1 + p1)/sqrt 2                ``second_mom[2, 3] += x^2``
====  ==============================  ===========================

``second_mom`` is kept symmetric. Entries ``[0, 1]`` and ``[2, 3]`` hold the
raw squared rotated-quadrature sums; the estimator turns them into symmetrized
``q p`` moments.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Union

import numpy as np

from .errors import EstimationFailed, InvalidDimension
from .gaussian import GaussianState, quadrature_indices

COPIES_PER_CYCLE = 14
EIG_FLOOR = 1e-12

StateSource = Union[GaussianState, Callable[[], GaussianState]]


@dataclass(frozen=True)
class Slot:
    """One copy of the cycle: a list of ``(mode, theta)`` measured in order, and where it goes."""

    number: int
    measurements: tuple[tuple[int, float], ...]
    target: tuple[int, int] | int


_Q, _P, _DIAG = 0.0, math.pi / 2, math.pi / 4

SCHEDULE: tuple[Slot, ...] = (
    Slot(1, ((0, _Q),), 0),
    Slot(2, ((0, _P),), 1),
    Slot(3, ((1, _Q),), 2),
    Slot(4, ((1, _P),), 3),
    Slot(5, ((0, _Q),), (0, 0)),
    Slot(6, ((0, _Q), (1, _Q)), (0, 2)),
    Slot(7, ((0, _Q), (1, _P)), (0, 3)),
    Slot(8, ((0, _P),), (1, 1)),
    Slot(9, ((0, _P), (1, _Q)), (1, 2)),
    Slot(10, ((0, _P), (1, _P)), (1, 3)),
    Slot(11, ((1, _Q),), (2, 2)),
    Slot(12, ((1, _P),), (3, 3)),
    Slot(13, ((0, _DIAG),), (0, 1)),
    Slot(14, ((1, _DIAG),), (2, 3)),
)


class RngStream:
    """Independent, reproducible random stream keyed by ``(seed, index)``."""

    def __init__(self, seed: int, index: int = 0):
        if int(seed) != seed or seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be a 64-bit nonnegative integer, got {seed!r}")
        if int(index) != index or index < 0:
            raise ValueError(f"stream index must be a nonnegative integer, got {index!r}")
        self.seed = int(seed)
        self.index = int(index)
        self.generator = np.random.default_rng(
            np.random.SeedSequence(entropy=self.seed, spawn_key=(self.index,))
        )

    def child(self, index: int) -> "RngStream":
        """Stream for sub-task ``index``; independent of this stream's draws so far."""
        return RngStream(self.seed, self.index * 1_000_003 + int(index) + 1)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, index={self.index})"


@dataclass(frozen=True)
class HomodyneOutcome:
    value: float
    mode: int
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", float(self.theta) % (2 * math.pi))


def _quadrature_row(n_modes: int, mode: int, theta: float) -> np.ndarray:
    if not 0 <= mode < n_modes:
        raise InvalidDimension(f"mode {mode} out of range for {n_modes} modes")
    row = np.zeros(2 * n_modes)
    row[2 * mode], row[2 * mode + 1] = math.cos(theta), math.sin(theta)
    return row


def conditional_after_homodyne(
    state: GaussianState, mode: int, theta: float, value: float
) -> GaussianState:
    """Remaining modes conditioned on ``r_theta = value``; the measured mode is dropped."""
    n = state.n_modes
    row = _quadrature_row(n, mode, theta)
    keep = quadrature_indices([m for m in range(n) if m != mode])
    if keep.size == 0:
        raise InvalidDimension("cannot condition a single-mode state; nothing remains")
    var = float(row @ state.cov @ row)
    cross = state.cov[keep] @ row
    mean = state.mean[keep] + cross * (value - float(row @ state.mean)) / var
    cov = state.cov[np.ix_(keep, keep)] - np.outer(cross, cross) / var
    return GaussianState(mean, cov)


def homodyne_measure(
    state: GaussianState, mode: int, theta: float, rng: RngStream
) -> tuple[HomodyneOutcome, GaussianState | None]:
    """Measure ``q cos theta + p sin theta`` on ``mode``.

    Returns the outcome and the conditioned state of the other modes, or
    ``None`` when ``state`` has a single mode.
    """
    row = _quadrature_row(state.n_modes, mode, theta)
    mu = float(row @ state.mean)
    var = float(row @ state.cov @ row)
    value = float(rng.generator.normal(mu, math.sqrt(var)))
    outcome = HomodyneOutcome(value, mode, theta)
    if state.n_modes == 1:
        return outcome, None
    return outcome, conditional_after_homodyne(state, mode, theta, value)


# vectorised sampling ------------------------------------------------------


def _resolve(source: StateSource) -> GaussianState:
    state = source() if callable(source) else source
    if not isinstance(state, GaussianState):
        raise TypeError(f"state source produced {type(state).__name__}, not GaussianState")
    if state.n_modes != 2:
        raise InvalidDimension(f"the schedule needs a 2-mode state, got {state.n_modes}")
    return state


def _slot_marginal(state: GaussianState, slot: Slot) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the (one or two) outcomes recorded in ``slot``."""
    rows = np.array([_quadrature_row(2, m, th) for m, th in slot.measurements])
    return rows @ state.mean, rows @ state.cov @ rows.T


def _sequential_draws(
    state: GaussianState, slot: Slot, n: int, gen: np.random.Generator
) -> np.ndarray:
    """``n x len(measurements)`` outcomes, measured one after another on each copy."""
    (m0, th0), *rest = slot.measurements
    row0 = _quadrature_row(2, m0, th0)
    mu0, var0 = float(row0 @ state.mean), float(row0 @ state.cov @ row0)
    first = gen.normal(mu0, math.sqrt(var0), size=n)
    if not rest:
        return first[:, None]
    (m1, th1), = rest
    if m1 == m0:
        raise InvalidDimension("sequential slots must measure two different modes")
    # the conditioned state is affine in the first outcome; do it once per slot
    cond0 = conditional_after_homodyne(state, m0, th0, mu0)
    row0_shift = state.cov[quadrature_indices([1 - m0])] @ row0 / var0
    row1 = _quadrature_row(1, 0, th1)
    mu1 = float(row1 @ cond0.mean) + float(row1 @ row0_shift) * (first - mu0)
    var1 = float(row1 @ cond0.cov @ row1)
    second = mu1 + math.sqrt(max(var1, 0.0)) * gen.standard_normal(n)
    return np.column_stack([first, second])


def _factor(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, U = np.linalg.eigh(cov)
        return U * np.sqrt(np.clip(w, EIG_FLOOR, None))


def sample_outcomes(source: StateSource, cycles: int, rng: RngStream) -> np.ndarray:
    """Raw outcomes of ``cycles`` cycles as a structured array.

    Fields: ``cycle`` (1-based), ``slot``, ``mode``, ``theta``, ``value``.
    Two-outcome slots contribute two consecutive rows.
    """
    if cycles < 1:
        raise EstimationFailed(f"cycles must be >= 1, got {cycles}")
    state = _resolve(source)
    gen = rng.generator
    dtype = [("cycle", "i8"), ("slot", "i8"), ("mode", "i8"), ("theta", "f8"), ("value", "f8")]
    parts = []
    for slot in SCHEDULE:
        values = _sequential_draws(state, slot, cycles, gen)
        for j, (mode, theta) in enumerate(slot.measurements):
            part = np.empty(cycles, dtype=dtype)
            part["cycle"] = np.arange(1, cycles + 1)
            part["slot"], part["mode"], part["theta"] = slot.number, mode, theta
            part["value"] = values[:, j]
            parts.append(part)
    out = np.concatenate(parts)
    order = np.lexsort((np.arange(out.size), out["slot"], out["cycle"]))
    return out[order]


def write_outcomes_csv(path, outcomes: np.ndarray) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["cycle", "slot", "mode", "theta", "value"])
        for rec in outcomes:
            writer.writerow(
                [int(rec["cycle"]), int(rec["slot"]), int(rec["mode"]),
                 repr(float(rec["theta"])), repr(float(rec["value"]))]
            )


# accumulators -------------------------------------------------------------


@dataclass
class RunningMoments:
    """Unnormalised first- and second-moment sums over ``l`` completed cycles."""

    hom_result: np.ndarray = field(default_factory=lambda: np.zeros(4))
    second_mom: np.ndarray = field(default_factory=lambda: np.zeros((4, 4)))
    l: int = 0

    def __post_init__(self):
        self.hom_result = np.array(self.hom_result, dtype=float).reshape(4)
        self.second_mom = np.array(self.second_mom, dtype=float).reshape(4, 4)
        if self.l < 0:
            raise ValueError("l must be nonnegative")
        if np.max(np.abs(self.second_mom - self.second_mom.T), initial=0.0) > 0:
            raise ValueError("second_mom must be symmetric")

    @property
    def copies_used(self) -> int:
        return COPIES_PER_CYCLE * self.l

    def add_products(self, target, total: float) -> None:
        if isinstance(target, tuple):
            i, j = target
            self.second_mom[i, j] += total
            if i != j:
                self.second_mom[j, i] += total
        else:
            self.hom_result[target] += total

    def merge(self, other: "RunningMoments") -> "RunningMoments":
        return RunningMoments(
            self.hom_result + other.hom_result,
            self.second_mom + other.second_mom,
            self.l + other.l,
        )

    __add__ = merge

    def normalized(self) -> tuple[np.ndarray, np.ndarray]:
        """Sample means of the slot observables (first moments, second-moment table)."""
        if self.l < 1:
            raise EstimationFailed("no completed cycles")
        return self.hom_result / self.l, self.second_mom / self.l


def accumulate(outcomes: np.ndarray) -> RunningMoments:
    """Fold a raw outcome table (see :func:`sample_outcomes`) into moment sums."""
    m = RunningMoments()
    if outcomes.size == 0:
        return m
    m.l = int(np.unique(outcomes["cycle"]).size)
    for slot in SCHEDULE:
        vals = outcomes["value"][outcomes["slot"] == slot.number]
        if len(slot.measurements) == 2:
            x, y = vals[0::2], vals[1::2]
            total = float(np.sum(x * y))
        elif isinstance(slot.target, tuple):
            total = float(np.sum(vals * vals))
        else:
            total = float(np.sum(vals))
        m.add_products(slot.target, total)
    return m


def _aggregate_slot(state: GaussianState, slot: Slot, n: int, gen: np.random.Generator) -> float:
    """Draw the slot's sum over ``n`` cycles from its exact sampling distribution.

    Uses the independence of the sample mean and the scatter matrix of iid
    Gaussian draws: the scatter is Wishart with ``n - 1`` degrees of freedom
    (Bartlett decomposition) and the mean is Gaussian.
    """
    mu, cov = _slot_marginal(state, slot)
    if not isinstance(slot.target, tuple):
        return float(gen.normal(n * mu[0], math.sqrt(n * cov[0, 0])))
    L = _factor(cov)
    xbar = mu + L @ gen.standard_normal(len(mu)) / math.sqrt(n)
    dof = n - 1
    if len(mu) == 1:
        scatter = cov[0, 0] * gen.chisquare(dof)
        return float(scatter + n * xbar[0] ** 2)
    A = np.array(
        [[math.sqrt(gen.chisquare(dof)), 0.0],
         [gen.standard_normal(), math.sqrt(gen.chisquare(dof - 1))]]
    )
    LA = L @ A
    scatter = LA @ LA.T
    return float(scatter[0, 1] + n * xbar[0] * xbar[1])


AGGREGATE_MIN_CYCLES = 16


def run_schedule(
    source: StateSource,
    cycles: int,
    rng: RngStream,
    method: str = "outcomes",
    budget: int | None = None,
) -> RunningMoments:
    """Run ``cycles`` full 14-copy cycles on an iid source.

    ``source`` is a :class:`GaussianState` or a zero-argument callable
    returning one (called once; copies are iid). ``method="outcomes"`` draws
    every homodyne outcome; ``method="aggregate"`` draws each slot's sum
    directly from its exact distribution, so the cost does not grow with
    ``cycles``. Both give identically distributed accumulators.

    Raises:
        EstimationFailed: if ``cycles < 1`` or ``14 * cycles`` exceeds ``budget``.
    """
    if int(cycles) != cycles or cycles < 1:
        raise EstimationFailed(f"cycles must be a positive integer, got {cycles!r}")
    cycles = int(cycles)
    if budget is not None and COPIES_PER_CYCLE * cycles > budget:
        raise EstimationFailed(
            f"{cycles} cycles need {COPIES_PER_CYCLE * cycles} copies; only {budget} available"
        )
    if method == "outcomes":
        return accumulate(sample_outcomes(source, cycles, rng))
    if method != "aggregate":
        raise ValueError(f"unknown sampling method {method!r}")
    if cycles < AGGREGATE_MIN_CYCLES:
        return accumulate(sample_outcomes(source, cycles, rng))
    state = _resolve(source)
    m = RunningMoments(l=cycles)
    for slot in SCHEDULE:
        m.add_products(slot.target, _aggregate_slot(state, slot, cycles, rng.generator))
    return m


def expected_moments(state: GaussianState, cycles: int = 1) -> RunningMoments:
    """Accumulators holding exactly ``cycles`` times each slot's expectation value."""
    if cycles < 1:
        raise EstimationFailed(f"cycles must be >= 1, got {cycles}")
    m = RunningMoments(l=int(cycles))
    for slot in SCHEDULE:
        mu, cov = _slot_marginal(state, slot)
        if not isinstance(slot.target, tuple):
            value = mu[0]
        elif len(mu) == 1:
            value = cov[0, 0] + mu[0] ** 2
        else:
            value = cov[0, 1] + mu[0] * mu[1]
        m.add_products(slot.target, cycles * float(value))
    return m
