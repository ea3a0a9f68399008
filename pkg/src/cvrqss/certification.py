"""Referee-side estimation of mutual information and certification of access structures.

The referee measures fresh copies of (reconstructed secret, reference) with
the 14-slot homodyne cycle, estimates the covariance matrix, and converts
Chebyshev confidence intervals on the moments into an error bar on the
estimated mutual information. Subsets of players are then classified against
the referee's thresholds and compared with the dealer's claim.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

from .errors import EstimationFailed, UnphysicalState
from .gaussian import GaussianState, SqueezeParam, mode_entropy, symplectic_spectrum
from .homodyne import COPIES_PER_CYCLE, RngStream, RunningMoments, StateSource, run_schedule

# ``(joint, reconstructed, reference)`` blocks of the 4x4 estimate
_BLOCKS = (np.arange(4), np.arange(2), np.arange(2, 4))


@dataclass(frozen=True)
class EstimatorConfig:
    """Referee settings.

    Attributes:
        epsilon: target error on the mutual information (bits).
        tol: allowed failure probability, in ``(0, 1/2)``.
        T: copy budget for one estimate.
        sigma: upper bound on every outcome's standard deviation.
        delta: threshold gap; must be at least ``2 * epsilon``.
        method: ``"aggregate"`` or ``"outcomes"`` sampling (see ``run_schedule``).
        check_growth: the stopping rule is checked after cycle counts growing
            geometrically by this factor (and always at the budget limit);
            ``1.0`` checks after every cycle.
    """

    epsilon: float
    tol: float
    T: int
    sigma: float
    delta: float
    method: str = "aggregate"
    check_growth: float = 1.05

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be positive, got {self.epsilon!r}")
        if not 0 < self.tol < 0.5:
            raise ValueError(f"tol must lie in (0, 1/2), got {self.tol!r}")
        if int(self.T) != self.T or self.T < 0:
            raise ValueError(f"T must be a nonnegative integer, got {self.T!r}")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive, got {self.sigma!r}")
        if not self.delta >= 2 * self.epsilon * (1 - 1e-12):
            raise ValueError(f"delta={self.delta} must be >= 2*epsilon={2 * self.epsilon}")
        if self.method not in ("aggregate", "outcomes"):
            raise ValueError(f"unknown sampling method {self.method!r}")
        if not self.check_growth >= 1.0:
            raise ValueError(f"check_growth must be >= 1, got {self.check_growth!r}")
        object.__setattr__(self, "T", int(self.T))

    @property
    def max_cycles(self) -> int:
        return self.T // COPIES_PER_CYCLE


@dataclass(frozen=True)
class Thresholds:
    I_T_F: float
    I_T_A: float

    def __post_init__(self):
        if not (self.I_T_F >= 0 and self.I_T_A >= 0):
            raise ValueError("thresholds must be nonnegative")
        if self.I_T_F > self.I_T_A:
            raise ValueError(f"I_T_F={self.I_T_F} exceeds I_T_A={self.I_T_A}")


# access structures ---------------------------------------------------------


def subset_mask(members: Sequence[int]) -> int:
    mask = 0
    for m in members:
        mask |= 1 << int(m)
    return mask


def mask_members(mask: int) -> tuple[int, ...]:
    return tuple(i for i in range(mask.bit_length()) if mask >> i & 1)


@dataclass(frozen=True)
class AccessStructure:
    """Dealer's claim: class 0/1/2 (forbidden/intermediate/authorized) for every nonempty subset.

    Subsets are identified by bit masks; player ``i`` is bit ``i``.
    """

    n_players: int
    claimed: Mapping[int, int]

    def __post_init__(self):
        if int(self.n_players) != self.n_players or self.n_players < 1:
            raise ValueError(f"n_players must be a positive integer, got {self.n_players!r}")
        claimed = {int(k): int(v) for k, v in dict(self.claimed).items()}
        expected = set(range(1, 2**self.n_players))
        if set(claimed) != expected:
            missing = sorted(expected - set(claimed))
            extra = sorted(set(claimed) - expected)
            raise ValueError(f"claim must cover every nonempty subset; missing {missing}, extra {extra}")
        bad = {m: c for m, c in claimed.items() if c not in (0, 1, 2)}
        if bad:
            raise ValueError(f"classes must be 0, 1 or 2; got {bad}")
        object.__setattr__(self, "claimed", dict(sorted(claimed.items())))

    @classmethod
    def threshold(cls, k: int, n_players: int) -> "AccessStructure":
        """Subsets of at least ``k`` players authorized, all others forbidden."""
        return cls(
            n_players,
            {m: 2 if bin(m).count("1") >= k else 0 for m in range(1, 2**n_players)},
        )

    @classmethod
    def from_subsets(cls, n_players: int, claims: Mapping[Sequence[int], int]) -> "AccessStructure":
        return cls(n_players, {subset_mask(s): c for s, c in claims.items()})

    def to_list(self) -> list[dict]:
        return [{"players": list(mask_members(m)), "class": c} for m, c in self.claimed.items()]

    @classmethod
    def from_list(cls, n_players: int, rows: Sequence[Mapping]) -> "AccessStructure":
        claims = {}
        for row in rows:
            mask = subset_mask(row["players"])
            if mask in claims:
                raise ValueError(f"subset {sorted(row['players'])} listed twice")
            claims[mask] = row["class"]
        return cls(n_players, claims)


def validate_access_structure(claimed: AccessStructure) -> tuple[bool, list[str]]:
    """Check monotonicity and the no-two-disjoint-authorized-sets rule; list every violation."""
    f = claimed.claimed
    violations = []
    for a, b in itertools.permutations(f, 2):
        if a & b == a:  # a is a proper subset of b
            if f[a] == 2 and f[b] != 2:
                violations.append(
                    f"{list(mask_members(a))} is authorized but its superset "
                    f"{list(mask_members(b))} has class {f[b]}"
                )
            if f[b] == 0 and f[a] != 0:
                violations.append(
                    f"{list(mask_members(b))} is forbidden but its subset "
                    f"{list(mask_members(a))} has class {f[a]}"
                )
    for a, b in itertools.combinations(f, 2):
        if a & b == 0 and f[a] == 2 and f[b] == 2:
            violations.append(
                f"disjoint subsets {list(mask_members(a))} and {list(mask_members(b))} "
                "are both authorized"
            )
    return not violations, violations


# estimation ------------------------------------------------------------------


def chebyshev_epsilon(sigma: float, l: int, tol: float) -> float:
    """Half-width holding each of the 14 slot means to within it with joint probability ``1 - tol``."""
    if int(l) != l or l < 1:
        raise ValueError(f"l must be a positive integer, got {l!r}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma!r}")
    if not 0 < tol < 1:
        raise ValueError(f"tol must lie in (0, 1), got {tol!r}")
    per_slot = -math.expm1(math.log1p(-tol) / COPIES_PER_CYCLE)
    return sigma / math.sqrt(l * per_slot)


def estimate_covariance(
    m: RunningMoments, sigma: float, tol: float
) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Plug-in covariance estimate from the cycle accumulators.

    Returns ``(V_est, mean_est, eps_max, eps)`` where ``eps`` is the
    Chebyshev half-width and ``eps_max`` propagates it to the worst
    covariance entry.
    """
    if m.l < 1:
        raise ValueError("no completed cycles")
    mean, G = m.normalized()
    V = G - np.outer(mean, mean)
    for i in (0, 2):
        sym = G[i, i + 1] - (G[i, i] + G[i + 1, i + 1]) / 2.0
        V[i, i + 1] = V[i + 1, i] = sym - mean[i] * mean[i + 1]
    eps = chebyshev_epsilon(sigma, m.l, tol)
    m2 = mean * mean
    spread = max(
        float(np.max(np.sqrt(1.0 + m2[:, None] + m2[None, :]))),
        math.sqrt(4.0 + m2[0] + m2[1]),
        math.sqrt(4.0 + m2[2] + m2[3]),
    )
    return V, mean, eps * spread, eps


def entropy_error_bound(V, eps_max: float, n: int | None = None) -> float:
    """``kappa(V) (1 + log2(2 n sigma_max)) 2 n eps_max`` from the extreme singular values of ``V``."""
    V = np.asarray(V, dtype=float)
    if n is None:
        n = V.shape[0] // 2
    if eps_max < 0:
        raise ValueError("eps_max must be nonnegative")
    sv = np.linalg.svd(V, compute_uv=False)
    if sv[-1] <= 0 or sv[-1] < 1e-15 * sv[0]:
        raise np.linalg.LinAlgError("singular covariance matrix")
    kappa = sv[0] / sv[-1]
    return float(kappa * (1.0 + math.log2(2 * n * sv[0])) * 2 * n * eps_max)


def _floored_entropy(V: np.ndarray) -> tuple[float, bool]:
    """Entropy with symplectic eigenvalues below one raised to one."""
    nu = symplectic_spectrum(V)
    floored = bool(nu[-1] < 1.0)
    return float(np.sum(mode_entropy(np.maximum(nu, 1.0)))), floored


@dataclass(frozen=True)
class QmiEstimate:
    est_qmi: float
    eps_qmi: float
    cycles: int
    floored: bool = False

    @property
    def copies_used(self) -> int:
        return COPIES_PER_CYCLE * self.cycles

    def __iter__(self) -> Iterator[float]:
        return iter((self.est_qmi, self.eps_qmi))


def qmi_from_moments(m: RunningMoments, sigma: float, tol: float) -> QmiEstimate:
    """Point estimate and error bar from the accumulators; ``eps_qmi`` is infinite if ``V_est`` is not positive definite."""
    V, _, eps_max, _ = estimate_covariance(m, sigma, tol)
    if np.any(np.linalg.eigvalsh(V) <= 0):
        return QmiEstimate(math.nan, math.inf, m.l, floored=True)
    entropies, floored, eps_qmi = [], False, 0.0
    for idx in _BLOCKS:
        block = V[np.ix_(idx, idx)]
        try:
            h, fl = _floored_entropy(block)
        except UnphysicalState:
            return QmiEstimate(math.nan, math.inf, m.l, floored=True)
        entropies.append(h)
        floored |= fl
        eps_qmi += entropy_error_bound(block, eps_max)
    joint, rec, ref = entropies
    return QmiEstimate(rec + ref - joint, eps_qmi, m.l, floored)


def _checkpoints(max_cycles: int, growth: float) -> Iterator[int]:
    l = 0
    while l < max_cycles:
        l = min(max_cycles, max(l + 1, math.ceil(l * growth)))
        yield l


def estimate_qmi(source: StateSource, cfg: EstimatorConfig, rng: RngStream) -> QmiEstimate:
    """Measure cycles until ``eps_qmi <= cfg.epsilon``.

    Raises:
        EstimationFailed: when the copy budget runs out first. The exception
            carries ``copies_used``.
    """
    moments = RunningMoments()
    last = None
    for target in _checkpoints(cfg.max_cycles, cfg.check_growth):
        moments = moments + run_schedule(source, target - moments.l, rng, method=cfg.method)
        last = qmi_from_moments(moments, cfg.sigma, cfg.tol)
        if last.eps_qmi <= cfg.epsilon:
            return last
    err = EstimationFailed(
        f"copy budget T={cfg.T} exhausted after {moments.l} cycles"
        + (f" with eps_qmi={last.eps_qmi:.4g} > {cfg.epsilon}" if last else "")
    )
    err.copies_used = moments.copies_used
    raise err


def classify_estimate(est_qmi: float, th: Thresholds, eps: float) -> int:
    """2 above ``I_T_A + eps``; 1 on ``(I_T_F - eps, I_T_A + eps]``; 0 at or below ``I_T_F - eps``."""
    if est_qmi > th.I_T_A + eps:
        return 2
    if est_qmi > th.I_T_F - eps:
        return 1
    return 0


# certification ---------------------------------------------------------------


@dataclass(frozen=True)
class SubsetRecord:
    mask: int
    est_qmi: float | None
    eps_qmi: float | None
    classification: int | None
    claimed: int
    matched: bool
    floored: bool = False
    copies_used: int = 0

    @property
    def players(self) -> tuple[int, ...]:
        return mask_members(self.mask)


@dataclass
class CertificationReport:
    verdict: bool
    copies_used: int
    subsets: list[SubsetRecord] = field(default_factory=list)

    def to_dict(self) -> dict:
        keys = ("mask", "est_qmi", "eps_qmi", "classification", "claimed", "matched", "floored")
        rows = []
        for rec in self.subsets:
            row = {k: v for k, v in asdict(rec).items() if k in keys}
            for k in ("est_qmi", "eps_qmi"):
                if row[k] is not None and not math.isfinite(row[k]):
                    row[k] = None
            rows.append(row)
        return {"verdict": self.verdict, "copies_used": self.copies_used, "subsets": rows}

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def certify(
    claimed: AccessStructure,
    subset_state_factory: Callable[[tuple[int, ...]], StateSource],
    th: Thresholds,
    cfg: EstimatorConfig,
    rng: RngStream,
) -> CertificationReport:
    """Estimate and classify every nonempty subset in ascending mask order.

    Stops at the first subset whose classification differs from the claim or
    whose estimate fails; the verdict is true only when all ``2^P - 1``
    subsets match. Each subset draws from its own child stream, so results do
    not depend on which subsets ran before it.
    """
    report = CertificationReport(verdict=False, copies_used=0)
    passed = 0
    for mask, claim in claimed.claimed.items():
        members = mask_members(mask)
        try:
            est = estimate_qmi(subset_state_factory(members), cfg, rng.child(mask))
        except EstimationFailed as exc:
            used = getattr(exc, "copies_used", 0)
            report.copies_used += used
            report.subsets.append(SubsetRecord(mask, None, None, None, claim, False, False, used))
            return report
        label = classify_estimate(est.est_qmi, th, cfg.epsilon)
        matched = label == claim
        report.copies_used += est.copies_used
        report.subsets.append(
            SubsetRecord(mask, est.est_qmi, est.eps_qmi, label, claim, matched,
                         est.floored, est.copies_used)
        )
        if not matched:
            return report
        passed += 1
    report.verdict = passed == len(claimed.claimed)
    return report


def dealer_sample_squeezing(s_max: float, rng: RngStream) -> tuple[SqueezeParam, bool]:
    """Draw ``s = sqrt(2 a s_max)``, ``theta = 2 pi b`` with ``a, b`` uniform on ``[0, 1]``.

    The second return value says whether ``s <= s_max``; the draw itself is
    returned unchanged either way.
    """
    if not (s_max > 0 and math.isfinite(s_max)):
        raise ValueError(f"s_max must be positive, got {s_max!r}")
    a, b = rng.generator.uniform(0.0, 1.0, size=2)
    s = math.sqrt(2.0 * a * s_max)
    return SqueezeParam(s, 2 * math.pi * b), s <= s_max


def sigma_bound(states: Sequence[GaussianState]) -> float:
    """Square root of the largest covariance eigenvalue over ``states``.

    Every rotated quadrature's variance, the diagonal entries included, is at
    most that eigenvalue.
    """
    worst = 0.0
    for st in states:
        worst = max(worst, float(np.max(np.linalg.eigvalsh(st.cov))))
    return math.sqrt(worst)
