"""Threshold (k, 2k-1) secret sharing of a continuous-variable mode by point transformations.

The dealer's secret is one mode of a two-mode squeezed vacuum; the other mode
is the referee's reference. Shares are produced by a linear canonical point
transformation ``x -> g x`` of the positions of the secret and ``2k - 2``
ancillas (``k - 1`` wide, ``k - 1`` narrow in position, of width ``a``).

Two routes to the covariance of (extracted secret, reference) are provided:

* :func:`analytic_joint_covariance` evaluates closed-form Wigner-function
  coefficients and the Gaussian moment integrals that follow from them;
* :func:`decoded_joint_covariance` pushes the full ``2k``-mode Gaussian state
  through the encoding and decoding maps and traces out the other shares.

Both agree exactly; the tests hold them against each other and against a
numerical quadrature of the Wigner function.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    AccessConditionViolated,
    FormulaDomainError,
    InsufficientCollaborators,
    InvalidDimension,
)
from .gaussian import (
    mode_entropy,
    quadrature_indices,
    tmsv_covariance,
)

RANK_TOL = 1e-9
CONSTRAINT_TOL = 1e-10


@dataclass(frozen=True)
class SharingParams:
    """Threshold ``k``, ancilla width ``a`` and dealer squeezing ``|zeta|``."""

    k: int
    a: float
    zeta_mag: float = 0.0

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise ValueError(f"threshold k must be an integer >= 2, got {self.k!r}")
        if not (self.a > 0 and math.isfinite(self.a)):
            raise ValueError(f"ancilla parameter a must be positive, got {self.a!r}")
        if not self.zeta_mag >= 0:
            raise ValueError(f"|zeta| must be >= 0, got {self.zeta_mag!r}")
        object.__setattr__(self, "k", int(self.k))

    @property
    def n_players(self) -> int:
        return 2 * self.k - 1


@dataclass(frozen=True, eq=False)
class EncodingMatrix:
    """Row ``i`` holds the coefficients of share ``g_i`` over ``(x, y_1.., z_1..)``."""

    g: np.ndarray

    def __post_init__(self):
        g = np.array(self.g, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise InvalidDimension(f"encoding matrix must be square, got {g.shape}")
        g.flags.writeable = False
        object.__setattr__(self, "g", g)

    @property
    def size(self) -> int:
        return self.g.shape[0]

    def to_dict(self) -> dict:
        return {"rows": self.size, "cols": self.size, "data": self.g.tolist()}


@dataclass(frozen=True, eq=False)
class DecodingMatrix:
    """Decoded coordinates ``xi`` after relabelling the collaborators to slots ``0..k-1``.

    Attributes:
        xi: ``(2k-1) x (2k-1)``; row ``i`` expresses ``xi_i`` over the original
            coordinates ``(x, y, z)``.
        subset: collaborating players, in the order they were placed.
        order: full player order (collaborators first, then the rest).
        transform: the ``k x k`` matrix the collaborators apply to their shares.
    """

    xi: np.ndarray
    subset: tuple[int, ...]
    order: tuple[int, ...]
    transform: np.ndarray

    def constraint_residuals(self, k: int) -> np.ndarray:
        """Residuals of ``alpha_1 = 1, beta_1 = 0`` and the matched X+Y parts."""
        xy = self.xi[:, :k]
        res = [xy[0] - np.eye(k)[0]]
        res += [xy[i] - xy[k + i - 1] for i in range(1, k)]
        return np.concatenate(res)

    def to_dict(self) -> dict:
        return {
            "rows": self.xi.shape[0],
            "cols": self.xi.shape[1],
            "data": self.xi.tolist(),
            "subset": list(self.subset),
        }


@dataclass(frozen=True)
class LeakageCoefficients:
    """``v2``: squared Z-weight of the extracted coordinate; ``u2``: squared Y-expansion weight."""

    u2: float
    v2: float

    def __post_init__(self):
        for name in ("u2", "v2"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be finite and >= 0, got {value!r}")


# encoding ---------------------------------------------------------------


def access_vectors(g: EncodingMatrix, k: int) -> np.ndarray:
    """The family ``{f_1, iota_1, ..., iota_{2k-1}}`` as rows in the X+Y coordinates.

    ``iota_i`` keeps the X and Y components of ``g_i``: for large ``a`` the
    narrow Z ancillas carry no position information.
    """
    first = np.eye(k)[:1]
    return np.vstack([first, g.g[:, :k]])


def _family_independent(vectors: np.ndarray) -> bool:
    sv = np.linalg.svd(vectors, compute_uv=False)
    return bool(sv[0] > 0 and sv[-1] >= RANK_TOL * sv[0])


def check_access_independence(g: EncodingMatrix, params: SharingParams) -> bool:
    """True iff every ``k`` vectors among ``f_1, iota_1, ..., iota_{2k-1}`` are independent."""
    k = params.k
    if g.size != params.n_players:
        raise InvalidDimension(f"encoding is {g.size}x{g.size}, expected {params.n_players}")
    family = access_vectors(g, k)
    return all(
        _family_independent(family[list(rows)])
        for rows in itertools.combinations(range(family.shape[0]), k)
    )


def vandermonde_encoding(params: SharingParams) -> EncodingMatrix:
    """Deterministic candidate: row ``i`` is ``(1, t_i, t_i^2, ...)`` at Chebyshev nodes."""
    n = params.n_players
    nodes = np.cos(np.pi * (np.arange(n) + 0.5) / n) + 2.0
    return EncodingMatrix(np.vander(nodes, n, increasing=True))


def build_encoding(params: SharingParams, seed: int, max_attempts: int = 64) -> EncodingMatrix:
    """Seeded random Gaussian encoding passing the access condition.

    Falls back to :func:`vandermonde_encoding` when no random candidate is
    accepted within ``max_attempts``.

    Raises:
        AccessConditionViolated: if every candidate fails.
    """
    rng = np.random.default_rng(seed)
    n = params.n_players
    for _ in range(max_attempts):
        candidate = EncodingMatrix(rng.standard_normal((n, n)))
        if _encoding_ok(candidate, params):
            return candidate
    fallback = vandermonde_encoding(params)
    if _encoding_ok(fallback, params):
        return fallback
    raise AccessConditionViolated(
        f"no encoding for k={params.k} accepted after {max_attempts} attempts"
    )


def _encoding_ok(g: EncodingMatrix, params: SharingParams) -> bool:
    sv = np.linalg.svd(g.g, compute_uv=False)
    if sv[-1] < RANK_TOL * sv[0]:
        return False
    return check_access_independence(g, params)


# decoding ---------------------------------------------------------------


def build_decoding(
    g: EncodingMatrix, subset: Sequence[int], params: SharingParams
) -> DecodingMatrix:
    """Linear map the collaborators apply so the first decoded coordinate is the secret.

    With the collaborators moved to slots ``0..k-1`` the transform ``M``
    solves ``M P_sub = R``, where ``P_sub`` holds their X+Y components and
    ``R`` has rows ``e_1`` followed by the X+Y components of the
    non-collaborating shares. Only the first ``k`` members of ``subset`` are
    used.
    """
    k, n = params.k, params.n_players
    subset = tuple(int(i) for i in subset)
    if len(set(subset)) != len(subset) or any(not 0 <= i < n for i in subset):
        raise ValueError(f"invalid player subset {subset!r} for {n} players")
    if len(subset) < k:
        raise InsufficientCollaborators(f"{len(subset)} players cannot decode; need {k}")
    subset = subset[:k]
    others = tuple(i for i in range(n) if i not in subset)
    order = subset + others
    proj = g.g[:, :k]
    p_sub = proj[list(subset)]
    target = np.vstack([np.eye(k)[:1], proj[list(others)]])
    for block in (p_sub, target):
        sv = np.linalg.svd(block, compute_uv=False)
        if sv[-1] < RANK_TOL * sv[0]:
            raise AccessConditionViolated(
                f"decoding system for players {subset} is singular"
            )
    transform = np.linalg.solve(p_sub.T, target.T).T
    xi = np.vstack([transform @ g.g[list(subset)], g.g[list(others)]])
    xi.flags.writeable = False
    transform.flags.writeable = False
    dec = DecodingMatrix(xi=xi, subset=subset, order=order, transform=transform)
    worst = np.max(np.abs(dec.constraint_residuals(k)))
    if worst > CONSTRAINT_TOL * max(1.0, float(np.max(np.abs(xi)))):
        raise AccessConditionViolated(f"decoding constraints violated by {worst:g}")
    return dec


def leakage_coefficients(d: DecodingMatrix, params: SharingParams) -> LeakageCoefficients:
    """``v2 = |gamma_1|^2`` and ``u2 = |u|^2`` with ``beta u = alpha`` over the other collaborators.

    ``alpha`` and ``beta`` are the X and Y coefficients of decoded rows
    ``2..k``; the system is solved exactly when square and in the
    least-squares sense otherwise.
    """
    k = params.k
    gamma_1 = d.xi[0, k:]
    alpha = d.xi[1:k, 0]
    beta = d.xi[1:k, 1:k]
    if beta.shape[0] == beta.shape[1]:
        sv = np.linalg.svd(beta, compute_uv=False)
        if sv[-1] < RANK_TOL * sv[0]:
            raise AccessConditionViolated("expansion system for u is rank deficient")
        u = np.linalg.solve(beta, alpha)
    else:
        u, _, rank, _ = np.linalg.lstsq(beta, alpha, rcond=None)
        if rank < min(beta.shape):
            raise AccessConditionViolated("expansion system for u is rank deficient")
    return LeakageCoefficients(u2=float(u @ u), v2=float(gamma_1 @ gamma_1))


# exact Gaussian pipeline --------------------------------------------------


def _point_transformation(L: np.ndarray, modes: Sequence[int], total: int) -> np.ndarray:
    """Symplectic matrix of ``q -> L q``, ``p -> L^-T p`` on the given modes."""
    S = np.eye(2 * total)
    qi = [2 * m for m in modes]
    pi = [2 * m + 1 for m in modes]
    S[np.ix_(qi, qi)] = L
    S[np.ix_(pi, pi)] = np.linalg.inv(L).T
    return S


def dealer_covariance(params: SharingParams) -> np.ndarray:
    """Covariance of ``(reference, x, y_1.., z_1..)`` before encoding."""
    k, n = params.k, params.n_players
    total = n + 1
    V = np.eye(2 * total)
    V[:4, :4] = tmsv_covariance(params.zeta_mag)
    a2 = params.a**2
    for i in range(1, k):
        m = 1 + i
        V[2 * m, 2 * m], V[2 * m + 1, 2 * m + 1] = a2, 1.0 / a2
        m = k + i
        V[2 * m, 2 * m], V[2 * m + 1, 2 * m + 1] = 1.0 / a2, a2
    return V


def encoded_covariance(params: SharingParams, g: EncodingMatrix) -> np.ndarray:
    """Covariance of ``(reference, share_1, ..., share_{2k-1})`` after encoding."""
    total = params.n_players + 1
    S = _point_transformation(g.g, range(1, total), total)
    return S @ dealer_covariance(params) @ S.T


def decoded_joint_covariance(
    params: SharingParams, g: EncodingMatrix, subset: Sequence[int]
) -> np.ndarray:
    """Exact covariance of (extracted secret, reference) after the collaborators decode."""
    dec = build_decoding(g, subset, params)
    total = params.n_players + 1
    V = encoded_covariance(params, g)
    S = _point_transformation(dec.transform, [1 + i for i in dec.subset], total)
    V = S @ V @ S.T
    idx = quadrature_indices([1 + dec.subset[0], 0])
    return V[np.ix_(idx, idx)]


def share_joint_covariance(params: SharingParams, g: EncodingMatrix, player: int) -> np.ndarray:
    """Covariance of (one undecoded share, reference)."""
    V = encoded_covariance(params, g)
    idx = quadrature_indices([1 + int(player), 0])
    return V[np.ix_(idx, idx)]


def subset_joint_covariance(
    params: SharingParams, g: EncodingMatrix, subset: Iterable[int]
) -> np.ndarray:
    """Covariance the referee receives from ``subset``.

    ``k`` or more players decode with their first ``k`` members; smaller
    groups cannot decode and forward the share of their lowest-indexed player.
    """
    subset = sorted(int(i) for i in subset)
    if len(subset) >= params.k:
        return decoded_joint_covariance(params, g, subset)
    if not subset:
        raise ValueError("empty subset")
    return share_joint_covariance(params, g, subset[0])


# closed form from the Wigner function --------------------------------------


@dataclass(frozen=True)
class WignerCoefficients:
    """``W = N exp(b1 q1^2 + b2 q2^2 + b3 q1 q2 + g1 p1^2 + g2 p2^2 + g3 p1 p2)``.

    Variables are in units where the vacuum variance is 1/2. ``det_q`` and
    ``det_p`` are ``b1 b2 - b3^2/4`` and ``g1 g2 - g3^2/4``, kept separately
    because subtracting the coefficients loses every digit at large squeezing.
    """

    N: float
    beta1: float
    beta2: float
    beta3: float
    gamma1: float
    gamma2: float
    gamma3: float
    det_q: float
    det_p: float

    def __call__(self, q1, p1, q2, p2):
        exponent = (
            self.beta1 * q1 * q1
            + self.beta2 * q2 * q2
            + self.beta3 * q1 * q2
            + self.gamma1 * p1 * p1
            + self.gamma2 * p2 * p2
            + self.gamma3 * p1 * p2
        )
        return self.N * np.exp(exponent)


def wigner_coefficients(zeta_mag: float, a: float, coef: LeakageCoefficients) -> WignerCoefficients:
    """Closed-form Wigner coefficients of the secret-reference pair.

    Written with ``cosh 2|zeta|`` and ``sinh 2|zeta|`` after dividing through
    by ``e^{2|zeta|}``, which keeps them finite for large squeezing. ``v2``
    plays the role in the position block that ``u2`` plays in the momentum
    block; ``v2 = 1`` gives the bare coefficients.
    """
    if not (a > 0 and math.isfinite(a)):
        raise FormulaDomainError(f"a must be positive and finite, got {a!r}")
    if not (zeta_mag >= 0 and math.isfinite(zeta_mag)):
        raise FormulaDomainError(f"|zeta| must be finite and >= 0, got {zeta_mag!r}")
    c, s = math.cosh(2 * zeta_mag), math.sinh(2 * zeta_mag)
    a2 = a * a
    dq = a2 + coef.v2 * c
    dp = a2 + coef.u2 * c
    return WignerCoefficients(
        N=a2 / (math.pi**2 * math.sqrt(dq * dp)),
        beta1=-(a2 * c + coef.v2) / dq,
        beta2=-(a2 * c) / dq,
        beta3=2 * a2 * s / dq,
        gamma1=-(a2 * c + coef.u2) / dp,
        gamma2=-(a2 * c) / dp,
        gamma3=-2 * a2 * s / dp,
        # cosh^2 - sinh^2 = 1 collapses the determinants
        det_q=a2 / dq,
        det_p=a2 / dp,
    )


def analytic_joint_covariance(zeta_mag: float, a: float, coef: LeakageCoefficients) -> np.ndarray:
    """4x4 covariance of (clean mode, noisy mode) from the Wigner moments.

    Mode 0 carries the untouched ``cosh 2|zeta|`` marginal and mode 1 the
    extra ``v2/a^2`` (position) and ``u2/a^2`` (momentum) noise; the noisy
    mode is the extracted secret and the clean one the reference. Each entry
    is the Gaussian moment integral of ``W`` times two, converting to the
    vacuum-equals-identity convention. Quadratures never mix, so the ``q``-``p``
    entries vanish.

    Raises:
        FormulaDomainError: if the coefficients do not define a normalisable
            Gaussian or the result is unphysical.
    """
    w = wigner_coefficients(zeta_mag, a, coef)
    b1, b2, b3 = -w.beta1, -w.beta2, w.beta3
    g1, g2, g3 = -w.gamma1, -w.gamma2, w.gamma3
    det_q, det_p = w.det_q, w.det_p
    if min(b1, b2, g1, g2, det_q, det_p) <= 0:
        raise FormulaDomainError("Wigner exponent is not negative definite")
    # b1 - b3^2/(4 b2) = det_q / b2, and likewise for the other Schur complements
    pi2 = math.pi**2
    V = np.zeros((4, 4))
    V[0, 0] = w.N * pi2 / (b2**0.5 * (det_q / b2) ** 1.5 * det_p**0.5)
    V[2, 2] = w.N * pi2 / (b1**0.5 * (det_q / b1) ** 1.5 * det_p**0.5)
    V[0, 2] = V[2, 0] = w.N * pi2 * b3 / (2 * det_q**1.5 * det_p**0.5)
    V[1, 1] = w.N * pi2 / (g2**0.5 * (det_p / g2) ** 1.5 * det_q**0.5)
    V[3, 3] = w.N * pi2 / (g1**0.5 * (det_p / g1) ** 1.5 * det_q**0.5)
    V[1, 3] = V[3, 1] = w.N * pi2 * g3 / (2 * det_p**1.5 * det_q**0.5)
    nu_minus = _smallest_symplectic_eigenvalue(zeta_mag, a, coef)
    if not nu_minus >= 1.0 - 1e-6:
        raise FormulaDomainError(f"closed form gave nu = {nu_minus:.9g} < 1")
    return V


def _closed_form_symplectic_eigenvalues(zeta_mag: float, a: float, coef: LeakageCoefficients) -> tuple[float, float]:
    """``(nu_plus, nu_minus)`` of the closed-form covariance, without cancellation.

    Position and momentum decouple, so ``nu^2`` are the eigenvalues of
    ``V_q V_p``. With ``x = v2/a^2``, ``y = u2/a^2`` and ``c = cosh 2|zeta|``
    the trace is ``2 + c (x + y) + x y`` and the determinant
    ``(1 + c x)(1 + c y)``; evaluating the matrices numerically would lose all
    precision once ``cosh 2|zeta|`` approaches ``1e8``. The discriminant
    ``trace^2 - 4 det`` expands to a sum of nonnegative terms.
    """
    c = math.cosh(2 * zeta_mag)
    x, y = coef.v2 / a**2, coef.u2 / a**2
    trace = 2.0 + c * (x + y) + x * y
    det = (1.0 + c * x) * (1.0 + c * y)
    disc = (c * (x - y)) ** 2 + x * y * (4.0 + 2.0 * c * (x + y) + x * y)
    big = (trace + math.sqrt(disc)) / 2.0
    return math.sqrt(big), math.sqrt(det / big)


def _smallest_symplectic_eigenvalue(zeta_mag: float, a: float, coef: LeakageCoefficients) -> float:
    return _closed_form_symplectic_eigenvalues(zeta_mag, a, coef)[1]


def extracted_secret_qmi(zeta_mag: float, a: float, coef: LeakageCoefficients) -> float:
    """Mutual information (bits) between the extracted secret and the reference."""
    V = analytic_joint_covariance(zeta_mag, a, coef)
    # no q-p correlations: each mode's symplectic eigenvalue is sqrt(V_qq V_pp)
    nu_a = math.sqrt(max(V[0, 0] * V[1, 1], 1.0))
    nu_b = math.sqrt(max(V[2, 2] * V[3, 3], 1.0))
    nu_plus, nu_minus = _closed_form_symplectic_eigenvalues(zeta_mag, a, coef)
    nu_minus = max(nu_minus, 1.0)
    qmi = (
        mode_entropy(nu_a)
        + mode_entropy(nu_b)
        - mode_entropy(nu_plus)
        - mode_entropy(nu_minus)
    )
    return max(float(qmi), 0.0)


def classify_exact(qmi: float, I_T_F: float, I_T_A: float) -> int:
    """2 if ``qmi >= I_T_A``, 0 if ``qmi <= I_T_F``, otherwise 1."""
    if I_T_F > I_T_A:
        raise ValueError(f"thresholds inverted: I_T_F={I_T_F} > I_T_A={I_T_A}")
    if qmi >= I_T_A:
        return 2
    if qmi <= I_T_F:
        return 0
    return 1


def qmi_curve(zeta_mag: float, a_grid, coef: LeakageCoefficients) -> list[tuple[float, float]]:
    """Rows ``(ln a, QMI)`` over ``a_grid``, sorted by ``ln a``."""
    a_grid = np.asarray(a_grid, dtype=float).ravel()
    if a_grid.size == 0:
        raise ValueError("a_grid is empty")
    if np.any(a_grid <= 0):
        raise ValueError("a_grid must be positive")
    rows = [(math.log(a), extracted_secret_qmi(zeta_mag, a, coef)) for a in np.sort(a_grid)]
    return rows


def write_qmi_curve_csv(path, rows: Iterable[tuple[float, float]]) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["ln_a", "qmi_bits"])
        for ln_a, qmi in rows:
            writer.writerow([repr(float(ln_a)), repr(float(qmi))])
