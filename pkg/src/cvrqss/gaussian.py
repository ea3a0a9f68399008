"""Gaussian states, symplectic linear algebra and covariance-matrix entropies.

Conventions used throughout the package:

* quadratures are ordered ``(q_1, p_1, ..., q_n, p_n)``;
* the vacuum covariance matrix is the identity, so pure states have every
  symplectic eigenvalue equal to one;
* entropies and mutual informations are reported in bits.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import schur

from .errors import (
    InadmissibleSqueezing,
    InvalidDimension,
    NotSymplectic,
    UnphysicalState,
)

SYMMETRY_TOL = 1e-10
PHYSICALITY_TOL = 1e-9
SYMPLECTIC_TOL = 1e-9


def symplectic_form(n: int) -> np.ndarray:
    """Return the ``2n x 2n`` symplectic form, a direct sum of ``[[0, 1], [-1, 0]]``."""
    if int(n) != n or n < 1:
        raise InvalidDimension(f"number of modes must be a positive integer, got {n!r}")
    n = int(n)
    return np.kron(np.eye(n), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def _n_modes_of(matrix: np.ndarray) -> int:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InvalidDimension(f"expected a square matrix, got shape {matrix.shape}")
    if matrix.shape[0] == 0 or matrix.shape[0] % 2:
        raise InvalidDimension(f"expected an even dimension, got {matrix.shape[0]}")
    return matrix.shape[0] // 2


def is_symplectic(S, tol: float = SYMPLECTIC_TOL) -> bool:
    """True iff ``max |S Omega S^T - Omega| <= tol``."""
    S = np.asarray(S, dtype=float)
    omega = symplectic_form(_n_modes_of(S))
    return bool(np.max(np.abs(S @ omega @ S.T - omega)) <= tol)


def _scaled_symplectic_tol(S: np.ndarray, tol: float) -> float:
    # round-off in S Omega S^T grows with the squared entry size
    return tol * max(1.0, float(np.max(np.abs(S))) ** 2)


def quadrature_indices(modes: Iterable[int]) -> np.ndarray:
    """Indices of ``(q_m, p_m)`` for every mode ``m`` in ``modes``, in order."""
    return np.array([i for m in modes for i in (2 * m, 2 * m + 1)], dtype=int)


def _check_covariance(cov: np.ndarray) -> int:
    n = _n_modes_of(cov)
    if not np.all(np.isfinite(cov)):
        raise UnphysicalState("covariance matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(cov))))
    if np.max(np.abs(cov - cov.T)) > SYMMETRY_TOL * scale:
        raise UnphysicalState("covariance matrix is not symmetric")
    return n


def symplectic_spectrum(V) -> np.ndarray:
    """Symplectic eigenvalues of ``V``, sorted in descending order.

    They are the moduli of the eigenvalues of ``i Omega V``; each modulus occurs
    twice, so the sorted moduli are paired and each pair averaged.

    Raises:
        UnphysicalState: if ``V`` is not symmetric positive definite.
    """
    V = np.asarray(V, dtype=float)
    n = _check_covariance(V)
    if np.linalg.eigvalsh(V)[0] <= 0:
        raise UnphysicalState("covariance matrix is not positive definite")
    moduli = np.sort(np.abs(np.linalg.eigvals(symplectic_form(n) @ V)))[::-1]
    pairs = moduli.reshape(n, 2)
    scale = np.maximum(pairs[:, 0], 1.0)
    if np.any(np.abs(pairs[:, 0] - pairs[:, 1]) > 1e-8 * scale):
        raise UnphysicalState("eigenvalues of i Omega V do not pair up")
    return pairs.mean(axis=1)


def two_mode_symplectic_eigenvalues(A, B, C) -> tuple[float, float]:
    """Closed-form ``(nu_plus, nu_minus)`` of ``[[A, C], [C^T, B]]``.

    Uses ``Delta = det A + det B + 2 det C`` and
    ``nu_pm^2 = (Delta +- sqrt(Delta^2 - 4 det V)) / 2``. Near a degenerate
    pair the square root amplifies rounding to about ``sqrt(eps) |V|^2``;
    :func:`symplectic_spectrum` is the accurate general-purpose route.
    """
    A, B, C = (np.asarray(x, dtype=float) for x in (A, B, C))
    for block in (A, B, C):
        if block.shape != (2, 2):
            raise InvalidDimension("two-mode blocks must be 2x2")
    V = np.block([[A, C], [C.T, B]])
    delta = np.linalg.det(A) + np.linalg.det(B) + 2.0 * np.linalg.det(C)
    det_v = np.linalg.det(V)
    disc = delta * delta - 4.0 * det_v
    # rounding in det V grows like |V|^4, so judge the sign on that scale
    scale = max(1.0, delta * delta, np.linalg.norm(V, 2) ** 4)
    if disc < -1e-12 * scale:
        raise UnphysicalState(f"negative discriminant {disc:g}")
    root = math.sqrt(max(disc, 0.0))
    nu_sq_minus = (delta - root) / 2.0
    if nu_sq_minus < 0:
        raise UnphysicalState("negative squared symplectic eigenvalue")
    # det V / nu_+^2 avoids cancellation in the smaller root
    nu_sq_plus = (delta + root) / 2.0
    if nu_sq_plus > 0 and det_v > 0:
        nu_sq_minus = det_v / nu_sq_plus
    return math.sqrt(nu_sq_plus), math.sqrt(nu_sq_minus)


def mode_entropy(nu):
    """Entropy in bits of a thermal mode with symplectic eigenvalue ``nu``.

    ``g(nu) = nu+ log2 nu+ - nu- log2 nu-`` with ``nu+- = (nu +- 1) / 2`` and
    ``0 log 0 = 0``. Works elementwise on arrays. Evaluated as
    ``log2 nu+ + nu- log2(1 + 1/nu-)``, which avoids cancelling two large
    terms when ``nu`` is large.
    """
    nu = np.asarray(nu, dtype=float)
    minus = np.clip((nu - 1.0) / 2.0, 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        tail = np.where(minus > 0, minus * np.log1p(1.0 / np.where(minus > 0, minus, 1.0)), 0.0)
    out = np.log2(minus + 1.0) + tail / math.log(2.0)
    return out if out.ndim else float(out)


def _as_cov(V) -> np.ndarray:
    if isinstance(V, GaussianState):
        return V.cov
    return np.asarray(V, dtype=float)


def _physical_spectrum(V: np.ndarray) -> np.ndarray:
    nu = symplectic_spectrum(V)
    if nu[-1] < 1.0 - PHYSICALITY_TOL:
        raise UnphysicalState(f"smallest symplectic eigenvalue {nu[-1]:.12g} < 1")
    return nu


def von_neumann_entropy(V) -> float:
    """Von Neumann entropy (bits) of the Gaussian state with covariance ``V``."""
    nu = _physical_spectrum(_as_cov(V))
    return float(np.sum(mode_entropy(nu)))


def shannon_entropy(p) -> float:
    """Shannon entropy in bits, ``-sum p log2 p`` with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=float).ravel()
    if p.size == 0 or np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("probabilities must be finite and nonnegative")
    if abs(p.sum() - 1.0) > 1e-12:
        raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
    nz = p[p > 0]
    return float(-np.sum(nz * np.log2(nz)) + 0.0)


def _check_split(n: int, split) -> tuple[list[int], list[int]]:
    a, b = (sorted(int(m) for m in part) for part in split)
    if not a or not b:
        raise ValueError("both sides of the split must be nonempty")
    if set(a) & set(b):
        raise ValueError("split parts overlap")
    if sorted(a + b) != list(range(n)):
        raise ValueError(f"split {split!r} does not cover modes 0..{n - 1}")
    return a, b


def quantum_mutual_information(V, split=None) -> float:
    """``H(A) + H(B) - H(AB)`` for a bipartition of the modes of ``V``.

    ``split`` is a pair of mode-index collections; it defaults to the first
    mode against the rest.
    """
    V = _as_cov(V)
    n = _n_modes_of(V)
    if split is None:
        split = ([0], list(range(1, n)))
    a, b = _check_split(n, split)
    ia, ib = quadrature_indices(a), quadrature_indices(b)
    return (
        von_neumann_entropy(V[np.ix_(ia, ia)])
        + von_neumann_entropy(V[np.ix_(ib, ib)])
        - von_neumann_entropy(V)
    )


def conditional_entropy(V, split) -> float:
    """``H(A|B) = H(AB) - H(B)`` for ``split = (A, B)``."""
    V = _as_cov(V)
    a, b = _check_split(_n_modes_of(V), split)
    ib = quadrature_indices(b)
    return von_neumann_entropy(V) - von_neumann_entropy(V[np.ix_(ib, ib)])


@dataclass(frozen=True, eq=False)
class GaussianState:
    """Mean vector and covariance matrix of an ``n``-mode Gaussian state."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).ravel()
        cov = np.array(self.cov, dtype=float)
        n = _check_covariance(cov)
        if mean.shape != (2 * n,):
            raise InvalidDimension(f"mean has length {mean.size}, expected {2 * n}")
        _physical_spectrum(cov)
        cov = (cov + cov.T) / 2.0
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def n_modes(self) -> int:
        return self.cov.shape[0] // 2

    @classmethod
    def vacuum(cls, n: int) -> "GaussianState":
        return cls(np.zeros(2 * n), np.eye(2 * n))

    def symplectic_spectrum(self) -> np.ndarray:
        return symplectic_spectrum(self.cov)

    def entropy(self) -> float:
        return von_neumann_entropy(self.cov)

    def to_dict(self) -> dict:
        return {"n_modes": self.n_modes, "mean": self.mean.tolist(), "cov": self.cov.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "GaussianState":
        state = cls(data["mean"], data["cov"])
        if "n_modes" in data and int(data["n_modes"]) != state.n_modes:
            raise InvalidDimension(
                f"n_modes={data['n_modes']} disagrees with a {state.cov.shape[0]}-dim covariance"
            )
        return state

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "GaussianState":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class SymplecticMap:
    """Affine Gaussian map ``x -> S x + d``."""

    S: np.ndarray
    d: np.ndarray = field(default=None)

    def __post_init__(self):
        S = np.array(self.S, dtype=float)
        n = _n_modes_of(S)
        d = np.zeros(2 * n) if self.d is None else np.array(self.d, dtype=float).ravel()
        if d.shape != (2 * n,):
            raise InvalidDimension(f"displacement has length {d.size}, expected {2 * n}")
        if not is_symplectic(S, _scaled_symplectic_tol(S, SYMPLECTIC_TOL)):
            raise NotSymplectic("S Omega S^T differs from Omega")
        S.flags.writeable = False
        d.flags.writeable = False
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "d", d)

    @property
    def n_modes(self) -> int:
        return self.S.shape[0] // 2

    @classmethod
    def identity(cls, n: int) -> "SymplecticMap":
        return cls(np.eye(2 * n))

    @classmethod
    def displacement(cls, d) -> "SymplecticMap":
        d = np.asarray(d, dtype=float).ravel()
        return cls(np.eye(d.size), d)


@dataclass(frozen=True)
class SqueezeParam:
    """Complex squeezing ``zeta = s exp(i theta)`` with a device bound ``cap``.

    Admissible iff ``|zeta| <= cap**2`` (the device disk is taken literally).
    """

    s: float
    theta: float = 0.0
    cap: float = math.inf

    def __post_init__(self):
        if not (self.s >= 0 and math.isfinite(self.s)):
            raise InadmissibleSqueezing(f"squeezing magnitude must be finite and >= 0, got {self.s}")
        if not self.cap >= 0:
            raise InadmissibleSqueezing(f"cap must be >= 0, got {self.cap}")
        object.__setattr__(self, "theta", float(self.theta) % (2 * math.pi))
        if self.s > self.cap**2:
            raise InadmissibleSqueezing(f"|zeta| = {self.s} exceeds cap^2 = {self.cap**2}")

    @property
    def zeta(self) -> complex:
        return self.s * complex(math.cos(self.theta), math.sin(self.theta))


def _phase_reflection(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [s, -c]])


def single_mode_squeezer(zeta: SqueezeParam) -> SymplecticMap:
    """Quadrature matrix of the single-mode squeezer, ``exp(-s Z_theta)``.

    ``Z_theta = [[cos, sin], [sin, -cos]]`` squares to the identity, so the
    exponential is ``cosh(s) I - sinh(s) Z_theta``; at ``theta = 0`` this is
    ``diag(e^-s, e^s)``.
    """
    s = zeta.s
    S = math.cosh(s) * np.eye(2) - math.sinh(s) * _phase_reflection(zeta.theta)
    return SymplecticMap(S)


def two_mode_squeezer(zeta: SqueezeParam) -> SymplecticMap:
    """Quadrature matrix of the two-mode squeezer, ``exp(s K_theta)``.

    ``K_theta = [[0, Z_theta], [Z_theta, 0]]``; on vacuum it gives blocks
    ``A = B = cosh(2s) I`` and ``C = sinh(2s) Z_theta``.
    """
    s = zeta.s
    Z = _phase_reflection(zeta.theta)
    ch, sh = math.cosh(s), math.sinh(s)
    S = np.block([[ch * np.eye(2), sh * Z], [sh * Z, ch * np.eye(2)]])
    return SymplecticMap(S)


def apply_gaussian_map(state: GaussianState, gmap: SymplecticMap) -> GaussianState:
    """``mean -> S mean + d`` and ``cov -> S cov S^T``."""
    if gmap.n_modes != state.n_modes:
        raise InvalidDimension(
            f"map acts on {gmap.n_modes} modes, state has {state.n_modes}"
        )
    S = gmap.S
    return GaussianState(S @ state.mean + gmap.d, S @ state.cov @ S.T)


def tmsv_state(zeta: SqueezeParam) -> GaussianState:
    """Two-mode squeezed vacuum: the two-mode squeezer applied to vacuum."""
    return apply_gaussian_map(GaussianState.vacuum(2), two_mode_squeezer(zeta))


def tmsv_covariance(s: float, theta: float = 0.0) -> np.ndarray:
    """Closed-form TMSV covariance for squeezing magnitude ``s``."""
    c, sh = math.cosh(2 * s), math.sinh(2 * s)
    Z = _phase_reflection(theta)
    return np.block([[c * np.eye(2), sh * Z], [sh * Z, c * np.eye(2)]])


def partial_trace(state: GaussianState, keep: Sequence[int]) -> GaussianState:
    """Reduced state on the modes in ``keep`` (in the order given)."""
    keep = [int(m) for m in keep]
    if not keep:
        raise ValueError("keep must name at least one mode")
    if len(set(keep)) != len(keep) or min(keep) < 0 or max(keep) >= state.n_modes:
        raise ValueError(f"invalid mode subset {keep!r} for {state.n_modes} modes")
    idx = quadrature_indices(keep)
    return GaussianState(state.mean[idx], state.cov[np.ix_(idx, idx)])


def williamson_decomposition(V) -> tuple[SymplecticMap, np.ndarray]:
    """Factor ``V = S diag(nu (x) (1, 1)) S^T`` with ``S`` symplectic.

    Built from the real Schur form of ``V^-1/2 Omega V^-1/2``: its 2x2 blocks
    are ``[[0, 1/nu_k], [-1/nu_k, 0]]`` once column pairs are oriented, and
    ``S = V^1/2 K D^-1/2`` then satisfies both identities. ``nu`` is returned in
    descending order.
    """
    V = np.asarray(_as_cov(V), dtype=float)
    n = _check_covariance(V)
    V = (V + V.T) / 2.0
    w, U = np.linalg.eigh(V)
    if w[0] <= 0:
        raise UnphysicalState("covariance matrix is singular or indefinite")
    sqrt_v = (U * np.sqrt(w)) @ U.T
    inv_sqrt_v = (U / np.sqrt(w)) @ U.T
    M = inv_sqrt_v @ symplectic_form(n) @ inv_sqrt_v
    M = (M - M.T) / 2.0
    T, K = schur(M, output="real")
    inv_nu = np.empty(n)
    for k in range(n):
        i, j = 2 * k, 2 * k + 1
        if T[i, j] < 0:
            K[:, [i, j]] = K[:, [j, i]]
            T[[i, j], :] = T[[j, i], :]
            T[:, [i, j]] = T[:, [j, i]]
        inv_nu[k] = (T[i, j] - T[j, i]) / 2.0
    nu = 1.0 / inv_nu
    order = np.argsort(-nu, kind="stable")
    cols = quadrature_indices(order)
    K = K[:, cols]
    nu = nu[order]
    S = sqrt_v @ K @ np.diag(np.repeat(1.0 / np.sqrt(nu), 2))
    return SymplecticMap(S), nu


def random_symplectic(n: int, rng: np.random.Generator, scale: float = 0.5) -> np.ndarray:
    """Random symplectic matrix ``exp(Omega H)`` with symmetric ``H`` of size ``scale``."""
    from scipy.linalg import expm

    H = rng.normal(scale=scale, size=(2 * n, 2 * n))
    H = (H + H.T) / 2.0
    return expm(symplectic_form(n) @ H)


def random_covariance(
    n: int,
    rng: np.random.Generator,
    nu_range: tuple[float, float] = (1.0, 5.0),
    scale: float = 0.5,
) -> np.ndarray:
    """Random physical covariance ``S diag(nu) S^T`` with ``nu`` uniform in ``nu_range``."""
    nu = rng.uniform(*nu_range, size=n)
    S = random_symplectic(n, rng, scale)
    V = S @ np.diag(np.repeat(nu, 2)) @ S.T
    return (V + V.T) / 2.0


__all__ = [
    "GaussianState",
    "SqueezeParam",
    "SymplecticMap",
    "apply_gaussian_map",
    "conditional_entropy",
    "is_symplectic",
    "mode_entropy",
    "partial_trace",
    "quadrature_indices",
    "quantum_mutual_information",
    "random_covariance",
    "random_symplectic",
    "shannon_entropy",
    "single_mode_squeezer",
    "symplectic_form",
    "symplectic_spectrum",
    "tmsv_covariance",
    "tmsv_state",
    "two_mode_squeezer",
    "two_mode_symplectic_eigenvalues",
    "von_neumann_entropy",
    "williamson_decomposition",
]
