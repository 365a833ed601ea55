"""Shared numerical kernel: rank decisions, null-space bases, spectra, gains.

Every rank-sensitive decision in the package funnels through this module so
that a single tolerance policy governs them all.  The policy mirrors the
usual SVD cutoff: a singular value counts as nonzero when it exceeds

    max(n_rows, n_cols) * relative * sigma_max

optionally floored by an absolute threshold.  Schur/stability decisions carry
their own margin: an eigenvalue is "stable" only if its modulus stays below
1 - margin.

The gain constructors (`stabilizing_gain`, `place_poles`) build output
injections L for a pair (Abar, Cbar), i.e. they shape the spectrum of
Abar + L @ Cbar.  Both verify their own output and raise instead of
returning an unchecked gain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

__all__ = [
    "RankTolerance",
    "DEFAULT_TOL",
    "SCHUR_MARGIN",
    "SpectrumReport",
    "NumericalFailure",
    "ColumnRankDeficient",
    "NotDetectable",
    "NotObservable",
    "PlacementFailed",
    "rank",
    "right_null_basis",
    "left_null_basis",
    "left_inverse",
    "spectrum",
    "eig_assignment_error",
    "pbh_detectable",
    "undetectable_modes",
    "stabilizing_gain",
    "place_poles",
    "rowspace_angles",
]

_EPS = float(np.finfo(float).eps)

#: Default stability margin: eigenvalues with modulus >= 1 - SCHUR_MARGIN are
#: treated as not (safely) stable.
SCHUR_MARGIN = 1e-9


class NumericalFailure(RuntimeError):
    """A numerical routine could not certify its own result."""


class ColumnRankDeficient(ValueError):
    """A matrix expected to have full column rank does not."""


class NotDetectable(ValueError):
    """(Abar, Cbar) has an unstable mode invisible from Cbar."""


class NotObservable(ValueError):
    """(Abar, Cbar) fails the observability rank test."""


class PlacementFailed(NumericalFailure):
    """Pole placement could not produce a verified gain."""


@dataclass(frozen=True)
class RankTolerance:
    """Tolerance policy for numerical rank decisions.

    Attributes:
        relative: multiplies ``max(shape) * sigma_max`` to form the cutoff.
            Defaults to machine epsilon, matching the conventional SVD rank
            threshold for noise-free data.
        absolute_floor: lower bound on the cutoff, for data whose noise level
            is known a priori.  Zero by default.
    """

    relative: float = _EPS
    absolute_floor: float = 0.0

    def threshold(self, M: np.ndarray) -> float:
        """Effective cutoff for singular values of ``M``."""
        M = np.asarray(M)
        if M.size == 0:
            return self.absolute_floor
        sigma_max = float(np.linalg.norm(M, 2))
        cut = max(M.shape) * self.relative * sigma_max
        return max(cut, self.absolute_floor)


DEFAULT_TOL = RankTolerance()


@dataclass(frozen=True)
class SpectrumReport:
    """Eigenvalues of a square matrix together with a Schur verdict."""

    eigenvalues: np.ndarray
    spectral_radius: float
    is_schur: bool
    margin: float = SCHUR_MARGIN

    def moduli(self) -> np.ndarray:
        """Sorted eigenvalue moduli (ascending)."""
        return np.sort(np.abs(self.eigenvalues))


def _as_2d(M) -> np.ndarray:
    M = np.asarray(M, dtype=complex if np.iscomplexobj(M) else float)
    if M.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {M.shape}")
    return M


def rank(M, tol: RankTolerance = DEFAULT_TOL) -> int:
    """Numerical rank of ``M`` under the package tolerance policy."""
    M = _as_2d(M)
    if min(M.shape) == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    cut = max(max(M.shape) * tol.relative * s[0], tol.absolute_floor)
    return int(np.count_nonzero(s > cut))


def right_null_basis(M, tol: RankTolerance = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal basis of the right kernel, as columns.

    Returns a ``cols x (cols - rank)`` matrix Q with orthonormal columns and
    ``M @ Q ~= 0``.  For a full-column-rank input the result has zero width.
    """
    M = _as_2d(M)
    if M.shape[0] == 0:
        # No constraints: the kernel is everything.
        return np.eye(M.shape[1])
    _, s, Vt = np.linalg.svd(M)
    k = _rank_from_singular_values(s, M.shape, tol)
    return Vt[k:].T.copy()


def left_null_basis(M, tol: RankTolerance = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal basis of the left kernel, as rows.

    Returns a ``(rows - rank) x rows`` matrix N with orthonormal rows and
    ``N @ M ~= 0``.  A zero-column input yields the identity.
    """
    M = _as_2d(M)
    if M.shape[1] == 0:
        return np.eye(M.shape[0])
    U, s, _ = np.linalg.svd(M)
    k = _rank_from_singular_values(s, M.shape, tol)
    return U[:, k:].T.copy()


def _rank_from_singular_values(s, shape, tol: RankTolerance) -> int:
    if len(s) == 0 or s[0] == 0.0:
        return 0
    cut = max(max(shape) * tol.relative * s[0], tol.absolute_floor)
    return int(np.count_nonzero(s > cut))


def left_inverse(M, tol: RankTolerance = DEFAULT_TOL) -> np.ndarray:
    """Moore-Penrose left inverse of a full-column-rank matrix.

    Raises:
        ColumnRankDeficient: if ``rank(M) < M.shape[1]``.
    """
    M = _as_2d(M)
    r = rank(M, tol)
    if r < M.shape[1]:
        raise ColumnRankDeficient(
            f"matrix of shape {M.shape} has rank {r} < {M.shape[1]}"
        )
    return np.linalg.pinv(M, rcond=max(M.shape) * tol.relative)


def spectrum(M, margin: float = SCHUR_MARGIN) -> SpectrumReport:
    """Eigenvalues and Schur verdict of a square matrix.

    The verdict is conservative: ``is_schur`` is True only when the spectral
    radius is strictly below ``1 - margin``.
    """
    M = _as_2d(M)
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"spectrum needs a square matrix, got {M.shape}")
    if M.shape[0] == 0:
        return SpectrumReport(np.zeros(0, dtype=complex), 0.0, True, margin)
    try:
        ev = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - very rare
        raise NumericalFailure(f"eigenvalue computation failed: {exc}") from exc
    ev = np.sort_complex(ev)
    radius = float(np.max(np.abs(ev)))
    return SpectrumReport(ev, radius, radius < 1.0 - margin, margin)


def eig_assignment_error(eigenvalues, targets) -> float:
    """Max distance of an optimal matching between two eigenvalue multisets.

    Used to compare a computed spectrum against a requested one without
    caring about ordering.  Both arguments must have equal length.
    """
    a = np.atleast_1d(np.asarray(eigenvalues, dtype=complex))
    b = np.atleast_1d(np.asarray(targets, dtype=complex))
    if a.shape != b.shape:
        raise ValueError("eigenvalue multisets must have equal size")
    if a.size == 0:
        return 0.0
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


def _observability_matrix(Abar: np.ndarray, Cbar: np.ndarray) -> np.ndarray:
    n = Abar.shape[0]
    blocks = []
    Ak = np.eye(n)
    for _ in range(n):
        blocks.append(Cbar @ Ak)
        Ak = Ak @ Abar
    return np.vstack(blocks) if blocks else np.zeros((0, n))


def undetectable_modes(
    Abar,
    Cbar,
    tol: RankTolerance = DEFAULT_TOL,
    margin: float = SCHUR_MARGIN,
) -> list[complex]:
    """Eigenvalues of Abar that defeat the PBH detectability test.

    An eigenvalue lam with ``|lam| >= 1 - margin`` is returned when
    ``[lam*I - Abar; Cbar]`` drops below full column rank.
    """
    Abar = _as_2d(Abar)
    Cbar = _as_2d(Cbar)
    n = Abar.shape[0]
    if Abar.shape[1] != n or Cbar.shape[1] != n:
        raise ValueError("Abar must be square and Cbar must have n columns")
    if n == 0:
        return []
    bad: list[complex] = []
    for lam in np.linalg.eigvals(Abar):
        if abs(lam) < 1.0 - margin:
            continue
        pencil = np.vstack([lam * np.eye(n) - Abar, Cbar.astype(complex)])
        if rank(pencil, tol) < n:
            bad.append(complex(lam))
    return bad


def pbh_detectable(
    Abar,
    Cbar,
    tol: RankTolerance = DEFAULT_TOL,
    margin: float = SCHUR_MARGIN,
) -> bool:
    """True iff every unstable mode of Abar is visible from Cbar (PBH test)."""
    return not undetectable_modes(Abar, Cbar, tol, margin)


def stabilizing_gain(
    Abar,
    Cbar,
    tol: RankTolerance = DEFAULT_TOL,
    margin: float = SCHUR_MARGIN,
    rel_tol: float = 1e-10,
    max_iter: int = 10000,
) -> np.ndarray:
    """Output-injection gain L making ``Abar + L @ Cbar`` Schur.

    Iterates the discrete Riccati difference equation with unit weights,

        P+ = Abar P Abar' - K (Cbar P Abar') + I,
        K  = Abar P Cbar' (Cbar P Cbar' + I)^-1,

    until the iterate's relative change drops below ``rel_tol``, then returns
    ``L = -K``.  Detectability of (Abar, Cbar) guarantees convergence to the
    stabilizing solution; it is checked up front via the PBH test.

    Raises:
        NotDetectable: if the PBH test fails.
        NumericalFailure: if the iteration hits ``max_iter`` or the final
            closed loop is not Schur.
    """
    Abar = _as_2d(Abar)
    Cbar = _as_2d(Cbar)
    n = Abar.shape[0]
    q = Cbar.shape[0]
    bad = undetectable_modes(Abar, Cbar, tol, margin)
    if bad:
        raise NotDetectable(f"undetectable unstable modes: {bad}")
    if n == 0:
        return np.zeros((0, q))
    if q == 0:
        # Nothing to inject; detectability already proved Abar is Schur.
        return np.zeros((n, 0))

    def _gain(P: np.ndarray) -> np.ndarray:
        G = Cbar @ P @ Cbar.T + np.eye(q)
        return np.linalg.solve(G.T, (Abar @ P @ Cbar.T).T).T

    P = np.eye(n)
    for _ in range(max_iter):
        with np.errstate(over="ignore", invalid="ignore"):
            K = _gain(P)
            P_next = Abar @ P @ Abar.T - K @ (Cbar @ P @ Abar.T) + np.eye(n)
            P_next = 0.5 * (P_next + P_next.T)
            step = np.linalg.norm(P_next - P)
            bound = rel_tol * (1.0 + np.linalg.norm(P_next))
        if not (np.isfinite(P_next).all() and np.isfinite(bound)):
            # The iterate (or already its Frobenius norm) has left float64
            # range, so there is no bounded fixed point to converge to.
            # This happens for pairs that are detectable only marginally
            # (or fed in with absurd scales); fail loudly instead of letting
            # inf <= inf pass as convergence or a downstream solve throw a
            # bare LinAlgError.
            raise NumericalFailure(
                "Riccati iteration diverged (non-finite iterate); the pair "
                "is not stabilizable by output injection at this scale"
            )
        if step <= bound:
            P = P_next
            break
        P = P_next
    else:
        raise NumericalFailure(
            f"Riccati iteration did not converge within {max_iter} steps"
        )
    L = -_gain(P)
    closed = spectrum(Abar + L @ Cbar, margin)
    if not closed.is_schur:
        raise NumericalFailure(
            "Riccati gain failed verification: spectral radius "
            f"{closed.spectral_radius:.6g}"
        )
    return L


def _ackermann(Abar: np.ndarray, c_row: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """Single-output Ackermann gain: ``Abar + l @ c_row`` gets char poly coeffs."""
    n = Abar.shape[0]
    phi = np.zeros((n, n))
    Ak = np.eye(n)
    for a in coeffs[::-1]:
        phi = phi + a * Ak
        Ak = Ak @ Abar
    obs = np.vstack([c_row @ np.linalg.matrix_power(Abar, i) for i in range(n)])
    w = np.linalg.solve(obs, np.eye(n)[:, -1])
    return -(phi @ w)


def place_poles(
    Abar,
    Cbar,
    poles,
    tol: RankTolerance = DEFAULT_TOL,
    seed: int = 0,
    max_attempts: int = 30,
    verify_tol: float = 1e-6,
) -> np.ndarray:
    """Output-injection gain L placing the spectrum of ``Abar + L @ Cbar``.

    ``poles`` must be a conjugation-closed multiset of n values.  The
    single-output case uses Ackermann's formula.  The multi-output case
    reduces to it through a random (seeded) output combination ``v' Cbar``,
    optionally after a preliminary random injection to make the pair cyclic,
    and retries with fresh draws until the placed spectrum verifies against
    the request within ``verify_tol`` (optimal-assignment matching).

    Raises:
        NotObservable: if the observability rank test fails.
        ValueError: if ``poles`` is not conjugation-closed or has wrong size.
        PlacementFailed: if no attempt produces a verified gain.
    """
    Abar = _as_2d(Abar)
    Cbar = _as_2d(Cbar)
    n = Abar.shape[0]
    q = Cbar.shape[0]
    poles = np.atleast_1d(np.asarray(poles, dtype=complex))
    if poles.shape != (n,):
        raise ValueError(f"need exactly {n} poles, got {poles.shape}")
    coeffs = np.atleast_1d(np.poly(poles)) if n else np.ones(1)
    if np.max(np.abs(coeffs.imag)) > 1e-9 * max(1.0, np.max(np.abs(coeffs))):
        raise ValueError("pole multiset must be closed under conjugation")
    coeffs = coeffs.real
    if n == 0:
        return np.zeros((0, q))

    def _verified(L: np.ndarray) -> bool:
        ev = np.linalg.eigvals(Abar + L @ Cbar)
        return eig_assignment_error(ev, poles) <= verify_tol

    # L = 0 needs no observability at all; accept it whenever the spectrum
    # already matches (this also sidesteps the eps**(1/k) eigenvalue
    # splitting of defective placed matrices).
    zero = np.zeros((n, q))
    if _verified(zero):
        return zero

    if rank(_observability_matrix(Abar, Cbar), tol) < n:
        raise NotObservable("observability matrix is rank deficient")

    if q == 1:
        L = _ackermann(Abar, Cbar[0], coeffs).reshape(n, 1)
        if _verified(L):
            return L
        raise PlacementFailed("single-output Ackermann gain failed verification")

    rng = np.random.default_rng(seed)
    for attempt in range(max_attempts):
        # First sweep leaves Abar untouched; later sweeps add a random
        # preliminary injection so non-cyclic Abar still reduces.
        if attempt < max(1, max_attempts // 3):
            L0 = np.zeros((n, q))
        else:
            L0 = 0.5 * rng.standard_normal((n, q))
        v = rng.standard_normal(q)
        A0 = Abar + L0 @ Cbar
        c_row = v @ Cbar
        if rank(_observability_matrix(A0, c_row.reshape(1, n)), tol) < n:
            continue
        l_col = _ackermann(A0, c_row, coeffs)
        L = L0 + np.outer(l_col, v)
        if _verified(L):
            return L
    raise PlacementFailed(
        f"no verified gain after {max_attempts} attempts (seed {seed})"
    )


def rowspace_angles(A, B) -> np.ndarray:
    """Principal angles (radians) between the row spaces of two matrices."""
    A = _as_2d(A)
    B = _as_2d(B)
    return scipy.linalg.subspace_angles(A.T, B.T)
