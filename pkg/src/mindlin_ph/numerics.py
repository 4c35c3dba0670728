"""Dense linear-algebra kernels used by the synthesis pipeline."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

EPS = np.finfo(float).eps


class NumericsError(RuntimeError):
    pass


class NotSkewError(ValueError):
    pass


class DichotomyError(NumericsError):
    """The Hamiltonian matrix has eigenvalues on the imaginary axis."""

    def __init__(self, message, min_abs_real=None):
        super().__init__(message)
        self.min_abs_real = min_abs_real


class IndefiniteWeightError(ValueError):
    pass


class StabilizabilityError(NumericsError):
    def __init__(self, message, modes=()):
        super().__init__(message)
        self.modes = tuple(modes)


def _dense(A) -> np.ndarray:
    if sp.issparse(A):
        return A.toarray()
    return np.asarray(A, dtype=float)


def eigenvalues(A) -> np.ndarray:
    """All eigenvalues of a real square matrix (LAPACK ``geev``: balancing,
    Hessenberg reduction and implicitly shifted QR)."""
    A = _dense(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    if A.size == 0:
        return np.zeros(0, dtype=complex)
    try:
        return la.eigvals(A, check_finite=False).astype(complex)
    except la.LinAlgError as exc:
        raise NumericsError(f"eigenvalue iteration did not converge: {exc}") from exc


# --- skew-symmetric canonical form ---------------------------------------


@dataclass(frozen=True)
class SkewDecomposition:
    """Real orthogonal ``U`` with ``U^T J U ~= D``.

    ``D`` holds ``k`` blocks ``[[0, -s_i], [s_i, 0]]`` with ``s_i`` in
    ``sqrt_alphas`` (descending), followed by an ``n - 2k`` zero block.
    """

    U: np.ndarray
    sqrt_alphas: np.ndarray
    D: np.ndarray
    k: int

    @property
    def alphas(self) -> np.ndarray:
        return self.sqrt_alphas**2

    @property
    def n(self) -> int:
        return self.U.shape[0]


def canonical_skew(sqrt_alphas, n: int) -> np.ndarray:
    D = np.zeros((n, n))
    for i, s in enumerate(sqrt_alphas):
        D[2 * i, 2 * i + 1] = -s
        D[2 * i + 1, 2 * i] = s
    return D


def _project_out(U: np.ndarray, v: np.ndarray) -> np.ndarray:
    if U.shape[1] == 0:
        return v.copy()
    # two passes of classical Gram-Schmidt
    v = v - U @ (U.T @ v)
    return v - U @ (U.T @ v)


def skew_block_diagonalize(J, rank_tol: float | None = None) -> SkewDecomposition:
    """Orthogonal block diagonalization of a real skew-symmetric matrix.

    Works from the symmetric eigenproblem of ``J^T J``: each eigenvector
    ``v`` with eigenvalue ``alpha > rank_tol`` is paired with
    ``J v / sqrt(alpha)``, which spans a 2-D invariant subspace of ``J``.
    Repeated ``alpha`` are handled by orthogonalizing later candidates
    against the pairs already formed.
    """
    J = _dense(J)
    n = J.shape[0]
    normJ = np.linalg.norm(J)
    if J.shape != (n, n):
        raise NotSkewError("matrix must be square")
    if np.linalg.norm(J + J.T) > 1e-12 * normJ:
        raise NotSkewError(
            f"matrix is not skew-symmetric: |J + J^T| = {np.linalg.norm(J + J.T):.3e}"
        )
    if n == 0 or normJ == 0.0:
        return SkewDecomposition(np.eye(n), np.zeros(0), np.zeros((n, n)), 0)

    lam, V = la.eigh(J.T @ J)
    order = np.argsort(lam)[::-1]
    lam, V = lam[order], V[:, order]
    if rank_tol is None:
        rank_tol = np.sqrt(EPS) * lam[0]
    count = int(np.sum(lam > rank_tol))
    k = (count + 1) // 2

    cols: list[np.ndarray] = []
    svals: list[float] = []
    candidates = [V[:, i] for i in range(count)]
    pos = 0
    while len(svals) < k:
        U = np.column_stack(cols) if cols else np.zeros((n, 0))
        v = None
        while pos < len(candidates):
            c = _project_out(U, candidates[pos])
            pos += 1
            if np.linalg.norm(c) > 0.5:
                v = c
                break
        if v is None:
            # leftover weight spread over skipped candidates: rebuild them
            W = _project_out(U, V[:, :count])
            Ws, sv, _ = np.linalg.svd(W, full_matrices=False)
            candidates = [Ws[:, i] for i in range(int(np.sum(sv > 0.5)))]
            pos = 0
            if not candidates:
                raise NumericsError("could not complete the skew pairing")
            continue
        v /= np.linalg.norm(v)
        Jv = J @ v
        w = _project_out(U, Jv)
        w -= v * (v @ w)
        w /= np.linalg.norm(w)
        cols.extend([v, w])
        svals.append(float(w @ Jv))

    Udyn = np.column_stack(cols) if cols else np.zeros((n, 0))
    rest = n - 2 * k
    if rest > 0:
        C = _project_out(Udyn, V[:, count:])
        Z, _, _ = np.linalg.svd(C, full_matrices=False)
        Ufull = np.column_stack([Udyn, Z[:, :rest]])
    else:
        Ufull = Udyn
    s = np.array(svals)
    return SkewDecomposition(Ufull, s, canonical_skew(s, n), k)


# --- Riccati equations ---------------------------------------------------


@dataclass(frozen=True)
class RiccatiSolution:
    X: np.ndarray
    residual_norm: float
    stabilizing: bool
    scale: float = 1.0
    closed_loop_max_real: float = float("nan")


def hamiltonian_matrix(A, S, Q) -> np.ndarray:
    A, S, Q = _dense(A), _dense(S), _dense(Q)
    return np.block([[A, S], [-Q, -A.T]])


def dichotomy_margin(H: np.ndarray) -> tuple[float, float]:
    """``(min |Re lambda|, ||H||_2)`` over the spectrum of ``H``."""
    lam = eigenvalues(H)
    return float(np.min(np.abs(lam.real))), float(np.linalg.norm(H, 2))


def care_residual(A, S, Q, X) -> np.ndarray:
    return A.T @ X + X @ A + X @ S @ X + Q


def solve_care(A, S, Q, imag_tol: float = 1e-8) -> RiccatiSolution:
    """Stabilizing solution of ``A^T X + X A + X S X + Q = 0``.

    Uses the ordered real Schur form of ``[[A, S], [-Q, -A^T]]``; the
    stable invariant subspace ``[U1; U2]`` gives ``X = U2 U1^-1``.
    Raises :class:`DichotomyError` when some eigenvalue has
    ``|Re| < imag_tol * ||H||_2``.
    """
    A, S, Q = _dense(A), _dense(S), _dense(Q)
    n = A.shape[0]
    if S.shape != (n, n) or Q.shape != (n, n):
        raise ValueError("A, S, Q must be square of equal size")
    H = hamiltonian_matrix(A, S, Q)
    margin, normH = dichotomy_margin(H)
    if margin <= imag_tol * normH:
        raise DichotomyError(
            f"Hamiltonian matrix has an eigenvalue on the imaginary axis "
            f"(min |Re| = {margin:.3e}, tol = {imag_tol * normH:.3e})",
            min_abs_real=margin,
        )
    T, Z, sdim = la.schur(H, output="real", sort="lhp")
    if sdim != n:
        raise DichotomyError(f"stable subspace has dimension {sdim}, expected {n}")
    U1, U2 = Z[:n, :n], Z[n:, :n]
    try:
        X = la.solve(U1.T, U2.T).T
    except la.LinAlgError as exc:
        raise NumericsError("stable subspace is not a graph (U1 singular)") from exc
    if np.linalg.cond(U1) > 1 / EPS:
        raise NumericsError("stable subspace is not a graph (U1 singular)")
    X = 0.5 * (X + X.T)
    res = np.linalg.norm(care_residual(A, S, Q, X))
    scale = (
        np.linalg.norm(A) * np.linalg.norm(X)
        + np.linalg.norm(X) ** 2 * np.linalg.norm(S)
        + np.linalg.norm(Q)
    )
    cl = float(np.max(eigenvalues(A + S @ X).real)) if n else -np.inf
    return RiccatiSolution(X, float(res), bool(cl < 0), float(scale), cl)


def _pbh_uncontrollable(A: np.ndarray, B: np.ndarray, tol: float = 1e-9):
    """Eigenvalues with ``Re >= 0`` failing the PBH rank test."""
    n = A.shape[0]
    bad = []
    scale = max(np.linalg.norm(A, 2), np.linalg.norm(B, 2), 1.0)
    for lam in eigenvalues(A):
        if lam.real < -tol * scale:
            continue
        M = np.hstack([A - lam * np.eye(n), B.astype(complex)])
        sv = np.linalg.svd(M, compute_uv=False)
        if sv[-1] <= tol * scale:
            bad.append(complex(lam))
    return bad


def solve_lqr(A, B, Q, R, N=None, imag_tol: float = 1e-8) -> np.ndarray:
    """Infinite-horizon LQR gain for ``int x'Qx + 2x'Nu + u'Ru``.

    Returns ``K = R^-1 (B^T X + N^T)`` so that ``u = -K x`` is optimal and
    ``A - B K`` is Hurwitz.
    """
    A, B, Q, R = _dense(A), _dense(B), _dense(Q), _dense(R)
    n, m = B.shape
    N = np.zeros((n, m)) if N is None else _dense(N)
    W = np.block([[Q, N], [N.T, R]])
    W = 0.5 * (W + W.T)
    wscale = max(np.linalg.norm(W, 2), np.finfo(float).tiny)
    if np.min(la.eigvalsh(W)) < -1e-10 * wscale:
        raise IndefiniteWeightError("LQR weight [[Q, N], [N^T, R]] is not positive semidefinite")
    try:
        Rc = la.cholesky(0.5 * (R + R.T))
    except la.LinAlgError as exc:
        raise IndefiniteWeightError("R must be positive definite") from exc
    RinvNt = la.cho_solve((Rc, False), N.T)
    RinvBt = la.cho_solve((Rc, False), B.T)
    At = A - B @ RinvNt
    Qt = Q - N @ RinvNt
    Qt = 0.5 * (Qt + Qt.T)
    S = -B @ RinvBt
    S = 0.5 * (S + S.T)
    try:
        sol = solve_care(At, S, Qt, imag_tol=imag_tol)
    except NumericsError as exc:
        bad = _pbh_uncontrollable(A, B)
        if bad:
            raise StabilizabilityError(
                f"(A, B) is not stabilizable; uncontrollable modes: {bad[:8]}", bad
            ) from exc
        raise
    K = la.cho_solve((Rc, False), B.T @ sol.X + N.T)
    if np.max(eigenvalues(A - B @ K).real) >= 0:
        bad = _pbh_uncontrollable(A, B)
        raise StabilizabilityError(
            "LQR closed loop is not Hurwitz"
            + (f"; uncontrollable modes: {bad[:8]}" if bad else ""),
            bad,
        )
    return K
