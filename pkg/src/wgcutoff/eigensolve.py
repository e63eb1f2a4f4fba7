"""Generalized Hermitian eigensolvers for the assembled pencils.

Two pencil shapes occur: definite ones (positive definite mass) from the
scalar formulations, and saddle ones from the mixed vector formulations,
whose mass matrix vanishes on the multiplier block and therefore carries
infinite eigenvalues that must be filtered out.

The production strategy is shift-invert Lanczos (ARPACK) on a factorization
of ``K - sigma*M``: a small negative shift for definite pencils (K may be
singular), a small positive one for saddle pencils, retried with a ten times
larger shift up to three times if the factorization is singular.  At small
dimensions a dense path is used instead: ``scipy.linalg.eigh`` for definite
pencils, and a nullspace reduction for saddle pencils (eigenvectors then
satisfy the constraint to machine precision).  A brute-force dense QZ solve
with explicit infinite-eigenvalue filtering is exposed separately as the
oracle that every other path is tested against.

Results are deterministic: the Lanczos start vector is seeded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .femcore import LAYOUT_PLAIN, LAYOUT_SADDLE, HermitianPencil


class EigenSolveError(RuntimeError):
    """Factorization or convergence failure, or contract violation."""


@dataclass(frozen=True)
class SolveOptions:
    """Eigensolver configuration.

    ``shift`` is a magnitude; 0 selects the automatic heuristic (the sign is
    chosen per pencil shape).  ``infinite_cutoff`` 0 likewise selects the
    automatic value, 1e12 times the median finite-eigenvalue estimate.
    ``dense_cutoff`` is the dimension at or below which the dense path runs;
    set it to 0 to force shift-invert.
    """

    num_modes: int = 4
    shift: float = 0.0
    residual_tol: float = 1e-8
    infinite_cutoff: float = 0.0
    zero_frac: float = 1e-3
    dense_cutoff: int = 400
    seed: int = 1357

    def __post_init__(self):
        if self.num_modes < 1:
            raise ValueError("num_modes must be at least 1")
        if self.residual_tol <= 0:
            raise ValueError("residual_tol must be positive")


@dataclass(frozen=True)
class Spectrum:
    """Ascending finite eigenvalues with primal/multiplier eigenvector parts."""

    eigenvalues: np.ndarray           # (k,) real
    eigenvectors: np.ndarray          # (primal_dim, k) complex
    multipliers: np.ndarray | None    # (multiplier_dim, k) complex
    residuals: np.ndarray             # (k,) relative residuals


def _mat_norm(m: sp.spmatrix) -> float:
    return float(abs(m).sum(axis=1).max()) if m.nnz else 0.0


def _residuals(K, M, w, vecs) -> np.ndarray:
    kn, mn = _mat_norm(K), _mat_norm(M)
    out = np.empty(w.shape[0])
    for i, lam in enumerate(w):
        x = vecs[:, i]
        r = K @ x - lam * (M @ x)
        out[i] = np.linalg.norm(r) / ((kn + abs(lam) * mn)
                                      * max(np.linalg.norm(x), 1e-300))
    return out


def _start_vector(n: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal(n)


def _polish(K, M, w, vecs, residuals, tol):
    """Shifted inverse iteration on any pair whose residual misses ``tol``.

    One application of ``(K - sigma M)^{-1} M`` with sigma just below the
    Ritz value contracts the error sharply; the eigenvalue is refreshed
    from the Rayleigh quotient.  Pairs already within tolerance are left
    untouched, keeping results deterministic.
    """
    w = np.asarray(w, dtype=float).copy()
    vecs = vecs.copy()
    for i in np.flatnonzero(residuals > tol):
        scale = max(np.abs(w).max(), 1e-300)
        sigma = (w[i] * (1.0 - 1e-7) if abs(w[i]) > 1e-9 * scale
                 else -1e-7 * scale)
        try:
            y = spla.splu((K - sigma * M).tocsc()).solve(M @ vecs[:, i])
        except Exception:
            continue
        norm = np.linalg.norm(y)
        if not np.isfinite(norm) or norm == 0:
            continue
        y /= norm
        denominator = np.vdot(y, M @ y).real
        if denominator > 0:
            w[i] = np.vdot(y, K @ y).real / denominator
            vecs[:, i] = y
    order = np.argsort(w)
    return w[order], vecs[:, order]


def _check(w, residuals, opts, scale):
    if (residuals > opts.residual_tol).any():
        raise EigenSolveError(
            f"eigenpair residual {residuals.max():.3e} exceeds "
            f"{opts.residual_tol:.1e}"
        )
    if (w < -opts.residual_tol * scale).any():
        raise EigenSolveError(
            f"negative eigenvalue {w.min():.6e} in a semidefinite pencil"
        )


def _trace_scale(K, M, dim) -> float:
    trk = float(K.diagonal().real.sum())
    trm = float(M.diagonal().real.sum())
    if trm <= 0 or trk <= 0:
        return 1.0
    return trk / trm / dim


def _m_normalize(M, vecs) -> np.ndarray:
    norms = np.sqrt(np.abs(np.einsum("ij,ij->j", vecs.conj(), M @ vecs)))
    return vecs / np.where(norms > 0, norms, 1.0)


def solve_definite(pencil: HermitianPencil, opts: SolveOptions) -> Spectrum:
    """Smallest ``num_modes`` eigenpairs of a definite pencil.

    Eigenvectors come back M-orthonormal.
    """
    if pencil.layout != LAYOUT_PLAIN:
        raise ValueError("solve_definite expects a plain pencil")
    K, M = pencil.K, pencil.M
    n = pencil.dim
    k = opts.num_modes
    if k > n:
        raise EigenSolveError(f"requested {k} modes from a pencil of dimension {n}")

    if n <= opts.dense_cutoff or k > n - 2:
        w, vecs = la.eigh(K.toarray(), M.toarray())
        w, vecs = w[:k], vecs[:, :k]
    else:
        sigma = -(opts.shift if opts.shift > 0 else _trace_scale(K, M, n))
        try:
            w, vecs = spla.eigsh(K, k=k, M=M, sigma=sigma, which="LM",
                                 v0=_start_vector(n, opts.seed))
        except Exception as exc:
            raise EigenSolveError(f"shift-invert failed at sigma={sigma}: {exc}") from exc
        order = np.argsort(w)
        w, vecs = w[order], vecs[:, order]

    residuals = _residuals(K, M, w, vecs)
    if (residuals > opts.residual_tol).any():
        w, vecs = _polish(K, M, w, vecs, residuals, opts.residual_tol)
        residuals = _residuals(K, M, w, vecs)
    vecs = _m_normalize(M, vecs)
    _check(w, residuals, opts, scale=max(abs(w).max(), _mat_norm(K) / max(_mat_norm(M), 1e-300)))
    return Spectrum(eigenvalues=w.astype(float), eigenvectors=vecs,
                    multipliers=None, residuals=residuals)


def _filter_finite(alpha, beta, opts) -> np.ndarray:
    """Finite real eigenvalues of a Hermitian/PSD pencil from QZ output."""
    bmax = np.abs(beta).max()
    finite = np.abs(beta) > 1e-8 * max(bmax, 1e-300)
    lam = alpha[finite] / beta[finite]
    # near-zero eigenvalues carry imaginary noise at the pencil scale, so
    # judge realness against the magnitude of the finite spectrum
    scale = np.median(np.abs(lam)) if lam.size else 1.0
    real = np.abs(lam.imag) <= 1e-8 * (scale + np.abs(lam.real))
    lam = lam.real[real]
    cutoff = opts.infinite_cutoff
    if cutoff <= 0:
        cutoff = 1e12 * max(np.median(np.abs(lam)), 1e-300) if lam.size else np.inf
    return np.sort(lam[np.abs(lam) <= cutoff])


def dense_saddle_bruteforce(pencil: HermitianPencil,
                            opts: SolveOptions) -> np.ndarray:
    """Oracle path: full QZ on the pencil, infinite eigenvalues filtered.

    Returns the ascending finite eigenvalues (no eigenvectors); intended for
    cross-checking the production paths at small dimension.
    """
    alpha, beta = la.eig(pencil.K.toarray(), pencil.M.toarray(),
                         homogeneous_eigvals=True)[0]
    lam = _filter_finite(alpha, beta, opts)
    return lam[: opts.num_modes] if opts.num_modes < lam.size else lam


def _dense_saddle(pencil: HermitianPencil, opts: SolveOptions):
    """Nullspace reduction: eigenvectors satisfy the constraint exactly."""
    p, m = pencil.primal_dim, pencil.multiplier_dim
    K, M = pencil.K.toarray(), pencil.M.toarray()
    A, B = K[:p, :p], M[:p, :p]
    if m == 0:
        w, x = la.eigh(A, B)
        k = min(opts.num_modes, w.size)
        return w[:k], x[:, :k], np.zeros((0, k), dtype=complex)
    C = K[:p, p:]
    Z = la.null_space(C.conj().T)
    if Z.shape[1] < opts.num_modes:
        raise EigenSolveError(
            f"requested {opts.num_modes} modes but the constrained space has "
            f"dimension {Z.shape[1]}"
        )
    w, u = la.eigh(Z.conj().T @ A @ Z, Z.conj().T @ B @ Z)
    k = opts.num_modes
    w, u = w[:k], u[:, :k]
    x = Z @ u
    rhs = A @ x - B @ x * w[None, :]
    zeta = -la.lstsq(C, rhs)[0]
    return w, x, zeta


def solve_saddle(pencil: HermitianPencil, opts: SolveOptions) -> Spectrum:
    """Smallest ``num_modes`` finite eigenpairs of a saddle pencil.

    Primal parts are normalized in the B-inner product; the returned pairs
    satisfy the discrete constraint (checked via the pencil residual).
    """
    if pencil.layout != LAYOUT_SADDLE:
        raise ValueError("solve_saddle expects a saddle pencil")
    K, M = pencil.K, pencil.M
    p, m = pencil.primal_dim, pencil.multiplier_dim
    n = pencil.dim
    k = opts.num_modes
    if k > p - m:
        raise EigenSolveError(
            f"requested {k} modes but the pencil has only {p - m} finite "
            "eigenvalues"
        )

    if n <= opts.dense_cutoff or k > n - 2:
        w, x, zeta = _dense_saddle(pencil, opts)
        vecs = np.vstack([x, zeta]) if m else x
    else:
        sigma0 = opts.shift if opts.shift > 0 else 1e-3 * _trace_scale(
            K[:p, :p], M[:p, :p], p)
        sigma = sigma0
        last = None
        for _ in range(4):
            try:
                w, vecs = spla.eigsh(K, k=k, M=M, sigma=sigma, which="LM",
                                     v0=_start_vector(n, opts.seed))
                break
            except Exception as exc:  # singular factorization: grow the shift
                last = exc
                sigma *= 10.0
        else:
            raise EigenSolveError(
                f"shift-invert failed for shifts {sigma0}..{sigma / 10}: {last}"
            )
        order = np.argsort(w)
        w, vecs = w[order], vecs[:, order]

    residuals = _residuals(K, M, w, vecs)
    if (residuals > opts.residual_tol).any():
        w, vecs = _polish(K, M, np.asarray(w, dtype=float), vecs,
                          residuals, opts.residual_tol)
        residuals = _residuals(K, M, w, vecs)
    primal = vecs[:p]
    norms = np.sqrt(np.abs(np.einsum("ij,ij->j", primal.conj(),
                                     (M[:p, :p] @ primal))))
    vecs = vecs / np.where(norms > 0, norms, 1.0)
    scale = max(np.abs(w).max() if w.size else 1.0,
                _mat_norm(K) / max(_mat_norm(M), 1e-300))
    _check(np.asarray(w, dtype=float), residuals, opts, scale=scale)
    return Spectrum(
        eigenvalues=np.asarray(w, dtype=float),
        eigenvectors=vecs[:p],
        multipliers=vecs[p:] if m else np.zeros((0, k), dtype=complex),
        residuals=residuals,
    )


def solve(pencil: HermitianPencil, opts: SolveOptions) -> Spectrum:
    if pencil.layout == LAYOUT_PLAIN:
        return solve_definite(pencil, opts)
    return solve_saddle(pencil, opts)


def classify_near_zero(spectrum: Spectrum, reference_scale: float | None = None,
                       zero_frac: float = 1e-3):
    """Split mode indices into (near-zero, nonzero) on the ``sqrt(lambda)`` scale.

    The reference is the median of the top half of the returned square
    roots unless ``reference_scale`` overrides it.  Raises if every mode is
    near zero (the request was degenerate).
    """
    lam = spectrum.eigenvalues
    if lam.size == 0:
        raise ValueError("empty spectrum")
    roots = np.sqrt(np.clip(lam, 0.0, None))
    ref = reference_scale if reference_scale else float(
        np.median(roots[roots.size // 2:]))
    near_zero = roots < zero_frac * ref
    if near_zero.all():
        raise EigenSolveError("all requested modes are near zero")
    return np.flatnonzero(near_zero), np.flatnonzero(~near_zero)
