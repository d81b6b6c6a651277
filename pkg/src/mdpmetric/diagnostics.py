"""Spectral and information-theoretic summaries of distance matrices.

The eigensolver is a self-contained cyclic Jacobi iteration (rotations
sweep all off-diagonal pairs until the off-diagonal Frobenius mass falls
below 1e-10), which keeps the package free of LAPACK assumptions and makes
every eigenvalue reproducible bit-for-bit across platforms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .metric import PseudoMetricMatrix

# Off-diagonal Frobenius mass at which Jacobi sweeps stop.
JACOBI_TOL = 1e-10
# Input must be symmetric to this slack.
SYMMETRY_TOL = 1e-12
# Eigenvalues below this fraction of the largest |eigenvalue| count as zero
# for the condition number.
RANK_CUT = 1e-10


def _as_square(a) -> np.ndarray:
    if isinstance(a, PseudoMetricMatrix):
        a = a.d
    x = np.asarray(a, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError(f"need a square matrix, got shape {x.shape}")
    return x


def summary_stats(d) -> tuple:
    """(mean, population std) of the strict upper-triangle distances."""
    a = _as_square(d)
    n = a.shape[0]
    if n < 2:
        raise ValueError("need at least 2 states for pairwise summary stats")
    iu = np.triu_indices(n, k=1)
    vals = a[iu]
    return float(vals.mean()), float(vals.std())


def _off_mass(a: np.ndarray) -> float:
    off = a - np.diag(np.diag(a))
    return float(np.sqrt((off * off).sum()))


def symmetric_eigs(a, tol: float = JACOBI_TOL, max_sweeps: int = 100) -> tuple:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (w, V) with eigenvalues sorted by decreasing |w| and matching
    orthonormal eigenvector columns, so a ~= V @ diag(w) @ V.T.

    Raises ValueError for asymmetric input and RuntimeError if the rotation
    sweeps fail to push the off-diagonal mass below `tol` (does not happen
    for finite symmetric input).
    """
    x = _as_square(a)
    n = x.shape[0]
    if not np.all(np.isfinite(x)):
        raise ValueError("matrix contains non-finite entries")
    if n and float(np.max(np.abs(x - x.T))) > SYMMETRY_TOL:
        raise ValueError("matrix is not symmetric")
    A = x.copy()
    V = np.eye(n)
    for _ in range(max_sweeps):
        if _off_mass(A) <= tol:
            break
        _jacobi_sweep(A, V, n)
    if _off_mass(A) > tol:
        raise RuntimeError(f"Jacobi failed to converge within {max_sweeps} sweeps")
    w = np.diag(A).copy()
    order = np.argsort(-np.abs(w), kind="stable")
    return w[order], V[:, order]


def _jacobi_sweep(A: np.ndarray, V: np.ndarray, n: int) -> None:
    for p in range(n - 1):
        for q in range(p + 1, n):
            apq = A[p, q]
            if apq == 0.0:
                continue
            # stable rotation angle: t = sign(theta)/(|theta| + hypot(theta, 1))
            theta = (A[q, q] - A[p, p]) / (2.0 * apq)
            t = 1.0 / (abs(theta) + math.hypot(theta, 1.0))
            if theta < 0.0:
                t = -t
            c = 1.0 / math.sqrt(t * t + 1.0)
            s = t * c
            col_p = A[:, p].copy()
            col_q = A[:, q].copy()
            A[:, p] = c * col_p - s * col_q
            A[:, q] = s * col_p + c * col_q
            row_p = A[p, :].copy()
            row_q = A[q, :].copy()
            A[p, :] = c * row_p - s * row_q
            A[q, :] = s * row_p + c * row_q
            A[p, q] = 0.0
            A[q, p] = 0.0
            vp = V[:, p].copy()
            vq = V[:, q].copy()
            V[:, p] = c * vp - s * vq
            V[:, q] = s * vp + c * vq


@dataclass(frozen=True)
class SpectralReport:
    """Spectrum-level summary of a distance matrix.

    mode is "raw" (eigenvalues of d itself) or "double_centered"
    (eigenvalues of B = -1/2 J (d o d) J, the classical-scaling Gram
    matrix). condition_number and eigen_entropy are nan, with `degenerate`
    set, when the spectrum is entirely below the rank cut (zero matrix).
    """

    mode: str
    eigenvalues: tuple
    frobenius: float
    spectral_radius: float
    condition_number: float
    eigen_entropy: float
    reconstruction_error: float
    degenerate: bool

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "eigenvalues": list(self.eigenvalues),
            "frobenius": self.frobenius,
            "spectral_radius": self.spectral_radius,
            "condition_number": self.condition_number,
            "eigen_entropy": self.eigen_entropy,
            "reconstruction_error": self.reconstruction_error,
            "degenerate": self.degenerate,
        }


def spectral_report(d, mode: str = "raw") -> SpectralReport:
    """Eigen-summary of a distance matrix (or any symmetric matrix).

    double_centered mode squares the distances entrywise and double-centers
    them; the matrix is re-symmetrized against float dust before the solve,
    and its trace is zero by construction.
    """
    a = _as_square(d)
    if mode == "raw":
        target = a
    elif mode == "double_centered":
        n = a.shape[0]
        j = np.eye(n) - np.full((n, n), 1.0 / n)
        b = -0.5 * j @ (a * a) @ j
        target = (b + b.T) / 2.0
    else:
        raise ValueError(f"mode must be 'raw' or 'double_centered', got {mode!r}")

    w, v = symmetric_eigs(target)
    frob = float(np.sqrt((target * target).sum()))
    radius = float(np.abs(w).max()) if w.size else 0.0
    recon = v @ np.diag(w) @ v.T
    recon_err = float(np.max(np.abs(recon - target)))

    absw = np.abs(w)
    cut = RANK_CUT * radius
    nonzero = absw[absw > cut]
    degenerate = nonzero.size == 0
    if degenerate:
        cond = math.nan
        entropy = math.nan
    else:
        cond = float(nonzero.max() / nonzero.min())
        p = absw / absw.sum()
        p = p[p > 0]
        entropy = float(-(p * np.log(p)).sum())
    return SpectralReport(
        mode=mode,
        eigenvalues=tuple(float(x) for x in w),
        frobenius=frob,
        spectral_radius=radius,
        condition_number=cond,
        eigen_entropy=entropy,
        reconstruction_error=recon_err,
        degenerate=degenerate,
    )


@dataclass(frozen=True)
class PartitionInfo:
    """Shape statistics of a partition under a metric: how compressed it is
    and how much distance structure each class swallows."""

    n_states: int
    n_classes: int
    compression_ratio: float
    intra_diameters: tuple
    intra_variances: tuple  # per class: population variance of member-pair distances
    size_entropy: float  # nats; entropy of the class-size distribution

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "n_classes": self.n_classes,
            "compression_ratio": self.compression_ratio,
            "intra_diameters": list(self.intra_diameters),
            "intra_variances": list(self.intra_variances),
            "size_entropy": self.size_entropy,
        }


def partition_info(d, partition) -> PartitionInfo:
    """Summarize a partition against a distance matrix.

    Classes of size one contribute diameter and variance zero; the size
    entropy is -sum_c (|c|/n) ln(|c|/n).
    """
    a = _as_square(d)
    p = np.asarray(partition, dtype=np.int64)
    if p.shape != (a.shape[0],):
        raise ValueError(f"partition must cover {a.shape[0]} states, got shape {p.shape}")
    k = int(p.max()) + 1
    if p.min() < 0 or len(np.unique(p)) != k:
        raise ValueError("class ids must be dense 0..k-1 with every class non-empty")
    diameters = []
    variances = []
    sizes = np.zeros(k)
    for c in range(k):
        idx = np.flatnonzero(p == c)
        sizes[c] = idx.size
        if idx.size < 2:
            diameters.append(0.0)
            variances.append(0.0)
            continue
        block = a[np.ix_(idx, idx)]
        iu = np.triu_indices(idx.size, k=1)
        pairs = block[iu]
        diameters.append(float(pairs.max()))
        variances.append(float(pairs.var()))
    probs = sizes / sizes.sum()
    entropy = float(-(probs * np.log(probs)).sum())
    return PartitionInfo(
        n_states=int(a.shape[0]),
        n_classes=k,
        compression_ratio=k / a.shape[0],
        intra_diameters=tuple(diameters),
        intra_variances=tuple(variances),
        size_entropy=entropy,
    )
