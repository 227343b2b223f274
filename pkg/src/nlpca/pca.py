"""Classical PCA and the PPCA closed forms used for initialization and pilots."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stiefel import StiefelPoint

__all__ = [
    "Dataset",
    "PcaFit",
    "center",
    "pca_fit",
    "ppca_ml_loading",
    "reconstruct_linear",
    "pilot_tau2",
    "avg_variance",
]

_CENTERING_TOL = 1e-8


@dataclass(eq=False)
class Dataset:
    """Centered n x p observations with the removed column means kept around."""

    y: np.ndarray
    column_means: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.column_means = np.asarray(self.column_means, dtype=float)
        if self.y.ndim != 2:
            raise ValueError("observations must form an n x p matrix")
        if self.column_means.shape != (self.y.shape[1],):
            raise ValueError("column_means must have one entry per column")
        if self.y.size and np.max(np.abs(self.y.mean(axis=0))) > _CENTERING_TOL:
            raise ValueError("data are not centered")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape != (self.y.shape[0],):
                raise ValueError("labels must have one entry per row")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.y.shape[1]


@dataclass(eq=False)
class PcaFit:
    """Rank-d PCA factors: orthonormal loadings, singular values of Y/sqrt(n),
    and the latent projections X = Y V."""

    loadings: StiefelPoint
    singular_values: np.ndarray
    latents: np.ndarray


def center(raw: np.ndarray, labels=None) -> Dataset:
    """Subtract column means and remember them for de-centering."""
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[0] < 1:
        raise ValueError("need a nonempty n x p matrix")
    means = raw.mean(axis=0)
    return Dataset(y=raw - means, column_means=means, labels=labels)


def pca_fit(data: Dataset, d: int) -> PcaFit:
    """Top-d SVD fit of Y/sqrt(n); the loadings minimize the total squared
    reconstruction error over all rank-d orthonormal projections.

    Each loading column is sign-flipped so its largest-magnitude entry is
    positive, making the fit deterministic.
    """
    n, p = data.y.shape
    if not 1 <= d <= min(n, p):
        raise ValueError(f"need 1 <= d <= min(n, p) = {min(n, p)}, got d={d}")
    _, s, vt = np.linalg.svd(data.y / np.sqrt(n), full_matrices=False)
    v = vt[:d].T.copy()
    for k in range(d):
        j = int(np.argmax(np.abs(v[:, k])))
        if v[j, k] < 0:
            v[:, k] = -v[:, k]
    return PcaFit(
        loadings=StiefelPoint(v),
        singular_values=s[:d].copy(),
        latents=data.y @ v,
    )


def ppca_ml_loading(data: Dataset, d: int) -> np.ndarray:
    """The zero-noise PPCA maximum-likelihood loading V diag(D)."""
    fit = pca_fit(data, d)
    return fit.loadings.matrix * fit.singular_values


def reconstruct_linear(fit: PcaFit) -> np.ndarray:
    """Rank-d linear reconstruction X V^T."""
    return fit.latents @ fit.loadings.matrix.T


def pilot_tau2(data: Dataset, d: int) -> float:
    """Mean squared residual per scalar entry of the rank-d PCA reconstruction."""
    fit = pca_fit(data, d)
    resid = data.y - reconstruct_linear(fit)
    n, p = data.y.shape
    return float(np.sum(resid * resid) / (n * p))


def avg_variance(data: Dataset) -> float:
    """Per-column sample variance (n-1 denominator) averaged over columns."""
    if data.n < 2:
        raise ValueError("need at least two rows for a sample variance")
    return float(data.y.var(axis=0, ddof=1).mean())
