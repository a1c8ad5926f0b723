"""Quality measures for class semantic descriptions.

Class prototypes (mean features) and CSD vectors each induce a conditional
distribution over the other classes via a softmax of inner products; the
CSDs are scored by how closely the two sets of distributions agree.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


class Measure(str, enum.Enum):
    KL = "kl"
    COSINE = "cosine"
    EUCLIDEAN = "euclidean"


@dataclass(frozen=True)
class CsdQuality:
    kl: float
    cosine: float
    euclidean: float

    def as_dict(self) -> dict[str, float]:
        return {"kl": self.kl, "cosine": self.cosine, "euclidean": self.euclidean}


def class_prototypes(X: np.ndarray, labels: np.ndarray, classes=None) -> np.ndarray:
    """Row ``i`` is the mean of the feature rows labelled ``classes[i]``."""
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    if classes is None:
        classes = np.unique(labels)
    protos = np.empty((len(classes), X.shape[1]))
    for i, c in enumerate(classes):
        members = labels == c
        if not members.any():
            raise ValueError(f"class {c} has no nodes")
        protos[i] = X[members].mean(axis=0)
    return protos


def relation_distribution(V: np.ndarray) -> np.ndarray:
    """Softmax of pairwise inner products with the self term left out.

    Returns an m x m matrix with zero diagonal whose rows sum to one.
    """
    V = np.asarray(V, dtype=np.float64)
    m = V.shape[0]
    if m < 2:
        raise ValueError("need at least two classes")
    logits = V @ V.T
    np.fill_diagonal(logits, -np.inf)
    logits = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def _off_diagonal_rows(R: np.ndarray) -> np.ndarray:
    m = R.shape[0]
    return R[~np.eye(m, dtype=bool)].reshape(m, m - 1)


def distribution_distance(
    empirical: np.ndarray,
    induced: np.ndarray,
    measure: Measure | str,
    smoothing: float | None = None,
) -> float:
    """Average row-wise distance between two relation matrices.

    KL is taken as KL(empirical || induced). An induced zero under a positive
    empirical entry gives ``inf`` unless ``smoothing`` is set, in which case
    both rows get ``smoothing`` added and are renormalized.
    """
    measure = Measure(measure)
    p = _off_diagonal_rows(np.asarray(empirical, dtype=np.float64))
    q = _off_diagonal_rows(np.asarray(induced, dtype=np.float64))
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch {empirical.shape} vs {induced.shape}")
    if measure is Measure.KL:
        if smoothing:
            p = (p + smoothing) / (p + smoothing).sum(axis=1, keepdims=True)
            q = (q + smoothing) / (q + smoothing).sum(axis=1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(p > 0, p * (np.log(p) - np.log(q)), 0.0)
        per_row = terms.sum(axis=1)
    elif measure is Measure.COSINE:
        per_row = (p * q).sum(axis=1) / (np.linalg.norm(p, axis=1) * np.linalg.norm(q, axis=1))
    else:
        per_row = np.linalg.norm(p - q, axis=1)
    return float(per_row.mean())


def truncated_svd_reduce(X: np.ndarray, r: int) -> np.ndarray:
    """Project onto the top-``r`` right singular vectors, returning U_r S_r.

    Uses the eigendecomposition of the smaller Gram matrix. Singular vector
    signs are fixed so the largest-magnitude loading of each is positive.
    """
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if not 0 < r <= min(n, d):
        raise ValueError(f"rank {r} outside (0, {min(n, d)}]")
    if d <= n:
        evals, evecs = np.linalg.eigh(X.T @ X)
        V = evecs[:, ::-1][:, :r]
        idx = np.argmax(np.abs(V), axis=0)
        V = V * np.sign(V[idx, np.arange(r)])
        return X @ V
    evals, evecs = np.linalg.eigh(X @ X.T)
    U = evecs[:, ::-1][:, :r]
    sigma = np.sqrt(np.clip(evals[::-1][:r], 0.0, None))
    # recover V to apply the same sign convention as the tall branch
    V = (X.T @ U) / np.where(sigma > 0, sigma, 1.0)
    idx = np.argmax(np.abs(V), axis=0)
    flip = np.sign(V[idx, np.arange(r)])
    flip[flip == 0] = 1.0
    return U * sigma * flip


def unit_normalize_rows(X: np.ndarray) -> tuple[np.ndarray, int]:
    """Scale non-zero rows to unit L2 norm; returns (rows, zero-row count)."""
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    zero = norms[:, 0] == 0
    if zero.any():
        log.warning("%d zero rows left unnormalized", int(zero.sum()))
    return X / np.where(norms > 0, norms, 1.0), int(zero.sum())


def evaluate_csd_quality(
    X: np.ndarray,
    labels: np.ndarray,
    csd_vectors: np.ndarray,
    svd_rank: int | None = 128,
    normalize: bool = True,
    classes=None,
) -> CsdQuality:
    """Reduce, normalize, build prototypes and compare both relation matrices.

    ``csd_vectors`` row ``i`` describes ``classes[i]`` (all classes by default,
    ascending). Pass ``svd_rank=None`` for features that are already dense
    and low dimensional.
    """
    if classes is None:
        classes = np.unique(labels)
    if len(csd_vectors) != len(classes):
        raise ValueError(f"{len(csd_vectors)} CSD vectors for {len(classes)} classes")
    feats = np.asarray(X, dtype=np.float64)
    if svd_rank is not None and svd_rank < feats.shape[1]:
        feats = truncated_svd_reduce(feats, svd_rank)
    csd = np.asarray(csd_vectors, dtype=np.float64)
    if normalize:
        feats, _ = unit_normalize_rows(feats)
        csd, _ = unit_normalize_rows(csd)
    protos = class_prototypes(feats, labels, classes)
    empirical = relation_distribution(protos)
    induced = relation_distribution(csd)
    return CsdQuality(
        kl=distribution_distance(empirical, induced, Measure.KL),
        cosine=distribution_distance(empirical, induced, Measure.COSINE),
        euclidean=distribution_distance(empirical, induced, Measure.EUCLIDEAN),
    )
