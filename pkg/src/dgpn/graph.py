"""Sparse graph container and the normalized propagation operators built from it."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import chebyshev


class OperatorKind(str, enum.Enum):
    SYM_NORM = "sym_norm"  # D^-1/2 A D^-1/2
    TRICK_SYM_NORM = "trick_sym_norm"  # D~^-1/2 A D~^-1/2
    TRICK_FULL = "trick_full"  # D~^-1/2 (A + I) D~^-1/2
    TRICK_DIAG = "trick_diag"  # D~^-1


class OracleMismatch(AssertionError):
    """Two evaluation routes of the same quantity disagree."""


@dataclass(frozen=True)
class SparseGraph:
    n: int
    edges: np.ndarray  # (m, 2) int64, u < v, lexicographically sorted
    adjacency: sp.csr_matrix
    degree: np.ndarray

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])


def build_graph(edges: Iterable[tuple[int, int]], n: int) -> SparseGraph:
    """Build an undirected unit-weight graph on ``n`` nodes.

    Reversed and repeated pairs collapse to a single edge. Self pairs are
    rejected since self-loops only enter through the renormalization trick.
    """
    if n < 0:
        raise ValueError(f"node count must be non-negative, got {n}")
    arr = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
    if arr.size:
        bad = (arr < 0) | (arr >= n)
        if bad.any():
            row = int(np.flatnonzero(bad.any(axis=1))[0])
            raise IndexError(f"edge {tuple(arr[row])} references a node outside [0, {n})")
        loops = arr[:, 0] == arr[:, 1]
        if loops.any():
            row = int(np.flatnonzero(loops)[0])
            raise ValueError(f"self pair {tuple(arr[row])} in edge list")
    canon = np.sort(arr, axis=1)
    canon = np.unique(canon, axis=0) if canon.size else canon
    rows = np.concatenate([canon[:, 0], canon[:, 1]])
    cols = np.concatenate([canon[:, 1], canon[:, 0]])
    adj = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    adj.sort_indices()
    degree = np.asarray(adj.sum(axis=1)).ravel()
    return SparseGraph(n=n, edges=canon, adjacency=adj, degree=degree)


@dataclass(frozen=True)
class PropagationOperator:
    kind: OperatorKind
    n: int
    matrix: sp.csr_matrix | None = None
    diag: np.ndarray | None = None

    def dense(self) -> np.ndarray:
        if self.diag is not None:
            return np.diag(self.diag)
        return self.matrix.toarray()


def _inv_sqrt(values: np.ndarray) -> np.ndarray:
    out = np.zeros_like(values, dtype=np.float64)
    nz = values > 0
    out[nz] = 1.0 / np.sqrt(values[nz])
    return out


def normalize(graph: SparseGraph, kind: OperatorKind | str) -> PropagationOperator:
    """Return the requested normalized operator for ``graph``.

    Isolated nodes get an all-zero row and column under ``SYM_NORM``.
    """
    kind = OperatorKind(kind)
    if kind is OperatorKind.TRICK_DIAG:
        return PropagationOperator(kind, graph.n, diag=1.0 / (graph.degree + 1.0))
    if kind is OperatorKind.SYM_NORM:
        scale = _inv_sqrt(graph.degree)
        base = graph.adjacency
    else:
        scale = 1.0 / np.sqrt(graph.degree + 1.0)
        base = graph.adjacency
        if kind is OperatorKind.TRICK_FULL:
            base = base + sp.identity(graph.n, format="csr")
    d = sp.diags(scale)
    mat = sp.csr_matrix(d @ base @ d)
    mat.sort_indices()
    return PropagationOperator(kind, graph.n, matrix=mat)


def apply(op: PropagationOperator, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != op.n:
        raise ValueError(f"operator is {op.n}x{op.n} but X has {X.shape[0]} rows")
    if op.diag is not None:
        return op.diag.reshape((-1,) + (1,) * (X.ndim - 1)) * X
    return np.asarray(op.matrix @ X)


def spectral_filter_oracle(
    graph: SparseGraph,
    coeffs: Iterable[float],
    x: np.ndarray,
    lambda_max: float | str = "exact",
    atol: float = 1e-9,
) -> np.ndarray:
    """Evaluate sum_k coeffs[k] T_k(L~) x by Chebyshev recursion, cross-checked
    against a dense eigendecomposition of the normalized Laplacian.

    ``lambda_max="exact"`` rescales with the largest Laplacian eigenvalue;
    a number (the GCN choice is 2.0) uses that value instead. Test-scale only.
    """
    coeffs = np.asarray(list(coeffs), dtype=np.float64)
    if coeffs.size == 0:
        raise ValueError("need at least one Chebyshev coefficient")
    x = np.asarray(x, dtype=np.float64)
    if graph.n > 200:
        raise ValueError("dense oracle is limited to n <= 200")

    P = normalize(graph, OperatorKind.SYM_NORM).matrix
    lap = sp.identity(graph.n, format="csr") - P

    evals, evecs = np.linalg.eigh(lap.toarray())
    lmax = float(evals[-1]) if lambda_max == "exact" else float(lambda_max)
    if lmax <= 0:
        raise np.linalg.LinAlgError(f"degenerate Laplacian spectrum, lambda_max={lmax}")
    response = chebyshev.chebval(2.0 * evals / lmax - 1.0, coeffs)
    via_eig = evecs @ (response[:, None] * (evecs.T @ x.reshape(graph.n, -1)))

    l_tilde = (2.0 / lmax) * lap - sp.identity(graph.n, format="csr")
    t_prev, t_cur = x, None
    out = coeffs[0] * t_prev
    if coeffs.size > 1:
        t_cur = l_tilde @ x
        out = out + coeffs[1] * t_cur
    for k in range(2, coeffs.size):
        t_prev, t_cur = t_cur, 2.0 * (l_tilde @ t_cur) - t_prev
        out = out + coeffs[k] * t_cur

    dev = float(np.max(np.abs(via_eig.reshape(out.shape) - out), initial=0.0))
    if not dev <= atol:
        raise OracleMismatch(f"Chebyshev recursion deviates from eigendecomposition by {dev:.3e}")
    return out
