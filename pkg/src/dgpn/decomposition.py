"""K-hop decomposition of repeated graph convolution into weighted subparts.

Each variant expands a K-fold propagation into K+1 feature matrices S_k and
scalar pooling weights w_k with ``sum_k w_k S_k`` equal to the full filter
output (up to the learnable scalar absorbed into the encoder).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .graph import OperatorKind, SparseGraph, apply, normalize

MAX_HOPS = 16


class Variant(str, enum.Enum):
    VANILLA_NORM = "vanilla_norm"
    VANILLA_LAZY = "vanilla_lazy"
    TRICK = "trick"
    TRICK_LAZY = "trick_lazy"

    @property
    def lazy(self) -> bool:
        return self in (Variant.VANILLA_LAZY, Variant.TRICK_LAZY)


_BASE_OPERATOR = {
    Variant.VANILLA_NORM: OperatorKind.SYM_NORM,
    Variant.VANILLA_LAZY: OperatorKind.SYM_NORM,
    Variant.TRICK: OperatorKind.TRICK_SYM_NORM,
    Variant.TRICK_LAZY: OperatorKind.TRICK_FULL,
}


@dataclass(frozen=True)
class SubpartStack:
    variant: Variant
    K: int
    beta: float | None
    subparts: tuple[np.ndarray, ...]
    weights: tuple[float, ...]

    @property
    def n(self) -> int:
        return self.subparts[0].shape[0]

    @property
    def d(self) -> int:
        return self.subparts[0].shape[1]

    def take_rows(self, rows: np.ndarray) -> "SubpartStack":
        """Restrict every subpart to the given node rows."""
        return SubpartStack(
            self.variant, self.K, self.beta, tuple(s[rows] for s in self.subparts), self.weights
        )


def binomial_row(K: int) -> list[float]:
    """C(K, k) for k = 0..K via the multiplicative recurrence."""
    row = [1.0]
    for k in range(1, K + 1):
        row.append(row[-1] * (K - k + 1) / k)
    return row


def _check_hops(K: int) -> None:
    if not 0 <= K <= MAX_HOPS:
        raise ValueError(f"K must lie in [0, {MAX_HOPS}], got {K}")


def pooling_weights(variant: Variant | str, K: int, beta: float | None = None) -> list[float]:
    variant = Variant(variant)
    _check_hops(K)
    coeff = binomial_row(K)
    if variant is Variant.VANILLA_NORM:
        return [c / 2.0**K for c in coeff]
    if variant is Variant.TRICK:
        return coeff
    if beta is None or not 0.0 <= beta <= 1.0:
        raise ValueError(f"lazy variants need beta in [0, 1], got {beta}")
    # written out so that beta in {0, 1} gives exact zeros rather than 0**0 surprises
    out = []
    for k, c in enumerate(coeff):
        stay = 1.0 if K - k == 0 else beta ** (K - k)
        move = 1.0 if k == 0 else (1.0 - beta) ** k
        out.append(c * stay * move)
    return out


def build_stack(
    graph: SparseGraph,
    X: np.ndarray,
    variant: Variant | str,
    K: int,
    beta: float | None = None,
) -> SubpartStack:
    variant = Variant(variant)
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != graph.n:
        raise ValueError(f"X has {X.shape[0]} rows, graph has {graph.n} nodes")
    weights = pooling_weights(variant, K, beta)
    op = normalize(graph, _BASE_OPERATOR[variant])
    hops = [X]
    for _ in range(K):
        hops.append(apply(op, hops[-1]))
    if variant is Variant.TRICK:
        # the diagonal factor I~^(K-k) cannot be a scalar weight, so it lives in the subpart
        inv_deg = 1.0 / (graph.degree + 1.0)
        hops = [(inv_deg ** (K - k))[:, None] * h if K > k else h for k, h in enumerate(hops)]
    return SubpartStack(
        variant=variant,
        K=K,
        beta=float(beta) if variant.lazy else None,
        subparts=tuple(hops),
        weights=tuple(weights),
    )


def compose(stack: SubpartStack) -> np.ndarray:
    out = np.zeros_like(stack.subparts[0])
    for w, s in zip(stack.weights, stack.subparts):
        out += w * s
    return out


def direct_power_oracle(
    graph: SparseGraph,
    X: np.ndarray,
    variant: Variant | str,
    K: int,
    beta: float | None = None,
) -> np.ndarray:
    """Apply the un-expanded one-step filter K times with dense matrices.

    Built straight from the edge list so it shares nothing with the sparse path.
    """
    variant = Variant(variant)
    if graph.n > 500:
        raise ValueError("dense oracle is limited to n <= 500")
    n = graph.n
    A = np.zeros((n, n))
    for u, v in graph.edges:
        A[u, v] = A[v, u] = 1.0
    deg = A.sum(axis=1)
    eye = np.eye(n)
    with np.errstate(divide="ignore"):
        s = np.where(deg > 0, deg**-0.5, 0.0)
    P = s[:, None] * A * s[None, :]
    st = (deg + 1.0) ** -0.5
    P_tilde = st[:, None] * A * st[None, :]
    I_tilde = np.diag(st * st)
    P_hat = st[:, None] * (A + eye) * st[None, :]

    if variant is Variant.VANILLA_NORM:
        step = (eye + P) / 2.0
    elif variant is Variant.VANILLA_LAZY:
        step = beta * eye + (1.0 - beta) * P
    elif variant is Variant.TRICK_LAZY:
        step = beta * eye + (1.0 - beta) * P_hat
    else:
        step = I_tilde + P_tilde
    out = np.array(X, dtype=np.float64)
    for _ in range(K):
        out = step @ out
    return out
