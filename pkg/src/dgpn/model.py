"""Decomposed graph prototype network: encoder, semantic heads, losses and training.

Three affine maps are learned: the shared subpart encoder ``psi`` (d -> d_h),
the local head ``loc`` and the compositional head ``com`` (both d_h -> d_s).
Scores are inner products with class semantic vectors. Everything is plain
numpy with hand-written backprop.
"""

from __future__ import annotations

import copy
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import NamedTuple

import numpy as np

from .data import ClassSplit, CsdTable, Dataset, StandardSplit
from .decomposition import SubpartStack, Variant, build_stack

log = logging.getLogger(__name__)

PARAM_NAMES = ("psi_w", "psi_b", "loc_w", "loc_b", "com_w", "com_b")


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    lr: float = 0.01
    epochs: int = 1000
    weight_decay: float = 0.0
    dropout: float = 0.0
    alpha: float = 1.0
    K: int = 3
    beta: float = 0.7
    variant: str = Variant.VANILLA_LAZY.value
    seed: int = 0
    early_stop_window: int | None = None
    hidden: int = 128
    activation: str | None = None
    normalize_csd: bool = True
    row_normalize_features: bool = False

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown training options: {sorted(unknown)}")
        return cls(**doc)


def standard_config(**overrides) -> TrainConfig:
    """Settings for plain supervised node classification (GCN-style protocol)."""
    base = dict(lr=0.01, epochs=200, weight_decay=5e-4, dropout=0.5, alpha=0.0, K=2,
                variant=Variant.TRICK.value, early_stop_window=10, row_normalize_features=True)
    base.update(overrides)
    return TrainConfig(**base)


@dataclass
class DgpnParams:
    psi_w: np.ndarray
    psi_b: np.ndarray
    loc_w: np.ndarray
    loc_b: np.ndarray
    com_w: np.ndarray
    com_b: np.ndarray
    activation: str | None = None

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def with_arrays(self, arrays: dict[str, np.ndarray]) -> "DgpnParams":
        return replace(self, **arrays)

    def copy(self) -> "DgpnParams":
        return self.with_arrays({k: v.copy() for k, v in self.arrays().items()})

    @property
    def num_parameters(self) -> int:
        return sum(v.size for v in self.arrays().values())


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(d: int, d_s: int, rng: np.random.Generator, hidden: int = 128,
                activation: str | None = None) -> DgpnParams:
    return DgpnParams(
        psi_w=_glorot(rng, d, hidden), psi_b=np.zeros(hidden),
        loc_w=_glorot(rng, hidden, d_s), loc_b=np.zeros(d_s),
        com_w=_glorot(rng, hidden, d_s), com_b=np.zeros(d_s),
        activation=activation,
    )


def zero_params(d: int, hidden: int, d_s: int) -> DgpnParams:
    return DgpnParams(np.zeros((d, hidden)), np.zeros(hidden), np.zeros((hidden, d_s)),
                      np.zeros(d_s), np.zeros((hidden, d_s)), np.zeros(d_s))


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: DgpnParams, grads: dict[str, np.ndarray], state: AdamState,
              lr: float, weight_decay: float = 0.0) -> DgpnParams:
    """One bias-corrected Adam update; returns new params and advances ``state``.

    ``weight_decay`` adds ``weight_decay * w`` to the weight-matrix gradients.
    Leave it at 0 when the gradients already carry the decay term.
    """
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    new = {}
    for name, p in params.arrays().items():
        g = grads[name]
        if weight_decay and name.endswith("_w"):
            g = g + weight_decay * p
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        v = state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * (g * g)
        new[name] = p - lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params.with_arrays(new)


# --- forward ----------------------------------------------------------------


@dataclass
class DropoutMasks:
    """Inverted-dropout multipliers: one per subpart input, one for z."""

    inputs: list[np.ndarray] | None = None
    z: np.ndarray | None = None


def draw_masks(rng: np.random.Generator, stack: SubpartStack, hidden: int, rate: float) -> DropoutMasks:
    if rate <= 0:
        return DropoutMasks()
    keep = 1.0 - rate
    inputs = [(rng.random(s.shape) < keep) / keep for s in stack.subparts]
    z = (rng.random((stack.n, hidden)) < keep) / keep
    return DropoutMasks(inputs, z)


class LossParts(NamedTuple):
    total: float
    com: float
    loc: float


def _act(a: np.ndarray, kind: str | None) -> np.ndarray:
    if kind is None:
        return a
    if kind == "relu":
        return np.maximum(a, 0.0)
    raise ValueError(f"unknown activation {kind!r}")


def _encode(stack: SubpartStack, params: DgpnParams, masks: DropoutMasks | None):
    inputs, pre, hidden = [], [], []
    for k, s in enumerate(stack.subparts):
        x = s if masks is None or masks.inputs is None else s * masks.inputs[k]
        a = x @ params.psi_w + params.psi_b
        inputs.append(x)
        pre.append(a)
        hidden.append(_act(a, params.activation))
    return inputs, pre, hidden


def _pool(stack: SubpartStack, hidden: list[np.ndarray]) -> np.ndarray:
    z = np.zeros_like(hidden[0])
    for w, h in zip(stack.weights, hidden):
        z += w * h
    return z


def _check_csd(params: DgpnParams, csd: np.ndarray) -> None:
    if csd.ndim != 2 or csd.shape[1] != params.com_w.shape[1]:
        raise ValueError(
            f"semantic width {params.com_w.shape[1]} does not match CSD shape {csd.shape}"
        )


def forward_local(stack: SubpartStack, params: DgpnParams, csd: np.ndarray) -> np.ndarray:
    """Per-hop class scores, shape (K+1, n, classes)."""
    csd = np.asarray(csd, dtype=np.float64)
    _check_csd(params, csd)
    _, _, hidden = _encode(stack, params, None)
    return np.stack([(h @ params.loc_w + params.loc_b) @ csd.T for h in hidden])


def forward_global(stack: SubpartStack, params: DgpnParams,
                   csd: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pooled hidden representation Z and its class scores."""
    csd = np.asarray(csd, dtype=np.float64)
    _check_csd(params, csd)
    _, _, hidden = _encode(stack, params, None)
    z = _pool(stack, hidden)
    return z, (z @ params.com_w + params.com_b) @ csd.T


def softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _xent(scores: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    shifted = scores - scores.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - log_z
    loss = -logp[np.arange(targets.size), targets].mean()  # keeps the input precision
    return loss, np.exp(logp)


def _forward_train(stack, params, targets, csd, alpha, masks):
    targets = np.asarray(targets, dtype=np.int64)
    if targets.size == 0:
        raise ValueError("empty training set")
    if targets.size != stack.n:
        raise ValueError(f"{targets.size} targets for {stack.n} stack rows")
    csd = np.asarray(csd)
    _check_csd(params, csd)
    inputs, pre, hidden = _encode(stack, params, masks)
    z = _pool(stack, hidden)
    z_drop = z if masks is None or masks.z is None else z * masks.z
    q_com, p_com = _xent((z_drop @ params.com_w + params.com_b) @ csd.T, targets)
    q_loc, p_loc = 0.0, []
    for h in hidden:
        q, p = _xent((h @ params.loc_w + params.loc_b) @ csd.T, targets)
        q_loc += q
        p_loc.append(p)
    raw = q_com + alpha * q_loc
    parts = LossParts(float(raw), float(q_com), float(q_loc))
    if not np.isfinite(parts.total):
        raise TrainingDiverged(f"non-finite loss {parts}")
    return parts, (targets, csd, inputs, pre, hidden, z_drop, p_com, p_loc), raw


def loss_joint(stack: SubpartStack, params: DgpnParams, targets: np.ndarray, csd: np.ndarray,
               alpha: float, masks: DropoutMasks | None = None) -> LossParts:
    """Compositional plus alpha-weighted local cross-entropy, averaged over rows.

    ``targets[i]`` is the row of ``csd`` holding node i's class. The local part
    sums the K+1 per-hop terms and is reported even when ``alpha`` is 0.
    """
    return _forward_train(stack, params, targets, csd, alpha, masks)[0]


def gradients(stack: SubpartStack, params: DgpnParams, targets: np.ndarray, csd: np.ndarray,
              alpha: float, weight_decay: float = 0.0,
              masks: DropoutMasks | None = None) -> tuple[dict[str, np.ndarray], LossParts]:
    """Analytic gradient of the joint loss plus ``weight_decay/2 * ||W||^2`` over
    the three weight matrices."""
    parts, cache, _ = _forward_train(stack, params, targets, csd, alpha, masks)
    targets, csd, inputs, pre, hidden, z_drop, p_com, p_loc = cache
    m = targets.size
    rows = np.arange(m)

    d_scores = p_com.copy()
    d_scores[rows, targets] -= 1.0
    d_scores /= m
    d_sem = d_scores @ csd
    g = {
        "com_w": z_drop.T @ d_sem,
        "com_b": d_sem.sum(axis=0),
        "loc_w": np.zeros_like(params.loc_w),
        "loc_b": np.zeros_like(params.loc_b),
        "psi_w": np.zeros_like(params.psi_w),
        "psi_b": np.zeros_like(params.psi_b),
    }
    d_z = d_sem @ params.com_w.T
    if masks is not None and masks.z is not None:
        d_z = d_z * masks.z
    for k, (w, x, a, h) in enumerate(zip(stack.weights, inputs, pre, hidden)):
        d_h = w * d_z
        if alpha:
            d_loc = p_loc[k].copy()
            d_loc[rows, targets] -= 1.0
            d_loc *= alpha / m
            d_loc_sem = d_loc @ csd
            g["loc_w"] += h.T @ d_loc_sem
            g["loc_b"] += d_loc_sem.sum(axis=0)
            d_h = d_h + d_loc_sem @ params.loc_w.T
        if params.activation == "relu":
            d_h = d_h * (a > 0)
        g["psi_w"] += x.T @ d_h
        g["psi_b"] += d_h.sum(axis=0)
    if weight_decay:
        for name in ("psi_w", "loc_w", "com_w"):
            g[name] = g[name] + weight_decay * getattr(params, name)
    return g, parts


def regularized_objective(stack, params, targets, csd, alpha, weight_decay=0.0, masks=None):
    """Scalar whose gradient :func:`gradients` returns, in the precision of the inputs."""
    total = _forward_train(stack, params, targets, csd, alpha, masks)[2]
    penalty = sum((getattr(params, n) ** 2).sum() for n in ("psi_w", "loc_w", "com_w"))
    return total + 0.5 * weight_decay * penalty


# --- inference --------------------------------------------------------------


def predict_unseen(params: DgpnParams, stack: SubpartStack, csd_unseen: np.ndarray,
                   classes=None) -> np.ndarray:
    """Highest-scoring class per stack row; ties go to the lowest index.

    Returns positions into ``csd_unseen`` or, when given, entries of ``classes``.
    """
    csd_unseen = np.asarray(csd_unseen, dtype=np.float64)
    if csd_unseen.shape[0] == 0:
        raise ValueError("empty unseen class set")
    _, scores = forward_global(stack, params, csd_unseen)
    pos = np.argmax(scores, axis=1)
    return pos if classes is None else np.asarray(classes)[pos]


def accuracy(pred: np.ndarray, truth: np.ndarray) -> float:
    pred, truth = np.asarray(pred), np.asarray(truth)
    if truth.size == 0:
        raise ValueError("no nodes to score")
    return float((pred == truth).mean())


def random_guess(test_nodes, unseen_classes, seed: int) -> np.ndarray:
    """Independent uniform draw of an unseen class for every test node."""
    unseen = np.asarray(list(unseen_classes))
    if unseen.size == 0:
        raise ValueError("empty unseen class set")
    rng = np.random.default_rng(seed)
    return unseen[rng.integers(0, unseen.size, size=len(test_nodes))]


# --- training ---------------------------------------------------------------


@dataclass
class TrainResult:
    params: DgpnParams
    history: list[dict] = field(default_factory=list)
    best_epoch: int | None = None
    stopped_early: bool = False


def _row_normalize(X: np.ndarray) -> np.ndarray:
    sums = X.sum(axis=1, keepdims=True)
    return X / np.where(sums != 0, sums, 1.0)


def prepare_stack(dataset: Dataset, config: TrainConfig) -> SubpartStack:
    X = _row_normalize(dataset.X) if config.row_normalize_features else dataset.X
    beta = config.beta if Variant(config.variant).lazy else None
    return build_stack(dataset.graph, X, config.variant, config.K, beta)


def _positions(labels: np.ndarray, classes) -> np.ndarray:
    lookup = {c: i for i, c in enumerate(classes)}
    return np.array([lookup[int(c)] for c in labels], dtype=np.int64)


def fit(stack: SubpartStack, targets: np.ndarray, csd: np.ndarray, config: TrainConfig,
        rng: np.random.Generator, params: DgpnParams | None = None, validate=None) -> TrainResult:
    """Full-batch Adam on the rows of ``stack``.

    ``validate(params)`` returns ``(score, record)`` with larger scores better;
    when given, the best-scoring params are returned and training stops after
    ``config.early_stop_window`` epochs without improvement.
    """
    if params is None:
        params = init_params(stack.d, csd.shape[1], rng, config.hidden, config.activation)
    state = AdamState()
    result = TrainResult(params)
    best_score, since_best = -np.inf, 0
    for epoch in range(config.epochs):
        masks = draw_masks(rng, stack, params.psi_w.shape[1], config.dropout)
        grads, parts = gradients(stack, params, targets, csd, config.alpha,
                                 config.weight_decay, masks)
        params = adam_step(params, grads, state, config.lr)
        record = {"epoch": epoch, "loss": parts.total, "com": parts.com, "loc": parts.loc}
        if validate is not None:
            score, extra = validate(params)
            record.update(extra)
            if score > best_score:
                best_score, since_best = score, 0
                result.params, result.best_epoch = params, epoch
            else:
                since_best += 1
        result.history.append(record)
        if validate is not None and config.early_stop_window and since_best >= config.early_stop_window:
            result.stopped_early = True
            break
    if validate is None:
        result.params = params
        result.best_epoch = config.epochs - 1 if config.epochs else None
    return result


def train(dataset: Dataset, split: ClassSplit, csd: CsdTable, config: TrainConfig,
          stack: SubpartStack | None = None) -> TrainResult:
    """Train on all nodes of the training classes.

    With validation classes present, each epoch is scored by zero-shot accuracy
    on validation nodes among validation classes and the best epoch is kept.
    """
    if not split.train_classes:
        raise ValueError("empty seen class set")
    if csd.vectors.shape[0] < dataset.num_classes:
        raise ValueError("CSD table does not cover every class")
    if stack is None:
        stack = prepare_stack(dataset, config)
    table = csd.normalized() if config.normalize_csd else csd
    rng = np.random.default_rng(config.seed)
    train_stack = stack.take_rows(split.train_nodes)
    targets = _positions(dataset.labels[split.train_nodes], split.train_classes)
    has_val = bool(split.val_classes) and split.val_nodes.size > 0
    val_stack = stack.take_rows(split.val_nodes) if has_val else None
    val_csd = table.rows(split.val_classes) if has_val else None
    val_truth = dataset.labels[split.val_nodes]

    def validate(p):
        acc = accuracy(predict_unseen(p, val_stack, val_csd, split.val_classes), val_truth)
        return acc, {"val_acc": acc}

    return fit(train_stack, targets, table.rows(split.train_classes), config, rng,
               validate=validate if has_val else None)


def evaluate_unseen(result_params: DgpnParams, dataset: Dataset, split: ClassSplit,
                    csd: CsdTable, stack: SubpartStack, normalize_csd: bool = True) -> float:
    table = csd.normalized() if normalize_csd else csd
    pred = predict_unseen(result_params, stack.take_rows(split.test_nodes),
                          table.rows(split.test_classes), split.test_classes)
    return accuracy(pred, dataset.labels[split.test_nodes])


ABLATIONS = ("ProNet", "ProNetGCN", "Full")


def ablation_config(name: str, config: TrainConfig) -> TrainConfig:
    """ProNet drops propagation and the local loss, ProNetGCN only the local loss."""
    if name == "ProNet":
        return replace(config, K=0, alpha=0.0)
    if name == "ProNetGCN":
        return replace(config, alpha=0.0)
    if name == "Full":
        return replace(config)
    raise ValueError(f"unknown ablation {name!r}; expected one of {ABLATIONS}")


def ablation_variant(name: str, dataset: Dataset, split: ClassSplit, csd: CsdTable,
                     config: TrainConfig) -> TrainResult:
    return train(dataset, split, csd, ablation_config(name, config))


@dataclass
class StandardResult:
    test_accuracy: float
    val_accuracy: float
    train: TrainResult


def standard_classify(dataset: Dataset, split: StandardSplit,
                      config: TrainConfig | None = None) -> StandardResult:
    """Supervised classification with the semantic space replaced by one-hot labels,
    so the compositional head becomes an ordinary softmax classifier."""
    config = config or standard_config()
    stack = prepare_stack(dataset, config)
    onehot = np.eye(dataset.num_classes)
    rng = np.random.default_rng(config.seed)
    train_stack = stack.take_rows(split.train)
    val_stack = stack.take_rows(split.val)
    val_truth = dataset.labels[split.val]

    def validate(p):
        _, scores = forward_global(val_stack, p, onehot)
        loss, probs = _xent(scores, val_truth)
        acc = accuracy(np.argmax(scores, axis=1), val_truth)
        return -loss, {"val_loss": loss, "val_acc": acc}

    result = fit(train_stack, dataset.labels[split.train], onehot, config, rng, validate=validate)
    _, scores = forward_global(stack.take_rows(split.test), result.params, onehot)
    test_acc = accuracy(np.argmax(scores, axis=1), dataset.labels[split.test])
    best = result.history[result.best_epoch]
    return StandardResult(test_acc, best["val_acc"], result)


# --- checkpoints ------------------------------------------------------------


def save_checkpoint(path: str | os.PathLike, params: DgpnParams, config: TrainConfig) -> None:
    """Write params plus a JSON echo of the config into one ``.npz`` file."""
    meta = {"config": config.as_dict(), "activation": params.activation, "format": 1}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **params.arrays())


def load_checkpoint(path: str | os.PathLike) -> tuple[DgpnParams, TrainConfig]:
    with np.load(path, allow_pickle=False) as npz:
        meta = json.loads(str(npz["meta"]))
        arrays = {k: npz[k].copy() for k in PARAM_NAMES}
    params = DgpnParams(**arrays, activation=meta["activation"])
    return params, TrainConfig.from_dict(copy.deepcopy(meta["config"]))
