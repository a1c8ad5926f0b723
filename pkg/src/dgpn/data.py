"""Dataset ingestion, CSD tables, class splits and the synthetic toy generator.

Real datasets are read from ``$DGPN_DATA_ROOT/<name>/`` laid out as::

    <name>.content          node_id attr_0 ... attr_{d-1} label
    <name>.cites            cited_id citing_id
    csd_text.json           TEXT CSD table (optional)
    csd_label.json          LABEL CSD table (optional)
    standard_split.json     {"train": [...], "val": [...], "test": [...]} raw node ids
    manifest.json           sha256 / row counts / provenance per file (optional)
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import os
import re
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .graph import SparseGraph, build_graph

log = logging.getLogger(__name__)

DATA_ROOT_ENV = "DGPN_DATA_ROOT"


class DataError(ValueError):
    """Malformed or missing dataset input."""


@dataclass(frozen=True)
class ClassInfo:
    name: str
    count: int
    aliases: tuple[str, ...] = ()


@dataclass(frozen=True)
class DatasetInfo:
    name: str
    nodes: int
    edges: int  # citation records as published
    features: int
    classes: tuple[ClassInfo, ...]
    split_i: tuple[int, int, int] | None
    split_ii: tuple[int, int, int] | None
    standard: tuple[int, int, int] | None


KNOWN_DATASETS: dict[str, DatasetInfo] = {
    "cora": DatasetInfo(
        "cora", 2708, 5429, 1433,
        (
            ClassInfo("Neural Network", 818, ("Neural_Networks",)),
            ClassInfo("Rule Learning", 180, ("Rule_Learning",)),
            ClassInfo("Reinforcement Learning", 217, ("Reinforcement_Learning",)),
            ClassInfo("Probabilistic Methods", 426, ("Probabilistic_Methods",)),
            ClassInfo("Theory", 351),
            ClassInfo("Genetic Algorithms", 418, ("Genetic_Algorithms",)),
            ClassInfo("Case Based", 298, ("Case_Based",)),
        ),
        (3, 0, 4), (2, 2, 3), (140, 500, 1000),
    ),
    "citeseer": DatasetInfo(
        "citeseer", 3327, 4732, 3703,
        (
            ClassInfo("Agent", 596, ("Agents",)),
            ClassInfo("Information Retrieval", 668, ("IR",)),
            ClassInfo("Database", 701, ("DB",)),
            ClassInfo("Artificial Intelligence", 249, ("AI",)),
            ClassInfo("Human Computer Interaction", 508, ("HCI",)),
            ClassInfo("Machine Learning", 590, ("ML",)),
        ),
        (2, 0, 4), (2, 2, 2), (120, 500, 1000),
    ),
    "cm10m": DatasetInfo(
        "cm10m", 4464, 5804, 128,
        (
            ClassInfo("Biology", 825),
            ClassInfo("Computer Science", 852),
            ClassInfo("Financial Economics", 600),
            ClassInfo("Industrial Engineering", 730),
            ClassInfo("Physics", 674),
            ClassInfo("Social Science", 783),
        ),
        (3, 0, 3), (2, 2, 2), None,
    ),
    "pubmed": DatasetInfo(
        "pubmed", 19717, 44338, 500,
        (
            ClassInfo("Diabetes Mellitus Experimental", 4103, ("1",)),
            ClassInfo("Diabetes Mellitus Type 1", 7739, ("2",)),
            ClassInfo("Diabetes Mellitus Type 2", 7875, ("3",)),
        ),
        None, None, (60, 500, 1000),
    ),
}


def _key(label: str) -> str:
    return re.sub(r"[^a-z0-9]", "", label.lower())


@dataclass(frozen=True)
class Dataset:
    name: str
    graph: SparseGraph
    X: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]
    node_ids: tuple[str, ...] = ()
    cite_records: int = 0
    warnings: tuple[str, ...] = ()

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def stats(self) -> dict[str, int]:
        return {
            "nodes": self.graph.n,
            "edges": self.graph.num_edges,
            "cite_records": self.cite_records,
            "features": int(self.X.shape[1]),
            "classes": self.num_classes,
        }


def published_count_mismatches(ds: Dataset) -> list[str]:
    """Differences between a loaded dataset and its published summary row."""
    info = KNOWN_DATASETS.get(ds.name)
    if info is None:
        return []
    got = ds.stats()
    want = {"nodes": info.nodes, "cite_records": info.edges,
            "features": info.features, "classes": len(info.classes)}
    return [f"{k}: expected {v}, got {got[k]}" for k, v in want.items() if got[k] != v]


def load_content_cites(
    content_path: str | os.PathLike,
    cites_path: str | os.PathLike,
    name: str | None = None,
) -> Dataset:
    """Parse a citation-network ``.content`` / ``.cites`` pair.

    Node ids are remapped to 0..n-1 in content-file order. Citations naming an
    unknown id are dropped and counted. Labels follow the documented class-id
    order for known datasets and ascending label order otherwise.
    """
    ids: list[str] = []
    rows: list[list[float]] = []
    raw_labels: list[str] = []
    width = None
    with open(content_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 3:
                raise DataError(f"{content_path}:{lineno}: expected id, attributes, label")
            attrs = parts[1:-1]
            if width is None:
                width = len(attrs)
            elif len(attrs) != width:
                raise DataError(
                    f"{content_path}:{lineno}: {len(attrs)} attributes, expected {width}"
                )
            try:
                rows.append([float(a) for a in attrs])
            except ValueError as exc:
                raise DataError(f"{content_path}:{lineno}: {exc}") from None
            ids.append(parts[0])
            raw_labels.append(parts[-1])
    if not ids:
        raise DataError(f"{content_path}: no nodes")
    index = {nid: i for i, nid in enumerate(ids)}
    if len(index) != len(ids):
        raise DataError(f"{content_path}: duplicate node ids")

    info = KNOWN_DATASETS.get(name or "")
    if info is not None:
        lookup = {}
        for cid, c in enumerate(info.classes):
            for alias in (c.name,) + c.aliases:
                lookup[_key(alias)] = cid
        # bare class ids only where they do not collide with a published alias
        for cid in range(len(info.classes)):
            lookup.setdefault(str(cid), cid)
        class_names = tuple(c.name for c in info.classes)
    else:
        uniq = sorted(set(raw_labels))
        lookup = {_key(lbl): i for i, lbl in enumerate(uniq)}
        class_names = tuple(uniq)
    unknown = [lbl for lbl in raw_labels if _key(lbl) not in lookup]
    if unknown:
        raise DataError(f"{content_path}: unknown class label {unknown[0]!r}")
    labels = np.array([lookup[_key(lbl)] for lbl in raw_labels], dtype=np.int64)

    edges, dropped, records = [], 0, 0
    skipped_loops = 0
    with open(cites_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise DataError(f"{cites_path}:{lineno}: expected two node ids")
            records += 1
            u, v = index.get(parts[0]), index.get(parts[1])
            if u is None or v is None:
                dropped += 1
                continue
            if u == v:
                skipped_loops += 1
                continue
            edges.append((u, v))
    warnings = []
    if dropped:
        warnings.append(f"dropped {dropped} citation(s) referencing unknown node ids")
    if skipped_loops:
        warnings.append(f"skipped {skipped_loops} self-citation(s)")
    for w in warnings:
        log.warning("%s: %s", cites_path, w)

    return Dataset(
        name=name or Path(content_path).stem,
        graph=build_graph(edges, len(ids)),
        X=np.asarray(rows, dtype=np.float64),
        labels=labels,
        class_names=class_names,
        node_ids=tuple(ids),
        cite_records=records,
        warnings=tuple(warnings),
    )


def data_root(root: str | os.PathLike | None = None) -> Path:
    root = root or os.environ.get(DATA_ROOT_ENV)
    if not root:
        raise DataError(f"no data root: set ${DATA_ROOT_ENV} or pass data_root")
    return Path(root)


def load_dataset(name: str, root: str | os.PathLike | None = None) -> Dataset:
    folder = data_root(root) / name
    content, cites = folder / f"{name}.content", folder / f"{name}.cites"
    for p in (content, cites):
        if not p.exists():
            raise DataError(f"missing dataset file {p}")
    verify_manifest(folder)
    return load_content_cites(content, cites, name=name)


# --- CSD tables -------------------------------------------------------------


@dataclass(frozen=True)
class CsdTable:
    kind: str
    vectors: np.ndarray  # row i describes class id i
    names: tuple[str, ...] = ()

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def rows(self, class_ids) -> np.ndarray:
        return self.vectors[np.asarray(list(class_ids), dtype=np.int64)]

    def normalized(self) -> "CsdTable":
        norms = np.linalg.norm(self.vectors, axis=1, keepdims=True)
        return replace(self, vectors=self.vectors / np.where(norms > 0, norms, 1.0))


def load_csd_table(path: str | os.PathLike, num_classes: int | None = None,
                   normalize: bool = False) -> CsdTable:
    """Read a CSD JSON document and validate ids, widths and finiteness."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        dim = int(doc["dim"])
        entries = doc["classes"]
    except (KeyError, TypeError) as exc:
        raise DataError(f"{path}: missing field {exc}") from None
    by_id: dict[int, tuple[str, list]] = {}
    for entry in entries:
        cid = int(entry["id"])
        vec = entry["vector"]
        if len(vec) != dim:
            raise DataError(f"{path}: class {cid} has width {len(vec)}, expected {dim}")
        by_id[cid] = (str(entry.get("name", cid)), vec)
    expected = num_classes if num_classes is not None else (max(by_id) + 1 if by_id else 0)
    missing = [c for c in range(expected) if c not in by_id]
    if missing:
        raise DataError(f"{path}: missing CSD for class {missing[0]}")
    vectors = np.array([by_id[c][1] for c in range(expected)], dtype=np.float64).reshape(expected, dim)
    if not np.isfinite(vectors).all():
        bad = int(np.flatnonzero(~np.isfinite(vectors).all(axis=1))[0])
        raise DataError(f"{path}: non-finite entry in class {bad}")
    table = CsdTable(str(doc.get("kind", "custom")), vectors, tuple(by_id[c][0] for c in range(expected)))
    return table.normalized() if normalize else table


def save_csd_table(table: CsdTable, path: str | os.PathLike) -> None:
    doc = {
        "kind": table.kind,
        "dim": table.dim,
        "classes": [
            {"id": i, "name": table.names[i] if table.names else str(i), "vector": v.tolist()}
            for i, v in enumerate(table.vectors)
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


# --- splits -----------------------------------------------------------------


class SplitScheme(str, enum.Enum):
    SPLIT_I = "I"
    SPLIT_II = "II"


@dataclass(frozen=True)
class ClassSplit:
    scheme: str
    train_classes: tuple[int, ...]
    val_classes: tuple[int, ...]
    test_classes: tuple[int, ...]
    train_nodes: np.ndarray
    val_nodes: np.ndarray
    test_nodes: np.ndarray

    @property
    def seen_classes(self) -> tuple[int, ...]:
        return self.train_classes + self.val_classes


def class_split_from_counts(labels: np.ndarray, counts: tuple[int, int, int],
                            scheme: str = "custom") -> ClassSplit:
    """Assign classes by ascending id: first ``train``, then ``val``, then ``test``."""
    labels = np.asarray(labels)
    n_tr, n_va, n_te = counts
    ids = list(range(n_tr + n_va + n_te))
    tr, va, te = tuple(ids[:n_tr]), tuple(ids[n_tr:n_tr + n_va]), tuple(ids[n_tr + n_va:])

    def nodes(cls):
        return np.flatnonzero(np.isin(labels, cls)).astype(np.int64)

    return ClassSplit(scheme, tr, va, te, nodes(tr), nodes(va), nodes(te))


def make_class_split(dataset: Dataset, scheme: SplitScheme | str,
                     counts: tuple[int, int, int] | None = None) -> ClassSplit:
    if counts is None:
        scheme = SplitScheme(scheme)
        info = KNOWN_DATASETS.get(dataset.name)
        counts = None if info is None else (
            info.split_i if scheme is SplitScheme.SPLIT_I else info.split_ii
        )
        if counts is None:
            raise DataError(f"no Class Split {scheme.value} defined for {dataset.name!r}; pass counts")
        scheme = scheme.value
    if sum(counts) != dataset.num_classes:
        raise DataError(f"split {counts} does not cover {dataset.num_classes} classes")
    return class_split_from_counts(dataset.labels, counts, str(scheme))


@dataclass(frozen=True)
class StandardSplit:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def make_standard_split(dataset: Dataset, root: str | os.PathLike | None = None,
                        path: str | os.PathLike | None = None) -> StandardSplit:
    """Load the fixed train/val/test node split shipped with a dataset."""
    if path is None:
        path = data_root(root) / dataset.name / "standard_split.json"
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing standard split fixture {path}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    index = {nid: i for i, nid in enumerate(dataset.node_ids)}

    def resolve(key):
        try:
            return np.array([index[str(v)] for v in doc[key]], dtype=np.int64)
        except KeyError as exc:
            raise DataError(f"{path}: unknown node {exc.args[0]!r} in {key!r}") from None

    split = StandardSplit(resolve("train"), resolve("val"), resolve("test"))
    _check_disjoint(split)
    info = KNOWN_DATASETS.get(dataset.name)
    if info is not None and info.standard is not None:
        got = (len(split.train), len(split.val), len(split.test))
        if got != info.standard:
            raise DataError(f"{path}: split sizes {got}, expected {info.standard}")
    return split


def planetoid_style_split(labels: np.ndarray, per_class: int = 20, n_val: int = 500,
                          n_test: int = 1000, seed: int = 0) -> StandardSplit:
    """Generate a split with the standard shape: ``per_class`` training nodes
    per class, then disjoint validation and test sets drawn at random.

    Only a stand-in when the published split indices are unavailable.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        train.extend(rng.choice(members, size=min(per_class, members.size), replace=False))
    train = np.sort(np.array(train, dtype=np.int64))
    rest = rng.permutation(np.setdiff1d(np.arange(labels.size), train))
    if rest.size < n_val + n_test:
        raise DataError(f"only {rest.size} nodes left for {n_val} val + {n_test} test")
    return StandardSplit(train, np.sort(rest[:n_val]), np.sort(rest[n_val:n_val + n_test]))


def _check_disjoint(split: StandardSplit) -> None:
    parts = (split.train, split.val, split.test)
    for i in range(3):
        for j in range(i + 1, 3):
            if np.intersect1d(parts[i], parts[j]).size:
                raise DataError("standard split sets overlap")


def adjacency_as_features(dataset: Dataset) -> Dataset:
    """Replace node attributes with the dense adjacency rows."""
    return replace(dataset, X=dataset.graph.adjacency.toarray())


# --- manifest ---------------------------------------------------------------


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(folder: str | os.PathLike, provenance: dict[str, str] | None = None) -> dict:
    """Record checksum and line count of every data file in ``folder``."""
    folder = Path(folder)
    files = {}
    for p in sorted(folder.iterdir()):
        if p.name == "manifest.json" or not p.is_file():
            continue
        with open(p, "rb") as fh:
            lines = sum(1 for _ in fh)
        files[p.name] = {
            "sha256": _sha256(p),
            "rows": lines,
            "provenance": (provenance or {}).get(p.name, ""),
        }
    manifest = {"files": files}
    (folder / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def verify_manifest(folder: str | os.PathLike) -> None:
    folder = Path(folder)
    path = folder / "manifest.json"
    if not path.exists():
        return
    manifest = json.loads(path.read_text())
    for fname, meta in manifest.get("files", {}).items():
        target = folder / fname
        if not target.exists():
            raise DataError(f"manifest lists missing file {target}")
        if _sha256(target) != meta["sha256"]:
            raise DataError(f"checksum mismatch for {target}")


# --- synthetic instance -----------------------------------------------------


@dataclass(frozen=True)
class ToyInstance:
    dataset: Dataset
    csd: CsdTable
    split: ClassSplit


@dataclass(frozen=True)
class ToySpec:
    """Knobs of the planted-partition zero-shot generator."""

    split: tuple[int, int, int] = (2, 0, 2)
    nodes_per_class: int = 10
    p_in: float = 0.5
    p_out: float = 0.02
    d: int = 16
    noise: float = 0.5
    csd_layout: str = "hierarchical"  # or "orthonormal": one basis vector per class
    seed: int = 0


def make_toy_zsl(spec: ToySpec = ToySpec()) -> ToyInstance:
    """Planted-partition graph whose classes carry structured semantic vectors.

    Seen (train) class ``j`` has attribute vector e_j. Every other class is
    paired round-robin with a train class and gets e_parent + e_own, so the
    CSDs are unit vectors whose overlap lets knowledge learned on seen classes
    transfer. ``csd_layout="orthonormal"`` drops the parent component, leaving
    one basis vector per class and nothing shared to transfer. Node features
    are a fixed random linear image of the unnormalized attribute vector plus
    Gaussian noise of scale ``noise``.
    """
    rng = np.random.default_rng(spec.seed)
    n_tr, n_va, n_te = spec.split
    C = n_tr + n_va + n_te
    if n_tr < 1:
        raise ValueError("need at least one training class")
    if spec.csd_layout not in ("hierarchical", "orthonormal"):
        raise ValueError(f"unknown csd_layout {spec.csd_layout!r}")
    attrs = np.zeros((C, C))
    for c in range(C):
        attrs[c, c] = 1.0
        if c >= n_tr and spec.csd_layout == "hierarchical":
            attrs[c, (c - n_tr) % n_tr] = 1.0
    labels = np.repeat(np.arange(C), spec.nodes_per_class)
    n = labels.size
    iu, ju = np.triu_indices(n, k=1)
    same = labels[iu] == labels[ju]
    prob = np.where(same, spec.p_in, spec.p_out)
    keep = rng.random(iu.size) < prob
    graph = build_graph(zip(iu[keep].tolist(), ju[keep].tolist()), n)
    mixing = rng.normal(size=(C, spec.d))
    X = attrs[labels] @ mixing + spec.noise * rng.normal(size=(n, spec.d))
    names = tuple(f"class{c}" for c in range(C))
    ds = Dataset("toy", graph, X, labels, names, tuple(str(i) for i in range(n)),
                 cite_records=graph.num_edges)
    csd = CsdTable("custom", attrs, names).normalized()
    return ToyInstance(ds, csd, class_split_from_counts(labels, spec.split, "toy"))


def published_labels(name: str) -> np.ndarray:
    """Label vector with the published per-class node counts, in class-id order.

    Enough to exercise procedures that depend only on the class sizes (e.g.
    random guessing) when the raw dataset is not available.
    """
    info = KNOWN_DATASETS[name]
    return np.repeat(np.arange(len(info.classes)), [c.count for c in info.classes])
