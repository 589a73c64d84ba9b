"""TU-format datasets, input-feature schemes, stratified folds and the SPINBANK cache."""
from __future__ import annotations

import enum
import json
import re
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from spin.graph import FeatureBank, Graph, OperatorKind, degree_feature, operator_bank
from spin.model import PrecomputedGraph
from spin.nn import make_rng

MAX_DEGREE_CAP = 500


class DataError(Exception):
    """Base class for dataset problems (CLI exit code 2)."""


class MissingFile(DataError):
    pass


class MalformedLine(DataError):
    def __init__(self, path, lineno, text):
        super().__init__(f"{path}:{lineno}: malformed line {text!r}")
        self.path, self.lineno = path, lineno


class DanglingEdge(DataError):
    pass


class SchemeUnavailable(DataError):
    pass


class TooFewSamples(DataError):
    pass


class VersionMismatch(DataError):
    pass


class FeatureScheme(str, enum.Enum):
    ONE_HOT_NODE_LABEL = "onehot"
    DEGREE_ONE_HOT = "degree"
    ATTRIBUTES_PLUS_ONE_HOT = "attributes+onehot"


@dataclass
class Dataset:
    graphs: list
    num_classes: int
    name: str = ""
    feature_scheme: Optional[FeatureScheme] = None
    node_labels: Optional[list] = None  # per graph, int array per node
    node_attributes: Optional[list] = None  # per graph, (n, a) float array
    class_values: list = field(default_factory=list)  # original label of class index i

    def __len__(self) -> int:
        return len(self.graphs)

    @property
    def labels(self) -> np.ndarray:
        return np.array([g.label for g in self.graphs], dtype=np.int64)

    @property
    def feature_dim(self) -> int:
        return self.graphs[0].feature_dim


# --- TU loader -------------------------------------------------------------

_SEPARATORS = re.compile(r"\s*,\s*|\s+")


def _read_rows(path: Path, parse, width: Optional[int] = None) -> list:
    if not path.exists():
        raise MissingFile(f"required file not found: {path}")
    rows = []
    with open(path, "r", newline=None) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            parts = _SEPARATORS.split(text)
            if width is not None and len(parts) != width:
                raise MalformedLine(path, lineno, text)
            try:
                rows.append((lineno, [parse(p) for p in parts]))
            except ValueError:
                raise MalformedLine(path, lineno, text) from None
    return rows


def _parse_int(text: str) -> int:
    value = float(text)
    if value != int(value):
        raise ValueError(text)
    return int(value)


def load_tu_dataset(directory, name: str) -> Dataset:
    """Load ``{name}_A.txt``, ``_graph_indicator.txt``, ``_graph_labels.txt`` and
    the optional ``_node_labels.txt`` / ``_node_attributes.txt``.

    Node ids in the edge file are 1-indexed and global; graphs come back with
    0-based local ids, symmetrized and deduplicated edges, self-loops removed
    and class labels remapped to ``0..K-1`` in sorted order of the originals.
    Node features are left as a constant column until :func:`build_features`.
    """
    base = Path(directory)
    if (base / name).is_dir() and not (base / f"{name}_A.txt").exists():
        base = base / name
    f = lambda suffix: base / f"{name}_{suffix}.txt"

    indicator_rows = _read_rows(f("graph_indicator"), _parse_int, 1)
    indicator = np.array([r[0] for _, r in indicator_rows], dtype=np.int64)
    label_rows = _read_rows(f("graph_labels"), _parse_int, 1)
    raw_labels = [r[0] for _, r in label_rows]
    n_graphs = len(raw_labels)
    n_nodes = len(indicator)
    if n_nodes == 0:
        raise DataError(f"{f('graph_indicator')}: no nodes")
    if indicator.min() < 1 or indicator.max() > n_graphs:
        bad = int(np.flatnonzero((indicator < 1) | (indicator > n_graphs))[0])
        raise MalformedLine(f("graph_indicator"), indicator_rows[bad][0], str(indicator[bad]))
    if np.any(np.diff(indicator) < 0):
        raise DataError(f"{f('graph_indicator')}: nodes are not grouped by graph")

    graph_of = indicator - 1
    counts = np.bincount(graph_of, minlength=n_graphs)
    if np.any(counts == 0):
        empty = int(np.flatnonzero(counts == 0)[0]) + 1
        raise DataError(f"{f('graph_indicator')}: graph {empty} has no nodes")
    starts = np.zeros(n_graphs + 1, dtype=np.int64)
    np.cumsum(counts, out=starts[1:])

    edge_rows = _read_rows(f("A"), _parse_int, 2)
    per_graph_edges: list[list] = [[] for _ in range(n_graphs)]
    for lineno, (u, v) in edge_rows:
        if not (1 <= u <= n_nodes and 1 <= v <= n_nodes):
            raise DanglingEdge(f"{f('A')}:{lineno}: edge ({u}, {v}) references a node outside 1..{n_nodes}")
        gu, gv = graph_of[u - 1], graph_of[v - 1]
        if gu != gv:
            raise DanglingEdge(f"{f('A')}:{lineno}: edge ({u}, {v}) joins graphs {gu + 1} and {gv + 1}")
        per_graph_edges[gu].append((u - 1 - starts[gu], v - 1 - starts[gu]))

    classes = sorted(set(raw_labels))
    remap = {c: i for i, c in enumerate(classes)}

    node_labels = None
    if f("node_labels").exists():
        rows = _read_rows(f("node_labels"), _parse_int)
        if len(rows) != n_nodes:
            raise DataError(f"{f('node_labels')}: {len(rows)} rows for {n_nodes} nodes")
        flat = np.array([r[0] for _, r in rows], dtype=np.int64)
        node_labels = [flat[starts[i]:starts[i + 1]] for i in range(n_graphs)]
    node_attributes = None
    if f("node_attributes").exists():
        rows = _read_rows(f("node_attributes"), float)
        if len(rows) != n_nodes:
            raise DataError(f"{f('node_attributes')}: {len(rows)} rows for {n_nodes} nodes")
        widths = {len(r) for _, r in rows}
        if len(widths) != 1:
            lineno = next(ln for ln, r in rows if len(r) != len(rows[0][1]))
            raise MalformedLine(f("node_attributes"), lineno, "inconsistent attribute count")
        flat = np.array([r for _, r in rows], dtype=np.float64)
        node_attributes = [flat[starts[i]:starts[i + 1]] for i in range(n_graphs)]

    graphs = [
        Graph(int(counts[i]), per_graph_edges[i], None, remap[raw_labels[i]])
        for i in range(n_graphs)
    ]
    return Dataset(graphs, len(classes), name, None, node_labels, node_attributes, classes)


def write_tu_dataset(ds: Dataset, directory, name: Optional[str] = None) -> None:
    """Write ``ds`` back out in TU text layout (edges listed in both directions)."""
    name = name or ds.name
    base = Path(directory)
    base.mkdir(parents=True, exist_ok=True)
    edges, indicator, offset = [], [], 0
    for gi, g in enumerate(ds.graphs, start=1):
        for u, v in g.edges.tolist():
            edges.append(f"{u + 1 + offset}, {v + 1 + offset}")
            edges.append(f"{v + 1 + offset}, {u + 1 + offset}")
        indicator += [str(gi)] * g.node_count
        offset += g.node_count
    classes = ds.class_values or list(range(ds.num_classes))
    (base / f"{name}_A.txt").write_text("\n".join(edges) + ("\n" if edges else ""))
    (base / f"{name}_graph_indicator.txt").write_text("\n".join(indicator) + "\n")
    (base / f"{name}_graph_labels.txt").write_text("\n".join(str(classes[g.label]) for g in ds.graphs) + "\n")
    if ds.node_labels is not None:
        flat = np.concatenate(ds.node_labels)
        (base / f"{name}_node_labels.txt").write_text("\n".join(map(str, flat.tolist())) + "\n")
    if ds.node_attributes is not None:
        flat = np.concatenate(ds.node_attributes)
        lines = [", ".join(repr(float(x)) for x in row) for row in flat.tolist()]
        (base / f"{name}_node_attributes.txt").write_text("\n".join(lines) + "\n")


# --- feature schemes -------------------------------------------------------

def default_scheme(ds: Dataset) -> FeatureScheme:
    if ds.node_labels is not None and ds.node_attributes is not None and ds.name.upper().startswith("ENZYMES"):
        return FeatureScheme.ATTRIBUTES_PLUS_ONE_HOT
    if ds.node_labels is not None:
        return FeatureScheme.ONE_HOT_NODE_LABEL
    return FeatureScheme.DEGREE_ONE_HOT


def _label_one_hot(ds: Dataset) -> list:
    vocab = np.unique(np.concatenate(ds.node_labels)) if ds.graphs else np.array([])
    index = {int(v): i for i, v in enumerate(vocab.tolist())}
    out = []
    for labels in ds.node_labels:
        m = np.zeros((len(labels), len(vocab)))
        m[np.arange(len(labels)), [index[int(l)] for l in labels]] = 1.0
        out.append(m)
    return out


def build_features(ds: Dataset, scheme: "FeatureScheme | str | None" = None,
                   max_degree: Optional[int] = None) -> Dataset:
    """Return a copy of ``ds`` whose graphs carry the scheme's input features."""
    scheme = default_scheme(ds) if scheme is None else FeatureScheme(scheme)
    if scheme is FeatureScheme.ONE_HOT_NODE_LABEL:
        if ds.node_labels is None:
            raise SchemeUnavailable(f"{ds.name}: node labels required for one-hot features")
        feats = _label_one_hot(ds)
    elif scheme is FeatureScheme.ATTRIBUTES_PLUS_ONE_HOT:
        if ds.node_labels is None or ds.node_attributes is None:
            raise SchemeUnavailable(f"{ds.name}: node labels and attributes required")
        feats = [np.hstack([a, oh]) for a, oh in zip(ds.node_attributes, _label_one_hot(ds))]
    else:
        if max_degree is None:
            max_degree = max((int(g.degrees().max(initial=0)) for g in ds.graphs), default=1)
            max_degree = min(max(max_degree, 1), MAX_DEGREE_CAP)
        feats = [degree_feature(g, max_degree) for g in ds.graphs]
    graphs = [g.with_features(x) for g, x in zip(ds.graphs, feats)]
    return Dataset(graphs, ds.num_classes, ds.name, scheme, ds.node_labels, ds.node_attributes, ds.class_values)


# --- folds -----------------------------------------------------------------

@dataclass
class Fold:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


@dataclass
class FoldPlan:
    folds: list
    seed: int

    def __len__(self) -> int:
        return len(self.folds)

    def to_json(self) -> str:
        return json.dumps(
            {
                "seed": self.seed,
                "folds": [
                    {"train": f.train.tolist(), "val": f.val.tolist(), "test": f.test.tolist()}
                    for f in self.folds
                ],
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "FoldPlan":
        obj = json.loads(text)
        folds = [Fold(*(np.array(f[k], dtype=np.int64) for k in ("train", "val", "test"))) for f in obj["folds"]]
        return cls(folds, obj["seed"])


def _stratified_split(labels: np.ndarray, idx: np.ndarray, fraction: float, rng) -> tuple:
    """Split ``idx`` into (rest, holdout) with ``holdout`` ~ ``fraction`` per class."""
    classes = np.unique(labels[idx])
    total = max(1, int(round(fraction * len(idx))))
    per_class = {c: np.sum(labels[idx] == c) for c in classes}
    quota = {c: fraction * n for c, n in per_class.items()}
    take = {c: int(np.floor(q)) for c, q in quota.items()}
    short = total - sum(take.values())
    for c in sorted(classes, key=lambda c: (-(quota[c] - take[c]), c))[:max(short, 0)]:
        take[c] += 1
    hold = []
    for c in classes:
        members = idx[labels[idx] == c]
        members = members[rng.permutation(len(members))]
        hold.append(members[:min(take[c], len(members) - 1)])
    hold = np.sort(np.concatenate(hold)) if hold else np.array([], dtype=np.int64)
    rest = np.setdiff1d(idx, hold)
    return rest, hold


def stratified_kfold(labels, k: int, seed: int, val_fraction: float = 0.1) -> FoldPlan:
    """Seeded stratified k-fold with a stratified validation holdout inside each training part.

    Each class is shuffled and dealt round-robin across folds, continuing the
    deal where the previous class stopped, so per-fold class counts differ by
    at most one and fold sizes stay balanced.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if k < 2:
        raise ValueError("k must be >= 2")
    classes, counts = np.unique(labels, return_counts=True)
    for c, n in zip(classes, counts):
        if n < k:
            raise TooFewSamples(f"class {c} has {n} samples, fewer than k={k}")
    rng = make_rng(seed, 0xF01D)
    assign = np.empty(len(labels), dtype=np.int64)
    start = 0
    for c in classes:
        members = np.flatnonzero(labels == c)
        members = members[rng.permutation(len(members))]
        assign[members] = (start + np.arange(len(members))) % k
        start = (start + len(members)) % k
    folds = []
    all_idx = np.arange(len(labels))
    for i in range(k):
        test = np.flatnonzero(assign == i)
        train_all = np.setdiff1d(all_idx, test)
        train, val = _stratified_split(labels, train_all, val_fraction, make_rng(seed, 0xF01D, i + 1))
        folds.append(Fold(train, val, test))
    return FoldPlan(folds, seed)


# --- precompute + SPINBANK cache ------------------------------------------

BANK_MAGIC = b"SPINBANK"
BANK_VERSION = 1


def precompute_dataset(ds: Dataset, kind: "OperatorKind | str", R: int,
                       cache_path=None, threads: int = 1) -> list:
    """Operator banks for every graph; optionally persisted as SPINBANK."""
    kind = OperatorKind.parse(kind)
    work = lambda g: PrecomputedGraph(operator_bank(g, kind, R), g.label)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            pgs = list(pool.map(work, ds.graphs))
    else:
        pgs = [work(g) for g in ds.graphs]
    if cache_path is not None:
        write_bank_cache(cache_path, pgs)
    return pgs


def write_bank_cache(path, pgs: Sequence[PrecomputedGraph]) -> None:
    if not pgs:
        raise ValueError("nothing to write")
    R, d = pgs[0].bank.R, pgs[0].bank.feature_dim
    with open(path, "wb") as fh:
        fh.write(BANK_MAGIC)
        fh.write(struct.pack("<IIII", BANK_VERSION, R, d, len(pgs)))
        for pg in pgs:
            if pg.bank.R != R or pg.bank.feature_dim != d:
                raise ValueError("all banks in a cache must share R and d")
            label = -1 if pg.label is None else int(pg.label)
            fh.write(struct.pack("<Ii", pg.bank.node_count, label))
            fh.write(np.ascontiguousarray(pg.bank.stacked(), dtype="<f8").tobytes())


def read_bank_cache(path) -> list:
    data = Path(path).read_bytes()
    if data[:8] != BANK_MAGIC:
        raise DataError(f"{path}: not a SPINBANK file")
    version, R, d, count = struct.unpack_from("<IIII", data, 8)
    if version != BANK_VERSION:
        raise VersionMismatch(f"{path}: cache version {version}, expected {BANK_VERSION}")
    pos = 24
    out = []
    for _ in range(count):
        n, label = struct.unpack_from("<Ii", data, pos)
        pos += 8
        size = (R + 1) * n * d
        arr = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(R + 1, n, d)
        pos += 8 * size
        out.append(PrecomputedGraph(FeatureBank([m.astype(np.float64) for m in arr]),
                                    None if label < 0 else label))
    return out
