"""On-disk formats: edge lists, binary/text feature matrices, labels, splits, partitions.

Every reader raises :class:`FormatError` with ``path:line`` diagnostics.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ._validation import InputError
from .graph import SPLIT_NAMES, UNLABELED, CoarseGraph, Graph, Partition

MAGIC = b"CMX1"
_SPLIT_LABELS = {v: k for k, v in SPLIT_NAMES.items()}


class FormatError(InputError):
    pass


def _lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line and not line.startswith("#"):
                yield lineno, line.split()


def _int(tok, path, lineno, what):
    try:
        value = int(tok)
    except ValueError:
        raise FormatError(f"{path}:{lineno}: {what} {tok!r} is not an integer") from None
    if value < 0:
        raise FormatError(f"{path}:{lineno}: {what} {tok!r} must be nonnegative")
    return value


def read_edges(path):
    """Parse ``src<TAB>dst[<TAB>weight]`` lines into raw id and weight arrays."""
    src, dst, w = [], [], []
    for lineno, tok in _lines(path):
        if len(tok) not in (2, 3):
            raise FormatError(f"{path}:{lineno}: expected 2 or 3 fields, got {len(tok)}")
        src.append(_int(tok[0], path, lineno, "node id"))
        dst.append(_int(tok[1], path, lineno, "node id"))
        if len(tok) == 3:
            try:
                weight = float(tok[2])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: weight {tok[2]!r} is not a number") from None
            if not weight > 0 or not np.isfinite(weight):
                raise FormatError(f"{path}:{lineno}: weight must be positive and finite")
            w.append(weight)
        else:
            w.append(1.0)
    return np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64), np.array(w)


def write_edges(path, src, dst, weights=None):
    with open(path, "w", encoding="utf-8") as fh:
        if weights is None:
            for a, b in zip(src, dst):
                fh.write(f"{a}\t{b}\n")
        else:
            for a, b, w in zip(src, dst, weights):
                fh.write(f"{a}\t{b}\t{float(w)!r}\n")


def write_features(path, X):
    """Binary ``CMX1`` matrix: magic, ``u64`` n and d, then row-major ``f64`` values."""
    X = np.ascontiguousarray(X, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<QQ", *X.shape))
        fh.write(X.tobytes())


def read_features(path) -> np.ndarray:
    """Read a binary ``CMX1`` matrix or the text form (``n d`` header, then rows)."""
    with open(path, "rb") as fh:
        head = fh.read(4)
        if head == MAGIC:
            dims = fh.read(16)
            if len(dims) != 16:
                raise FormatError(f"{path}: truncated header")
            n, d = struct.unpack("<QQ", dims)
            body = fh.read()
            if len(body) != 8 * n * d:
                raise FormatError(f"{path}: expected {8 * n * d} payload bytes, got {len(body)}")
            return np.frombuffer(body, dtype="<f8").reshape(n, d).astype(np.float64)
    rows, shape = [], None
    for lineno, tok in _lines(path):
        if shape is None:
            if len(tok) != 2:
                raise FormatError(f"{path}:{lineno}: header must be 'n d'")
            shape = (_int(tok[0], path, lineno, "n"), _int(tok[1], path, lineno, "d"))
            continue
        if len(tok) != shape[1]:
            raise FormatError(f"{path}:{lineno}: expected {shape[1]} values, got {len(tok)}")
        try:
            rows.append([float(t) for t in tok])
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-numeric feature value") from None
    if shape is None:
        raise FormatError(f"{path}: empty feature file")
    if len(rows) != shape[0]:
        raise FormatError(f"{path}: header declares {shape[0]} rows, found {len(rows)}")
    return np.array(rows, dtype=np.float64).reshape(shape)


def read_node_values(path, kind: str) -> dict[int, int]:
    """``node<TAB>value`` lines; ``kind`` is ``"label"`` or ``"split"``."""
    out = {}
    for lineno, tok in _lines(path):
        if len(tok) != 2:
            raise FormatError(f"{path}:{lineno}: expected 2 fields, got {len(tok)}")
        node = _int(tok[0], path, lineno, "node id")
        if kind == "split":
            if tok[1] not in SPLIT_NAMES:
                raise FormatError(f"{path}:{lineno}: unknown split {tok[1]!r}")
            value = SPLIT_NAMES[tok[1]]
        else:
            value = _int(tok[1], path, lineno, "class id")
        if node in out and out[node] != value:
            raise FormatError(f"{path}:{lineno}: conflicting entries for node {node}")
        out[node] = value
    return out


def write_labels(path, labels, ids=None):
    ids = np.arange(len(labels)) if ids is None else ids
    with open(path, "w", encoding="utf-8") as fh:
        for i, c in zip(ids, labels):
            if c != UNLABELED:
                fh.write(f"{i}\t{int(c)}\n")


def write_splits(path, splits, ids=None):
    ids = np.arange(len(splits)) if ids is None else ids
    with open(path, "w", encoding="utf-8") as fh:
        for i, s in zip(ids, splits):
            if s in _SPLIT_LABELS:
                fh.write(f"{i}\t{_SPLIT_LABELS[int(s)]}\n")


def write_partition(path, p: Partition):
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(f"{i}\t{c}\n" for i, c in enumerate(p.assign.tolist()))


def read_partition(path) -> Partition:
    pairs = {}
    for lineno, tok in _lines(path):
        if len(tok) != 2:
            raise FormatError(f"{path}:{lineno}: expected 2 fields, got {len(tok)}")
        pairs[_int(tok[0], path, lineno, "node id")] = _int(tok[1], path, lineno, "supernode id")
    n = len(pairs)
    if sorted(pairs) != list(range(n)):
        raise FormatError(f"{path}: partition must cover nodes 0..{n - 1} exactly once")
    return Partition(np.array([pairs[i] for i in range(n)]))


def write_node_map(path, original_ids):
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(f"{orig}\t{dense}\n" for dense, orig in enumerate(original_ids))


def node_id_map(ids, n_features: int) -> np.ndarray:
    """Original ids in dense order.

    Ids already inside ``[0, n_features)`` are kept as-is; otherwise the sorted
    distinct ids are remapped and must match the feature row count.
    """
    ids = np.unique(np.asarray(ids, dtype=np.int64))
    if ids.size == 0 or ids.max() < n_features:
        return np.arange(n_features)
    if ids.size != n_features:
        raise FormatError(
            f"{ids.size} distinct node ids cannot be mapped onto {n_features} feature rows"
        )
    return ids


def load_graph(edges, features, labels=None, splits=None):
    """Load native files into a :class:`Graph`; returns ``(graph, original_ids)``."""
    X = read_features(features)
    src, dst, w = read_edges(edges)
    label_map = read_node_values(labels, "label") if labels else {}
    split_map = read_node_values(splits, "split") if splits else {}
    every = np.concatenate([src, dst, list(label_map), list(split_map)]).astype(np.int64)
    original = node_id_map(every, X.shape[0])
    dense = {int(o): i for i, o in enumerate(original.tolist())}

    def remap(values, what):
        try:
            return np.array([dense[int(v)] for v in values], dtype=np.int64)
        except KeyError as exc:
            raise FormatError(f"{what} references unknown node {exc.args[0]}") from None

    n = X.shape[0]
    lab = spl = None
    if labels:
        lab = np.full(n, UNLABELED, dtype=np.int64)
        lab[remap(label_map, labels)] = list(label_map.values())
    if splits:
        spl = np.full(n, -1, dtype=np.int64)
        spl[remap(split_map, splits)] = list(split_map.values())
    g = Graph.from_edges(n, remap(src, edges), remap(dst, edges), X, weights=w,
                         labels=lab, splits=spl)
    return g, original


def save_graph(directory, g: Graph, original_ids=None):
    """Write ``edges.tsv``, ``features.cmx`` and optional labels/splits in native format."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    e = g.edge_array()
    write_edges(directory / "edges.tsv", e[:, 0], e[:, 1], g.adjacency[e[:, 0], e[:, 1]].A1)
    write_features(directory / "features.cmx", g.features)
    if g.labels is not None:
        write_labels(directory / "labels.tsv", g.labels)
    if g.splits is not None:
        write_splits(directory / "splits.tsv", g.splits)
    if original_ids is not None:
        write_node_map(directory / "node_map.tsv", original_ids)


def save_coarse_graph(directory, cg: CoarseGraph):
    """Coarse graph artifacts; diagonal weight is written as ``i<TAB>i<TAB>w`` lines."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    coo = sp.triu(cg.adjacency).tocoo()
    order = np.lexsort((coo.col, coo.row))
    write_edges(directory / "edges.tsv", coo.row[order], coo.col[order], coo.data[order])
    write_features(directory / "features.cmx", cg.features)
    with open(directory / "sizes.tsv", "w", encoding="utf-8") as fh:
        fh.writelines(f"{i}\t{int(s)}\n" for i, s in enumerate(cg.sizes))
    if cg.labels is not None:
        write_labels(directory / "labels.tsv", cg.labels)
    if cg.train_labels is not None:
        write_labels(directory / "train_labels.tsv", cg.train_labels)


def load_coarse_graph(directory) -> CoarseGraph:
    directory = Path(directory)
    X = read_features(directory / "features.cmx")
    n = X.shape[0]
    src, dst, w = read_edges(directory / "edges.tsv")
    if src.size and max(src.max(), dst.max()) >= n:
        raise FormatError(f"{directory / 'edges.tsv'}: supernode id out of range")
    off = src != dst
    rows = np.concatenate([src, dst[off]])
    cols = np.concatenate([dst, src[off]])
    vals = np.concatenate([w, w[off]])
    A = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    sizes = np.zeros(n)
    for node, size in read_node_values(directory / "sizes.tsv", "label").items():
        sizes[node] = size
    labels = train = None
    for name in ("labels", "train_labels"):
        path = directory / f"{name}.tsv"
        if path.exists():
            arr = np.full(n, UNLABELED, dtype=np.int64)
            for node, c in read_node_values(path, "label").items():
                arr[node] = c
            if name == "labels":
                labels = arr
            else:
                train = arr
    return CoarseGraph(A, sizes, X, labels=labels, train_labels=train)


def write_json_line(path_or_fh, record: dict):
    text = json.dumps(record, sort_keys=True)
    if hasattr(path_or_fh, "write"):
        path_or_fh.write(text + "\n")
    else:
        with open(path_or_fh, "a", encoding="utf-8") as fh:
            fh.write(text + "\n")
