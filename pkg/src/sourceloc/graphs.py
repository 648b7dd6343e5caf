"""Undirected graph container with normalized adjacency, plus edge-list I/O.

Edge-list format: optional header line ``# nodes=N``, then one ``u v`` pair
per line; other ``#`` lines are comments.  Node ids are dense 0-based
indices unless ``remap_ids`` is requested, in which case arbitrary ids are
remapped and the mapping persisted as a two-column sidecar.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class Graph:
    """Immutable after construction; safe to share across threads."""

    num_nodes: int
    edges: np.ndarray  # (E, 2) int array, u < v, lexicographically sorted
    adjacency: sp.csr_matrix = field(repr=False)
    norm_adjacency: sp.csr_matrix = field(repr=False)
    norm_adjacency_t: sp.csr_matrix = field(repr=False)
    degrees: np.ndarray = field(repr=False)

    @property
    def num_edges(self) -> int:
        return len(self.edges)


def row_normalize(adjacency: sp.spmatrix) -> sp.csr_matrix:
    """Divide each nonzero row by its sum; zero rows pass through unchanged."""
    adjacency = sp.csr_matrix(adjacency, dtype=np.float64)
    row_sums = np.asarray(adjacency.sum(axis=1)).ravel()
    inv = np.divide(1.0, row_sums, out=np.zeros_like(row_sums), where=row_sums > 0)
    return sp.diags(inv).dot(adjacency).tocsr()


def symmetric_normalize(adjacency: sp.spmatrix) -> sp.csr_matrix:
    """D^{-1/2} A D^{-1/2} alternative to the row-stochastic default."""
    adjacency = sp.csr_matrix(adjacency, dtype=np.float64)
    deg = np.asarray(adjacency.sum(axis=1)).ravel()
    inv_sqrt = np.divide(1.0, np.sqrt(deg), out=np.zeros_like(deg), where=deg > 0)
    d = sp.diags(inv_sqrt)
    return d.dot(adjacency).dot(d).tocsr()


def from_edges(edges, num_nodes: int | None = None, adjacency_norm: str = "row") -> Graph:
    """Build a Graph from (u, v) pairs; mirrored/duplicate edges collapse."""
    pairs = set()
    max_idx = -1
    for u, v in edges:
        u, v = int(u), int(v)
        if u < 0 or v < 0:
            raise ValueError(f"negative node index in edge ({u}, {v})")
        if u == v:
            continue  # self-loops are dropped
        pairs.add((min(u, v), max(u, v)))
        max_idx = max(max_idx, u, v)
    if not pairs:
        raise ValueError("graph has no edges")
    n = num_nodes if num_nodes is not None else max_idx + 1
    if max_idx >= n:
        raise ValueError(f"edge index {max_idx} out of range for {n} nodes")
    edge_arr = np.array(sorted(pairs), dtype=np.int64)
    rows = np.concatenate([edge_arr[:, 0], edge_arr[:, 1]])
    cols = np.concatenate([edge_arr[:, 1], edge_arr[:, 0]])
    adj = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    adj.sum_duplicates()
    if adjacency_norm == "row":
        norm = row_normalize(adj)
    elif adjacency_norm == "sym":
        norm = symmetric_normalize(adj)
    else:
        raise ValueError(f"unknown adjacency_norm {adjacency_norm!r}")
    degrees = np.asarray(adj.sum(axis=1)).ravel().astype(np.int64)
    return Graph(
        num_nodes=n,
        edges=edge_arr,
        adjacency=adj,
        norm_adjacency=norm,
        norm_adjacency_t=norm.T.tocsr(),
        degrees=degrees,
    )


def load_edge_list(path, remap_ids: bool = False, sidecar=None, adjacency_norm: str = "row") -> Graph:
    """Parse an edge-list file; malformed lines report their line number."""
    header_nodes = None
    raw_edges = []
    try:
        fh = open(path, "r", encoding="utf-8")
    except FileNotFoundError:
        raise FileNotFoundError(f"edge list not found: {path}") from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                body = text[1:].strip()
                if body.startswith("nodes="):
                    header_nodes = int(body.split("=", 1)[1])
                continue
            parts = text.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'u v', got {text!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-integer node id in {text!r}") from None
            if u < 0 or v < 0:
                raise ValueError(f"{path}:{lineno}: negative node id in {text!r}")
            raw_edges.append((u, v))
    if not raw_edges:
        raise ValueError(f"{path}: no edges found")
    if remap_ids:
        ids = sorted({i for e in raw_edges for i in e})
        mapping = {orig: new for new, orig in enumerate(ids)}
        raw_edges = [(mapping[u], mapping[v]) for u, v in raw_edges]
        header_nodes = len(ids)
        sidecar = sidecar if sidecar is not None else f"{path}.idmap"
        with open(sidecar, "w", encoding="utf-8") as out:
            for orig in ids:
                out.write(f"{orig} {mapping[orig]}\n")
    return from_edges(raw_edges, num_nodes=header_nodes, adjacency_norm=adjacency_norm)


def save_edge_list(g: Graph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# nodes={g.num_nodes}\n")
        for u, v in g.edges:
            fh.write(f"{u} {v}\n")


def neighbors(g: Graph, v: int) -> list[int]:
    """Sorted, duplicate-free neighbor list."""
    if not 0 <= v < g.num_nodes:
        raise IndexError(f"node {v} out of range for {g.num_nodes} nodes")
    row = g.adjacency.getrow(v)
    return sorted(int(i) for i in row.indices)
