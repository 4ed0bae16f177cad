"""Undirected areal graphs, Laplacians, and penalty-matrix assembly."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import ConfigError, SchemaError


@dataclass(frozen=True)
class ArealGraph:
    """An undirected graph over labeled areal units.

    Edges are canonical (i < j), deduplicated, with no self-loops.
    """

    n_vertices: int
    edges: tuple[tuple[int, int], ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        if self.n_vertices < 1:
            raise ConfigError("graph needs at least one vertex")
        if len(self.labels) != self.n_vertices:
            raise ConfigError("label count must equal vertex count")
        if len(set(self.labels)) != self.n_vertices:
            raise ConfigError("vertex labels must be unique")
        seen = set()
        for a, b in self.edges:
            if a == b:
                raise ConfigError(f"self-loop at vertex {a}")
            if not (0 <= a < b < self.n_vertices):
                raise ConfigError(f"edge ({a}, {b}) out of range or "
                                  "not canonical")
            if (a, b) in seen:
                raise ConfigError(f"duplicate edge ({a}, {b})")
            seen.add((a, b))

    @classmethod
    def from_edges(cls, n_vertices: int, edges, labels=None) -> "ArealGraph":
        canon = sorted({(min(a, b), max(a, b)) for a, b in edges})
        if labels is None:
            labels = tuple(f"v{i}" for i in range(n_vertices))
        return cls(n_vertices, tuple(canon), tuple(labels))

    @classmethod
    def from_edge_list_file(cls, path) -> "ArealGraph":
        """Parse the tab-separated edge-list format.

        One edge per line as ``labelA<TAB>labelB``; a label alone on a
        line declares an isolated vertex; lines starting with ``#`` are
        ignored. The vertex universe is the union of all labels, in
        first-appearance order.
        """
        order: list[str] = []
        index: dict[str, int] = {}

        def vid(label: str) -> int:
            if label not in index:
                index[label] = len(order)
                order.append(label)
            return index[label]

        pairs = []
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) == 1:
                    vid(parts[0])
                elif len(parts) == 2:
                    a, b = vid(parts[0]), vid(parts[1])
                    if a == b:
                        raise SchemaError(
                            f"{path}:{lineno}: self-loop on {parts[0]!r}")
                    pairs.append((a, b))
                else:
                    raise SchemaError(
                        f"{path}:{lineno}: expected 1 or 2 tab-separated "
                        f"labels, got {len(parts)}")
        return cls.from_edges(len(order), pairs, tuple(order))

    def label_index(self) -> dict[str, int]:
        return {lab: i for i, lab in enumerate(self.labels)}

    def adjacency(self) -> sparse.csr_matrix:
        n = self.n_vertices
        if not self.edges:
            return sparse.csr_matrix((n, n))
        rows = [a for a, _ in self.edges] + [b for _, b in self.edges]
        cols = [b for _, b in self.edges] + [a for a, _ in self.edges]
        data = np.ones(len(rows))
        return sparse.csr_matrix((data, (rows, cols)), shape=(n, n))

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_vertices)
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        return deg

    def neighbors(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n_vertices)]
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        return [sorted(v) for v in adj]


def build_laplacian(g: ArealGraph) -> sparse.csr_matrix:
    """Graph Laplacian: degree matrix minus adjacency matrix."""
    adj = g.adjacency()
    return sparse.csr_matrix(sparse.diags(g.degrees()) - adj)


def lattice_graph(rows: int, cols: int) -> ArealGraph:
    """Regular rows x cols lattice with rook (4-neighbor) adjacency."""
    if rows < 1 or cols < 1:
        raise ConfigError("lattice dimensions must be positive")

    def vid(r, c):
        return r * cols + c

    edges = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                edges.append((vid(r, c), vid(r, c + 1)))
            if r + 1 < rows:
                edges.append((vid(r, c), vid(r + 1, c)))
    labels = tuple(f"r{r}c{c}" for r in range(rows) for c in range(cols))
    return ArealGraph.from_edges(rows * cols, edges, labels)


def _bfs_blocks(g: ArealGraph, max_block: int) -> list[np.ndarray]:
    """Greedy balanced partition: BFS-grown blocks of at most max_block."""
    adj = g.neighbors()
    assigned = np.full(g.n_vertices, False)
    blocks = []
    for start in range(g.n_vertices):
        if assigned[start]:
            continue
        block = []
        queue = deque([start])
        assigned[start] = True
        while queue and len(block) < max_block:
            v = queue.popleft()
            block.append(v)
            for u in adj[v]:
                if not assigned[u] and len(block) + len(queue) < max_block:
                    assigned[u] = True
                    queue.append(u)
        # anything left queued was admitted, flush it
        while queue:
            block.append(queue.popleft())
        blocks.append(np.array(sorted(block), dtype=int))
    return blocks


def connected_components(g: ArealGraph) -> list[np.ndarray]:
    return _bfs_blocks(g, g.n_vertices)


def approximate_laplacian(g: ArealGraph, max_block: int):
    """Block-diagonal Laplacian of an edge-pruned subgraph.

    Greedily grows BFS blocks of at most ``max_block`` vertices and
    deletes every edge crossing blocks. Returns the exact Laplacian of
    the pruned graph (rows still sum to zero), the permutation grouping
    blocks contiguously, and the blocks themselves (index arrays into
    the original vertex order).
    """
    if max_block < 1:
        raise ConfigError("max_block must be at least 1")
    blocks = _bfs_blocks(g, max_block)
    block_of = np.empty(g.n_vertices, dtype=int)
    for bi, idx in enumerate(blocks):
        block_of[idx] = bi
    kept = [(a, b) for a, b in g.edges if block_of[a] == block_of[b]]
    pruned = ArealGraph.from_edges(g.n_vertices, kept, g.labels)
    perm = np.concatenate(blocks) if blocks else np.arange(0)
    return build_laplacian(pruned), perm, blocks


class PenaltyMode(enum.Enum):
    SPATIAL_ONLY = "spatial"
    SPATIAL_PLUS_RIDGE = "spatial+ridge"

    @classmethod
    def from_name(cls, name: str) -> "PenaltyMode":
        for mode in cls:
            if mode.value == name:
                return mode
        raise ConfigError(f"unknown penalty mode {name!r}")


@dataclass(frozen=True, eq=False)
class PenaltyConfig:
    """Quadratic penalty 0.5 * (A theta)' [l1*I0 + l2*W0] (A theta).

    ``SPATIAL_ONLY`` masks everything but the spatial block, with I0 the
    spatial identity and W0 the Laplacian block. ``SPATIAL_PLUS_RIDGE``
    penalizes the full coefficient vector with an identity I0 while W0
    keeps its single Laplacian block.
    """

    mode: PenaltyMode
    lambda1: float
    lambda2: float
    k_beta: int
    n_vertices: int
    k_gamma: int
    laplacian: sparse.csr_matrix
    blocks: tuple
    perm: np.ndarray

    @property
    def dim(self) -> int:
        return self.k_beta + self.n_vertices + self.k_gamma

    @property
    def mask(self) -> np.ndarray:
        a = np.zeros(self.dim)
        if self.mode is PenaltyMode.SPATIAL_ONLY:
            a[self.k_beta:self.k_beta + self.n_vertices] = 1.0
        else:
            a[:] = 1.0
        return a

    def identity_block(self) -> sparse.csr_matrix:
        """I0 over the full coefficient vector."""
        if self.mode is PenaltyMode.SPATIAL_ONLY:
            d = np.zeros(self.dim)
            d[self.k_beta:self.k_beta + self.n_vertices] = 1.0
            return sparse.csr_matrix(sparse.diags(d))
        return sparse.csr_matrix(sparse.eye(self.dim))

    def laplacian_block(self) -> sparse.csr_matrix:
        """W0 over the full coefficient vector (Laplacian in the alpha slot)."""
        kb, nv = self.k_beta, self.n_vertices
        w0 = sparse.lil_matrix((self.dim, self.dim))
        w0[kb:kb + nv, kb:kb + nv] = self.laplacian
        return w0.tocsr()

    def value(self, theta_vec: np.ndarray) -> float:
        """Penalty value at a packed (beta, alpha, gamma) vector."""
        v = np.asarray(theta_vec, dtype=float)
        if v.shape != (self.dim,):
            raise ConfigError(
                f"expected coefficient vector of length {self.dim}, "
                f"got {v.shape}")
        kb, nv = self.k_beta, self.n_vertices
        alpha = v[kb:kb + nv]
        quad = self.lambda2 * float(alpha @ (self.laplacian @ alpha))
        if self.mode is PenaltyMode.SPATIAL_ONLY:
            quad += self.lambda1 * float(alpha @ alpha)
        else:
            quad += self.lambda1 * float(v @ v)
        return 0.5 * quad

    def eta_matrix(self) -> sparse.csr_matrix:
        """lambda1*I0 + lambda2*W0 restricted to the (beta, alpha) block."""
        kb, nv = self.k_beta, self.n_vertices
        diag = np.zeros(kb + nv)
        diag[kb:] = self.lambda1
        if self.mode is PenaltyMode.SPATIAL_PLUS_RIDGE:
            diag[:kb] = self.lambda1
        mat = sparse.lil_matrix((kb + nv, kb + nv))
        mat[kb:, kb:] = self.lambda2 * self.laplacian
        return sparse.csr_matrix(sparse.diags(diag) + mat.tocsr())

    def gamma_ridge(self) -> float:
        """Ridge multiplier applied to the dispersion step."""
        if self.mode is PenaltyMode.SPATIAL_PLUS_RIDGE:
            return self.lambda1
        return 0.0

    def alpha_penalty_matrix(self) -> sparse.csr_matrix:
        """lambda1*I + lambda2*Laplacian over the alpha block only."""
        nv = self.n_vertices
        return sparse.csr_matrix(
            self.lambda1 * sparse.eye(nv) + self.lambda2 * self.laplacian)


def assemble_penalty(mode: PenaltyMode | str, lambda1: float, lambda2: float,
                     k_beta: int, g: ArealGraph, k_gamma: int,
                     max_block: int | None = None) -> PenaltyConfig:
    """Build the penalty for a coefficient layout (k_beta, L, k_gamma).

    With ``max_block`` set, the Laplacian is replaced by the pruned
    block-diagonal approximation; the stored blocks then drive the
    partitioned mean-step solver.
    """
    if isinstance(mode, str):
        mode = PenaltyMode.from_name(mode)
    if lambda1 < 0 or lambda2 < 0:
        raise ConfigError("penalty multipliers must be nonnegative")
    if k_beta < 0 or k_gamma < 0:
        raise ConfigError("design dimensions must be nonnegative")
    if max_block is not None:
        lap, perm, blocks = approximate_laplacian(g, max_block)
    else:
        lap = build_laplacian(g)
        blocks = connected_components(g)
        perm = np.concatenate(blocks)
    return PenaltyConfig(mode, float(lambda1), float(lambda2), k_beta,
                         g.n_vertices, k_gamma, lap, tuple(blocks), perm)
