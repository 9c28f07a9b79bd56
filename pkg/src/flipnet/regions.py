"""Within-class adjacency of images and decision-region connectivity.

Two points of the same predicted class are adjacent when the straight
segment between them never crosses a decision boundary. The resulting
graph's connectivity is the evidence for connected / star-shaped
decision regions.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .network import forward_batch
from .paths import LineSegment, count_crossings


@dataclass
class AdjacencyGraph:
    n_nodes: int
    edges: list  # (u, v) with u < v
    class_id: int
    score_tol: float


@dataclass
class RegionReport:
    fraction_direct: float
    component_count: int
    component_sizes: list
    min_degree_node: tuple  # (node id, degree)
    all_pairs_connected: bool
    n_points: int = 0
    edges: list = field(default_factory=list)


def build_adjacency(net, points, class_id, score_tol=0.01):
    """Edge (u, v) iff the segment between points u and v has no crossing."""
    points = np.asarray(points, dtype=np.float64)
    logits, _ = forward_batch(net, points)
    preds = np.argmax(logits, axis=1)
    bad = np.nonzero(preds != class_id)[0]
    if bad.size:
        raise InvalidInputError(
            f"point {bad[0]} is classified as {preds[bad[0]]}, not {class_id}"
        )
    n = points.shape[0]
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            seg = LineSegment(points[u], points[v], 0.0, 1.0)
            if not count_crossings(net, seg, score_tol):
                edges.append((u, v))
    return AdjacencyGraph(n_nodes=n, edges=edges, class_id=class_id, score_tol=score_tol)


def connected_components(graph):
    """Disjoint-set components. Returns (count, sizes, labels)."""
    parent = list(range(graph.n_nodes))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for u, v in graph.edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[max(ru, rv)] = min(ru, rv)

    labels = [find(i) for i in range(graph.n_nodes)]
    roots = sorted(set(labels))
    remap = {r: k for k, r in enumerate(roots)}
    labels = [remap[l] for l in labels]
    sizes = [labels.count(k) for k in range(len(roots))]
    return len(roots), sizes, labels


def region_report(net, features, labels, class_id, score_tol=0.01, max_points=None, seed=0):
    """Connectivity report for the correctly-classified points of a class.

    fraction_direct is the share of pairs joined by a crossing-free
    segment. Star-shape / connectedness is reported as evidence
    (fraction + single-component flag), not asserted.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    logits, _ = forward_batch(net, features)
    preds = np.argmax(logits, axis=1)
    keep = np.nonzero((preds == class_id) & (labels == class_id))[0]
    if keep.size > 2 and max_points is not None and keep.size > max_points:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(keep, size=max_points, replace=False))
    if keep.size < 2:
        raise InvalidInputError(
            f"need at least 2 correctly-classified points of class {class_id}, got {keep.size}"
        )
    graph = build_adjacency(net, features[keep], class_id, score_tol)
    n = graph.n_nodes
    total_pairs = n * (n - 1) // 2
    count, sizes, _ = connected_components(graph)
    degrees = [0] * n
    for u, v in graph.edges:
        degrees[u] += 1
        degrees[v] += 1
    min_node = int(np.argmin(degrees))
    return RegionReport(
        fraction_direct=len(graph.edges) / total_pairs,
        component_count=count,
        component_sizes=sizes,
        min_degree_node=(min_node, degrees[min_node]),
        all_pairs_connected=(count == 1),
        n_points=n,
        edges=graph.edges,
    )
