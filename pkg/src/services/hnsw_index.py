"""
Hierarchical navigable small-world index over the rows of a dense matrix.

Keys are row indices. Every heap is ordered by (distance, index) so that
equal distances resolve toward the lower index, matching exact search.
Neighbor lists follow hnswlib's heuristic pruning; levels are drawn from a
seeded generator so the built index is reproducible.
"""

import heapq
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.utils.logging import get_logger

logger = get_logger(__name__)

Candidate = Tuple[float, int]


def squared_distances(queries: np.ndarray, points: np.ndarray) -> np.ndarray:
    """
    Squared Euclidean distances between every query row and every point row.

    Computed from direct differences rather than the Gram expansion so that
    identical pairs always produce identical values.
    """
    diff = queries[:, None, :] - points[None, :, :]
    return np.einsum("qpd,qpd->qp", diff, diff)


class HnswIndex:
    """
    Layered proximity graph for approximate nearest-neighbor search.

    Args:
        points: Matrix whose rows are indexed, shape (N, h)
        max_links: Out-degree cap M on upper layers; the base layer keeps 2M
        ef_construction: Beam width used while inserting
        seed: Seed of the level generator
    """

    def __init__(self, points: np.ndarray, max_links: int = 16, ef_construction: int = 200, seed: int = 0):
        self._points = np.asarray(points, dtype=np.float64)
        self._m = max_links
        self._m0 = 2 * max_links
        self._ef_construction = ef_construction
        self._level_mult = 1.0 / np.log(max_links)
        self._random = np.random.default_rng(seed)
        self._layers: List[Dict[int, Dict[int, float]]] = []
        self._entry_point: Optional[int] = None

    def __len__(self) -> int:
        return len(self._layers[0]) if self._layers else 0

    @property
    def num_layers(self) -> int:
        return len(self._layers)

    def neighbors(self, key: int, level: int = 0) -> List[int]:
        return sorted(self._layers[level].get(key, {}))

    def _distances(self, query: np.ndarray, keys: List[int]) -> np.ndarray:
        return squared_distances(query[None, :], self._points[keys])[0]

    def build(self) -> "HnswIndex":
        """Insert every row in index order."""
        for key in range(len(self._points)):
            self.insert(key)
        logger.debug("HNSW index built", extra={"points": len(self), "layers": self.num_layers})
        return self

    def insert(self, key: int) -> None:
        point = self._points[key]
        level = int(-np.log(1.0 - self._random.random()) * self._level_mult)

        if self._entry_point is not None:
            entry = self._entry_point
            entry_dist = float(self._distances(point, [entry])[0])
            for layer in reversed(self._layers[level + 1:]):
                entry, entry_dist = self._search_greedy(point, entry, entry_dist, layer)

            found: List[Candidate] = [(entry_dist, entry)]
            for depth in range(min(level, len(self._layers) - 1), -1, -1):
                layer = self._layers[depth]
                cap = self._m0 if depth == 0 else self._m
                found = self._search_layer(point, found, layer, self._ef_construction)
                layer[key] = {p: d for d, p in self._select_neighbors(found, cap)}
                for neighbor, dist in layer[key].items():
                    linked = [(d, p) for p, d in layer[neighbor].items()] + [(dist, key)]
                    layer[neighbor] = {p: d for d, p in self._select_neighbors(linked, cap)}

        for _ in range(len(self._layers), level + 1):
            self._layers.append({key: {}})
            self._entry_point = key
        for depth in range(level + 1):
            self._layers[depth].setdefault(key, {})

    def _search_greedy(
        self, query: np.ndarray, entry: int, entry_dist: float, layer: Dict[int, Dict[int, float]]
    ) -> Candidate:
        best, best_dist = entry, entry_dist
        improved = True
        while improved:
            improved = False
            neighbors = sorted(layer[best])
            if not neighbors:
                break
            for p, d in zip(neighbors, self._distances(query, neighbors)):
                if (d, p) < (best_dist, best):
                    best, best_dist, improved = p, float(d), True
        return best, best_dist

    def _search_layer(
        self,
        query: np.ndarray,
        entry_points: List[Candidate],
        layer: Dict[int, Dict[int, float]],
        ef: int,
    ) -> List[Candidate]:
        """
        Beam search within one layer.

        Returns the ef closest (distance, key) pairs found, sorted ascending.
        """
        candidates = list(entry_points)
        heapq.heapify(candidates)
        # max-heap of the current result set, worst on top
        results = [(-d, -p) for d, p in entry_points]
        heapq.heapify(results)
        visited = {p for _, p in entry_points}

        while candidates:
            dist, current = heapq.heappop(candidates)
            worst = (-results[0][0], -results[0][1])
            if len(results) >= ef and (dist, current) > worst:
                break
            fresh = sorted(p for p in layer[current] if p not in visited)
            if not fresh:
                continue
            visited.update(fresh)
            for p, d in zip(fresh, self._distances(query, fresh)):
                d = float(d)
                worst = (-results[0][0], -results[0][1])
                if len(results) < ef:
                    heapq.heappush(candidates, (d, p))
                    heapq.heappush(results, (-d, -p))
                elif (d, p) < worst:
                    heapq.heappush(candidates, (d, p))
                    heapq.heapreplace(results, (-d, -p))
        return sorted((-d, -p) for d, p in results)

    def _select_neighbors(self, candidates: List[Candidate], max_size: int) -> List[Candidate]:
        """hnswlib neighbor heuristic: keep a candidate unless a kept one is closer to it."""
        ordered = sorted(candidates)
        if len(ordered) <= max_size:
            return ordered
        selected: List[Candidate] = []
        for dist, key in ordered:
            if len(selected) >= max_size:
                break
            if selected:
                to_selected = self._distances(self._points[key], [p for _, p in selected])
                if (to_selected < dist).any():
                    continue
            selected.append((dist, key))
        return selected

    def query(self, query: np.ndarray, k: int, ef: Optional[int] = None) -> List[Candidate]:
        """
        Approximate k nearest rows of the index to ``query``.

        When the beam covers the whole index the search falls back to a
        linear scan, which is exact.

        Returns:
            Up to k (squared distance, key) pairs, ascending
        """
        ef = max(ef or self._ef_construction, k)
        size = len(self)
        if size == 0:
            return []
        if ef >= size:
            dists = self._distances(np.asarray(query, dtype=np.float64), list(range(size)))
            order = np.argsort(dists, kind="stable")[:k]
            return [(float(dists[i]), int(i)) for i in order]

        entry = self._entry_point
        entry_dist = float(self._distances(query, [entry])[0])
        for layer in reversed(self._layers[1:]):
            entry, entry_dist = self._search_greedy(query, entry, entry_dist, layer)
        return self._search_layer(query, [(entry_dist, entry)], self._layers[0], ef)[:k]
