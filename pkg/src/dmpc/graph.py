"""Undirected weighted communication graphs and their Laplacians."""

from collections import deque
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class InfoGraph:
    """Information architecture: which agents may exchange state and plans.

    Vertices are numbered 1..num_agents. Edges are unordered pairs with a
    strictly positive coupling weight.
    """

    num_agents: int
    weights: dict = field(default_factory=dict)  # (i, j) with i < j -> weight

    def __post_init__(self):
        if self.num_agents < 1:
            raise ValueError("num_agents must be >= 1")
        canonical = {}
        for (i, j), w in self.weights.items():
            if i == j:
                raise ValueError(f"self-loop on vertex {i}")
            if not (1 <= i <= self.num_agents and 1 <= j <= self.num_agents):
                raise ValueError(f"edge ({i},{j}) out of range 1..{self.num_agents}")
            key = (min(i, j), max(i, j))
            if key in canonical:
                raise ValueError(f"duplicate edge {key}")
            if not w > 0:
                raise ValueError(f"edge {key} has non-positive weight {w}")
            canonical[key] = float(w)
        object.__setattr__(self, "weights", canonical)

    @property
    def edges(self):
        return sorted(self.weights)

    def weight(self, i, j):
        return self.weights[(min(i, j), max(i, j))]

    def neighbors(self, i):
        """Set of vertices sharing an edge with i."""
        if not (1 <= i <= self.num_agents):
            raise ValueError(f"vertex {i} out of range 1..{self.num_agents}")
        out = set()
        for a, b in self.weights:
            if a == i:
                out.add(b)
            elif b == i:
                out.add(a)
        return out

    def laplacian(self):
        """Weighted graph Laplacian: degree on the diagonal, -a_ij off it."""
        n = self.num_agents
        lap = np.zeros((n, n))
        for (i, j), w in self.weights.items():
            lap[i - 1, i - 1] += w
            lap[j - 1, j - 1] += w
            lap[i - 1, j - 1] -= w
            lap[j - 1, i - 1] -= w
        return lap

    def is_connected(self):
        """Breadth-first reachability from vertex 1 covers all vertices."""
        if self.num_agents == 1:
            return True
        seen = {1}
        queue = deque([1])
        while queue:
            v = queue.popleft()
            for u in self.neighbors(v):
                if u not in seen:
                    seen.add(u)
                    queue.append(u)
        return len(seen) == self.num_agents


def path_graph(n, weight=1.0):
    """Path 1-2-...-n with uniform edge weight."""
    return InfoGraph(n, {(i, i + 1): weight for i in range(1, n)})
