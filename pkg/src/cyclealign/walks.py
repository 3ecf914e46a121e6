"""Biased random walks producing alternating entity/relation paths."""

from __future__ import annotations

import numpy as np

from .kg import Kg


def random_walk_paths(kg: Kg, walk_length: int, walks_per_entity: int,
                      bias: float, rng_seed: int) -> list[list[int]]:
    """Sample walks starting from every entity of ``kg``.

    Each path alternates entity and relation ids and has at most
    ``walk_length`` elements (odd, so paths start and end with an entity).
    ``bias`` is the probability of restricting a step to unvisited neighbor
    entities when any exist.  Walks hitting an entity with no outgoing edges
    are truncated there; an isolated start yields the single-element path.
    """
    if walk_length < 3 or walk_length % 2 == 0:
        raise ValueError("walk_length must be odd and >= 3")
    if not 0.0 <= bias <= 1.0:
        raise ValueError("bias must be in [0, 1]")
    if walks_per_entity < 1:
        raise ValueError("walks_per_entity must be >= 1")
    rng = np.random.default_rng(rng_seed)
    paths = []
    for start in kg.entities:
        for _ in range(walks_per_entity):
            path = [start]
            visited = {start}
            cur = start
            while len(path) < walk_length:
                neighbors = kg.out_adjacency[cur]
                if not neighbors:
                    break
                pool = neighbors
                if bias > 0:
                    unvisited = [(r, t) for r, t in neighbors if t not in visited]
                    if unvisited and rng.random() < bias:
                        pool = unvisited
                r, t = pool[int(rng.integers(0, len(pool)))]
                path.append(r)
                path.append(t)
                visited.add(t)
                cur = t
            paths.append(path)
    return paths
