"""Synthetic KG pair generator for desk-scale experiments.

Builds one degree-biased random graph, copies it under renamed ids, rewires a
controlled fraction of the copied triples, and returns the gold alignment over
the shared entities.  Everything is a pure function of the spec, so identical
specs yield identical datasets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .alignment import AlignmentSet, SplitSet
from .kg import Kg

# Probability of attaching an endpoint preferentially (by degree) instead of
# uniformly; keeps the degree distribution skewed like real KGs.
_PREF_ATTACH_PROB = 0.7


@dataclass(frozen=True)
class SynthSpec:
    n_entities: int
    n_relations: int
    avg_degree: float
    overlap_ratio: float = 1.0
    structure_noise: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_entities < 10:
            raise ValueError("n_entities must be >= 10 (degenerate graph)")
        if self.n_relations < 1:
            raise ValueError("n_relations must be positive")
        if self.avg_degree <= 0:
            raise ValueError("avg_degree must be positive")
        if not 0.0 < self.overlap_ratio <= 1.0:
            raise ValueError("overlap_ratio must be in (0, 1]")
        if not 0.0 <= self.structure_noise < 1.0:
            raise ValueError("structure_noise must be in [0, 1)")


def _random_source_triples(spec: SynthSpec, rng: np.random.Generator) -> list[tuple[str, str, str]]:
    n = spec.n_entities
    m = max(n - 1, int(round(n * spec.avg_degree / 2.0)))
    triples: set[tuple[int, int, int]] = set()
    order: list[tuple[int, int, int]] = []
    endpoints: list[int] = []  # multiset of endpoints, for degree-biased draws

    def add(h: int, r: int, t: int) -> bool:
        if h == t or (h, r, t) in triples:
            return False
        triples.add((h, r, t))
        order.append((h, r, t))
        endpoints.append(h)
        endpoints.append(t)
        return True

    # Random attachment tree first so no entity is fully isolated.
    for i in range(1, n):
        j = int(rng.integers(0, i))
        r = int(rng.integers(0, spec.n_relations))
        if rng.random() < 0.5:
            add(i, r, j)
        else:
            add(j, r, i)

    while len(order) < m:
        if rng.random() < _PREF_ATTACH_PROB:
            h = endpoints[int(rng.integers(0, len(endpoints)))]
        else:
            h = int(rng.integers(0, n))
        if rng.random() < _PREF_ATTACH_PROB:
            t = endpoints[int(rng.integers(0, len(endpoints)))]
        else:
            t = int(rng.integers(0, n))
        r = int(rng.integers(0, spec.n_relations))
        add(h, r, t)

    return [(f"a{h}", f"r{r}", f"a{t}") for h, r, t in order]


def _rewire(target_triples: list[tuple[str, str, str]], entity_names: list[str],
            noise: float, rng: np.random.Generator) -> list[tuple[str, str, str]]:
    """Rewire exactly floor(noise * m) triples to random endpoints.

    A rewired triple never collides with an existing target triple or with
    any renamed source triple, so the rewire count equals the triple-set
    diff under the gold renaming.
    """
    m = len(target_triples)
    k = int(math.floor(noise * m))
    if k == 0:
        return list(target_triples)
    out = list(target_triples)
    occupied = set(out)
    chosen = rng.choice(m, size=k, replace=False)
    for idx in sorted(int(i) for i in chosen):
        h, r, t = out[idx]
        while True:
            e = entity_names[int(rng.integers(0, len(entity_names)))]
            cand = (h, r, e) if rng.random() < 0.5 else (e, r, t)
            if cand[0] != cand[2] and cand not in occupied:
                break
        occupied.discard(out[idx])
        occupied.add(cand)
        out[idx] = cand
    return out


def generate_synthetic_pair(spec: SynthSpec) -> tuple[Kg, Kg, AlignmentSet]:
    """Generate (source Kg, target Kg, gold alignment).

    The target graph is a renamed copy of the source with ``structure_noise``
    of its triples rewired; the gold alignment covers a random
    ``overlap_ratio`` fraction of entities.  Gold pairs carry no provenance
    label: they are ground truth, not training data.
    """
    rng = np.random.default_rng(spec.rng_seed)
    src_triples = _random_source_triples(spec, rng)

    def rename(name: str) -> str:
        return "b" + name[1:] if name.startswith("a") else "s" + name[1:]

    tgt_entity_names = [f"b{i}" for i in range(spec.n_entities)]
    copied = [(rename(h), rename(r), rename(t)) for h, r, t in src_triples]
    tgt_triples = _rewire(copied, tgt_entity_names, spec.structure_noise, rng)

    src_entity_names = [f"a{i}" for i in range(spec.n_entities)]
    kg1 = Kg(src_triples, extra_entities=src_entity_names)
    kg2 = Kg(tgt_triples, id_offset=kg1.num_entities, rel_offset=kg1.num_relations,
             extra_entities=tgt_entity_names)

    n_shared = int(math.floor(spec.overlap_ratio * spec.n_entities))
    shared = sorted(int(i) for i in rng.choice(spec.n_entities, size=n_shared, replace=False))
    gold = AlignmentSet()
    for i in shared:
        gold.add(kg1.entity_id(f"a{i}"), kg2.entity_id(f"b{i}"))
    return kg1, kg2, gold


def split_alignment(gold: AlignmentSet, train_ratio: float, valid_ratio: float,
                    rng_seed: int) -> SplitSet:
    """Shuffle the gold alignment into disjoint train/valid/test splits."""
    if train_ratio < 0 or valid_ratio < 0 or train_ratio + valid_ratio >= 1.0:
        raise ValueError("ratios must be nonnegative with train + valid < 1")
    rng = np.random.default_rng(rng_seed)
    pairs = gold.pairs
    perm = rng.permutation(len(pairs))
    n_train = int(round(train_ratio * len(pairs)))
    n_valid = int(round(valid_ratio * len(pairs)))
    train, valid, test = AlignmentSet(), AlignmentSet(), AlignmentSet()
    for rank, idx in enumerate(perm):
        x, y = pairs[int(idx)]
        if rank < n_train:
            train.add(x, y, provenance="seed")
        elif rank < n_train + n_valid:
            valid.add(x, y)
        else:
            test.add(x, y)
    return SplitSet(train, valid, test)
