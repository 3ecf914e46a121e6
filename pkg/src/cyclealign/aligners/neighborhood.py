"""Neighborhood-aggregation aligner.

An entity is represented as comb(e, agg(neighbors)) with agg = unweighted
mean over in- and out-neighbors and comb = the equal-weight sum
0.5 * e + 0.5 * mean.  Alignment learning operates on the aggregated vectors.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..kg import Kg
from .base import BaseAligner, EmbeddingTable


def neighbor_ids(kg: Kg, e: int) -> list[int]:
    """In- and out-neighbor entity ids of ``e`` with adjacency multiplicity."""
    return [t for _, t in kg.out_adjacency[e]] + [h for _, h in kg.in_adjacency[e]]


def aggregate_neighborhood(e: int, table: EmbeddingTable, kg: Kg) -> np.ndarray:
    """comb(e, agg(neighbors)); an isolated entity keeps its own vector."""
    own = table[e]
    neighbors = neighbor_ids(kg, e)
    if not neighbors:
        return own.copy()
    mean = np.mean([table[n] for n in neighbors], axis=0)
    return 0.5 * own + 0.5 * mean


def aggregation_matrix(kg1: Kg, kg2: Kg, n_entities: int) -> sp.csr_matrix:
    """Sparse operator A with A @ E == per-entity aggregated vectors."""
    rows, cols, vals = [], [], []
    for kg in (kg1, kg2):
        for e in kg.entities:
            neighbors = neighbor_ids(kg, e)
            if not neighbors:
                rows.append(e)
                cols.append(e)
                vals.append(1.0)
                continue
            rows.append(e)
            cols.append(e)
            vals.append(0.5)
            w = 0.5 / len(neighbors)
            for n in neighbors:
                rows.append(e)
                cols.append(n)
                vals.append(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_entities, n_entities))


class NeighborhoodAligner(BaseAligner):
    name = "neighborhood"

    def _init_model_params(self, rng):
        n = self.kg1.num_entities + self.kg2.num_entities
        self._agg = aggregation_matrix(self.kg1, self.kg2, n)
        self._agg_t = self._agg.T.tocsr()

    def _sample_batch(self, pairs, hinge_mask, rng):
        return {
            "pairs": pairs,
            "hinge_mask": hinge_mask,
            "neg_targets": self._pair_negatives(pairs, hinge_mask, rng,
                                                pair_set=set(map(tuple, pairs.tolist()))),
        }

    def _loss_and_grad(self, batch):
        ent = self.params["ent"]
        f = self._agg @ ent
        g_f = np.zeros_like(f)
        loss = self._alignment_loss_grad(f, batch["pairs"], batch["hinge_mask"],
                                         batch["neg_targets"], g_f)
        g_ent = self._agg_t @ g_f
        return loss, {"ent": g_ent}

    def _inference_vectors(self):
        return self._agg @ self.params["ent"]
