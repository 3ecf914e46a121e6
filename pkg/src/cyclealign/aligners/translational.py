"""Translation-based aligner: triples scored by ||h + r - t||."""

from __future__ import annotations

import numpy as np

from .base import BaseAligner


class TranslationalAligner(BaseAligner):
    """Margin-ranking loss over relational triples plus alignment learning.

    Triple negatives corrupt one endpoint uniformly within the triple's own
    KG and are filtered against known triples.
    """

    name = "translational"

    def _entity_range(self, eid: int) -> tuple[int, int]:
        if eid < self.kg2.id_offset:
            return (self.kg1.id_offset, self.kg1.id_offset + self.kg1.num_entities)
        return (self.kg2.id_offset, self.kg2.id_offset + self.kg2.num_entities)

    def _sample_batch(self, pairs, hinge_mask, rng):
        triples = self._triples
        b = len(triples)
        k = self.config.negatives_per_positive
        in_kg1 = triples[:, 0] < self.kg2.id_offset
        lo = np.where(in_kg1, self.kg1.id_offset, self.kg2.id_offset)
        hi = np.where(in_kg1, self.kg1.id_offset + self.kg1.num_entities,
                      self.kg2.id_offset + self.kg2.num_entities)
        neg = rng.integers(lo[:, None], hi[:, None], size=(b, k))
        corrupt_head = rng.random((b, k)) < 0.5
        for _ in range(3):
            h_n = np.where(corrupt_head, neg, triples[:, 0:1])
            t_n = np.where(corrupt_head, triples[:, 2:3], neg)
            bad = np.array([(int(h), int(r), int(t)) in self._triple_set
                            for h, r, t in zip(h_n.reshape(-1),
                                               np.repeat(triples[:, 1], k),
                                               t_n.reshape(-1))]).reshape(b, k)
            if not bad.any():
                break
            resampled = rng.integers(np.broadcast_to(lo[:, None], (b, k))[bad],
                                     np.broadcast_to(hi[:, None], (b, k))[bad])
            neg[bad] = resampled
        return {
            "pairs": pairs,
            "hinge_mask": hinge_mask,
            "neg_targets": self._pair_negatives(pairs, hinge_mask, rng,
                                                pair_set=set(map(tuple, pairs.tolist()))),
            "triple_neg": neg,
            "corrupt_head": corrupt_head,
        }

    def _loss_and_grad(self, batch):
        ent = self.params["ent"]
        rel = self.params["rel"]
        g_ent = np.zeros_like(ent)
        g_rel = np.zeros_like(rel)
        triples = self._triples
        h, r, t = triples[:, 0], triples[:, 1], triples[:, 2]
        k = self.config.negatives_per_positive

        u_pos = ent[h] + rel[r] - ent[t]
        n_pos = np.maximum(np.linalg.norm(u_pos, axis=1), 1e-12)
        unit_pos = u_pos / n_pos[:, None]

        neg = batch["triple_neg"]
        corrupt_head = batch["corrupt_head"]
        h_n = np.where(corrupt_head, neg, h[:, None]).reshape(-1)
        t_n = np.where(corrupt_head, t[:, None], neg).reshape(-1)
        r_n = np.repeat(r, k)
        u_neg = ent[h_n] + rel[r_n] - ent[t_n]
        n_neg = np.maximum(np.linalg.norm(u_neg, axis=1), 1e-12)
        unit_neg = u_neg / n_neg[:, None]

        slack = self.config.margin + np.repeat(n_pos, k) - n_neg
        active = slack > 0
        n_terms = len(slack)
        loss = float(np.sum(slack[active])) / n_terms
        w = 1.0 / n_terms

        counts = active.reshape(-1, k).sum(axis=1).astype(float)[:, None]
        np.add.at(g_ent, h, w * counts * unit_pos)
        np.add.at(g_rel, r, w * counts * unit_pos)
        np.add.at(g_ent, t, -w * counts * unit_pos)
        np.add.at(g_ent, h_n[active], -w * unit_neg[active])
        np.add.at(g_rel, r_n[active], -w * unit_neg[active])
        np.add.at(g_ent, t_n[active], w * unit_neg[active])

        loss += self._alignment_loss_grad(ent, batch["pairs"], batch["hinge_mask"],
                                          batch["neg_targets"], g_ent)
        return loss, {"ent": g_ent, "rel": g_rel}
