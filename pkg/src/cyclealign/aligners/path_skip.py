"""Recurrent path aligner with a skip connection at relation positions.

Relation paths sampled by biased random walks are encoded with a tanh
recurrence o_i = tanh(W1 o_{i-1} + W2 x_i + b); at relation positions the
skip output S1 o_i + S2 x_{i-1} predicts the next entity on the path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..walks import random_walk_paths
from .base import BaseAligner, EmbeddingTable, _batch_cosine

PATH_MARGIN = 0.5
WALK_LENGTH = 7
WALKS_PER_ENTITY = 3
WALK_BIAS = 0.9
GRAD_CLIP = 5.0


@dataclass
class PathSkipParams:
    w_state: np.ndarray   # recurrence weight on the previous hidden state
    w_input: np.ndarray   # recurrence weight on the current element
    b: np.ndarray
    s_state: np.ndarray   # skip weight on the hidden state
    s_input: np.ndarray   # skip weight on the preceding entity

    def __post_init__(self):
        d = self.b.shape[0]
        for name in ("w_state", "w_input", "s_state", "s_input"):
            m = getattr(self, name)
            if m.shape != (d, d):
                raise ValueError(f"{name} must be {d}x{d}, got {m.shape}")
            if not np.all(np.isfinite(m)):
                raise ValueError(f"{name} has non-finite entries")
        if not np.all(np.isfinite(self.b)):
            raise ValueError("b has non-finite entries")


def encode_path_skip(path: list[int], table: EmbeddingTable,
                     params: PathSkipParams) -> np.ndarray:
    """Run the skip recurrence over an alternating path; return the final output."""
    if not path:
        raise ValueError("empty path")
    o = np.zeros_like(params.b)
    out = o
    prev_x = None
    for i, element in enumerate(path):
        x = table[element]
        o = np.tanh(params.w_state @ o + params.w_input @ x + params.b)
        if i % 2 == 1:  # relation position: skip connection over the entity before it
            out = params.s_state @ o + params.s_input @ prev_x
        else:
            out = o
        prev_x = x
    return out


class PathSkipAligner(BaseAligner):
    name = "path_skip"

    def _init_model_params(self, rng):
        d = self.config.dim
        scale = 1.0 / np.sqrt(d)
        self.params["w_state"] = rng.normal(0.0, scale, size=(d, d))
        self.params["w_input"] = rng.normal(0.0, scale, size=(d, d))
        self.params["b"] = np.zeros(d)
        self.params["s_state"] = rng.normal(0.0, scale, size=(d, d))
        self.params["s_input"] = rng.normal(0.0, scale, size=(d, d))
        self._path_groups = self._sample_paths()

    def _sample_paths(self) -> list[dict]:
        """Walk both KGs once; group equal-length paths into id arrays."""
        groups: dict[tuple[int, int, int], list[list[int]]] = {}
        for kg_idx, kg in enumerate((self.kg1, self.kg2)):
            paths = random_walk_paths(kg, WALK_LENGTH, WALKS_PER_ENTITY, WALK_BIAS,
                                      rng_seed=int(self.config.rng_seed) * 2 + kg_idx)
            lo = kg.id_offset
            hi = kg.id_offset + kg.num_entities
            for p in paths:
                if len(p) < 3:
                    continue
                groups.setdefault((len(p), lo, hi), []).append(p)
        return [{"ids": np.array(ps, dtype=np.int64), "ent_range": (lo, hi)}
                for (length, lo, hi), ps in sorted(groups.items())]

    def set_paths(self, paths: list[list[int]], ent_range: tuple[int, int]) -> None:
        """Replace the sampled walks (used by small-instance tests)."""
        groups: dict[int, list[list[int]]] = {}
        for p in paths:
            if len(p) >= 3:
                groups.setdefault(len(p), []).append(p)
        self._path_groups = [{"ids": np.array(ps, dtype=np.int64), "ent_range": ent_range}
                             for _, ps in sorted(groups.items())]

    def path_skip_params(self) -> PathSkipParams:
        return PathSkipParams(self.params["w_state"], self.params["w_input"],
                              self.params["b"], self.params["s_state"],
                              self.params["s_input"])

    # -- training -----------------------------------------------------------

    def _sample_batch(self, pairs, hinge_mask, rng):
        k = self.config.negatives_per_positive
        path_negs = []
        for group in self._path_groups:
            ids = group["ids"]
            n_paths, length = ids.shape
            n_pred = (length - 1) // 2
            lo, hi = group["ent_range"]
            path_negs.append(rng.integers(lo, hi, size=(n_paths, n_pred, k)))
        return {
            "pairs": pairs,
            "hinge_mask": hinge_mask,
            "neg_targets": self._pair_negatives(pairs, hinge_mask, rng,
                                                pair_set=set(map(tuple, pairs.tolist()))),
            "path_negs": path_negs,
        }

    def _loss_and_grad(self, batch):
        ent = self.params["ent"]
        rel = self.params["rel"]
        w1, w2 = self.params["w_state"], self.params["w_input"]
        b = self.params["b"]
        s1, s2 = self.params["s_state"], self.params["s_input"]
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        k_neg = self.config.negatives_per_positive

        total_pred = sum(g["ids"].shape[0] * (g["ids"].shape[1] - 1) // 2
                         for g in self._path_groups)
        loss = 0.0
        for group, negs in zip(self._path_groups, batch["path_negs"]):
            ids = group["ids"]
            n_paths, length = ids.shape
            xs = [ent[ids[:, i]] if i % 2 == 0 else rel[ids[:, i]] for i in range(length)]
            os = []
            o_prev = np.zeros((n_paths, len(b)))
            for i in range(length):
                os.append(np.tanh(o_prev @ w1.T + xs[i] @ w2.T + b))
                o_prev = os[-1]

            do = [np.zeros_like(o) for o in os]
            dx = [np.zeros_like(x) for x in xs]
            wp = 1.0 / total_pred
            wh = 1.0 / (total_pred * k_neg)
            for pred_idx, i in enumerate(range(1, length - 1, 2)):
                p = os[i] @ s1.T + xs[i - 1] @ s2.T
                true = ent[ids[:, i + 1]]
                cos_t, dp_t, dtrue = _batch_cosine(p, true)
                loss += float(np.sum(1.0 - cos_t)) * wp
                dp = -wp * dp_t
                np.add.at(grads["ent"], ids[:, i + 1], -wp * dtrue)

                neg_ids = negs[:, pred_idx, :].reshape(-1)
                p_rep = np.repeat(p, k_neg, axis=0)
                cos_n, dp_n, dneg = _batch_cosine(p_rep, ent[neg_ids])
                slack = PATH_MARGIN + cos_n - np.repeat(cos_t, k_neg)
                active = slack > 0
                loss += float(np.sum(slack[active])) * wh
                dp += wh * (dp_n * active[:, None]).reshape(n_paths, k_neg, -1).sum(axis=1)
                np.add.at(grads["ent"], neg_ids[active], wh * dneg[active])
                counts = active.reshape(-1, k_neg).sum(axis=1).astype(float)[:, None]
                dp += -wh * counts * dp_t
                np.add.at(grads["ent"], ids[:, i + 1], -wh * counts * dtrue)

                grads["s_state"] += dp.T @ os[i]
                grads["s_input"] += dp.T @ xs[i - 1]
                do[i] += dp @ s1
                dx[i - 1] += dp @ s2

            for i in range(length - 1, -1, -1):
                da = do[i] * (1.0 - os[i] * os[i])
                o_before = os[i - 1] if i > 0 else np.zeros_like(os[0])
                grads["w_state"] += da.T @ o_before
                grads["w_input"] += da.T @ xs[i]
                grads["b"] += da.sum(axis=0)
                dx[i] += da @ w2
                if i > 0:
                    do[i - 1] += da @ w1

            for i in range(length):
                target = grads["ent"] if i % 2 == 0 else grads["rel"]
                np.add.at(target, ids[:, i], dx[i])

        loss += self._alignment_loss_grad(ent, batch["pairs"], batch["hinge_mask"],
                                          batch["neg_targets"], grads["ent"])
        return loss, grads

    def _postprocess_grads(self, grads):
        for name in ("w_state", "w_input", "b", "s_state", "s_input"):
            norm = np.linalg.norm(grads[name])
            if norm > GRAD_CLIP:
                grads[name] *= GRAD_CLIP / norm
