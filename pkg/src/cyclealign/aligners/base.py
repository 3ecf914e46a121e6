"""Shared aligner machinery: embeddings, similarity primitives, training loop.

All aligners embed both KGs of a pair in one vector space (entity and
relation id spaces of the two graphs are disjoint, so a single table serves
both).  Training is full-batch gradient descent with Adam; entity vectors are
re-normalized to unit L2 norm after every epoch.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..alignment import AlignmentSet
from ..ensemble import hits_at_1
from ..kg import Kg
from ..selection import SimilarityView

log = logging.getLogger(__name__)

MODEL_KINDS = ("translational", "neighborhood", "path_skip")

# Margin for the cosine-scale hinge on alignment negatives (the triple-loss
# margin from the config lives on the energy scale, which is incomparable).
ALIGN_MARGIN = 0.5
# Relative weight of the alignment objective against the structure objective.
ALIGN_WEIGHT = 2.0


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch


@dataclass(frozen=True)
class AlignerConfig:
    model_kind: str
    dim: int = 32
    learning_rate: float = 0.01
    margin: float = 1.0
    negatives_per_positive: int = 5
    base_epochs: int = 200
    semi_epochs: int = 20
    rng_seed: int = 0

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(f"model_kind must be one of {MODEL_KINDS}")
        if self.dim < 4:
            raise ValueError("dim must be >= 4")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.negatives_per_positive < 1:
            raise ValueError("negatives_per_positive must be >= 1")
        if self.semi_epochs > self.base_epochs:
            raise ValueError("semi_epochs must not exceed base_epochs")


@dataclass
class EmbeddingTable:
    """Map from entity (and optionally relation) id to a fixed-dim vector."""

    dim: int
    vectors: dict[int, np.ndarray]

    def __post_init__(self):
        for eid, v in self.vectors.items():
            v = np.asarray(v, dtype=float)
            if v.shape != (self.dim,):
                raise ValueError(f"vector for id {eid} has shape {v.shape}, expected ({self.dim},)")
            if not np.all(np.isfinite(v)):
                raise ValueError(f"vector for id {eid} has non-finite entries")
            self.vectors[eid] = v

    def __getitem__(self, eid: int) -> np.ndarray:
        try:
            return self.vectors[eid]
        except KeyError:
            raise KeyError(f"id {eid} not embedded") from None


_zero_cosine_count = 0


def cosine(u, v) -> float:
    """Cosine similarity; a zero vector yields 0 and bumps a diagnostic counter."""
    global _zero_cosine_count
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError("cosine requires equal-length vectors")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        _zero_cosine_count += 1
        log.debug("cosine of a zero vector (degenerate embedding)")
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def zero_cosine_count() -> int:
    return _zero_cosine_count


def translational_energy(h, r, t, norm: str = "L2") -> float:
    """Energy of a triple under the translation model: ||h + r - t||."""
    h, r, t = (np.asarray(a, dtype=float) for a in (h, r, t))
    if not h.shape == r.shape == t.shape:
        raise ValueError("dimension mismatch")
    diff = h + r - t
    if norm == "L1":
        return float(np.sum(np.abs(diff)))
    if norm == "L2":
        return float(np.linalg.norm(diff))
    raise ValueError("norm must be 'L1' or 'L2'")


def alignment_loss(table1: EmbeddingTable, table2: EmbeddingTable,
                   pairs: AlignmentSet) -> float:
    """1 - mean cosine over aligned pairs (loss form of the alignment objective)."""
    if len(pairs) == 0:
        raise ValueError("empty pair set")
    total = sum(cosine(table1[x], table2[y]) for x, y in pairs)
    return 1.0 - total / len(pairs)


class Adam:
    """Plain Adam over a dict of named parameter arrays."""

    def __init__(self, params: dict[str, np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1t = 1 - self.beta1 ** self.t
        b2t = 1 - self.beta2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            self.params[k] -= self.lr * (self.m[k] / b1t) / (np.sqrt(self.v[k] / b2t) + self.eps)


def _batch_cosine(a: np.ndarray, b: np.ndarray):
    """Row-wise cosine with gradients.

    Returns (cos, d_cos/d_a, d_cos/d_b) for row-paired matrices a, b.
    """
    na = np.linalg.norm(a, axis=1, keepdims=True)
    nb = np.linalg.norm(b, axis=1, keepdims=True)
    na = np.maximum(na, 1e-12)
    nb = np.maximum(nb, 1e-12)
    dot = np.sum(a * b, axis=1, keepdims=True)
    cos = dot / (na * nb)
    da = b / (na * nb) - cos * a / (na * na)
    db = a / (na * nb) - cos * b / (nb * nb)
    return cos[:, 0], da, db


class BaseAligner:
    """Common state and training loop; subclasses implement the objective."""

    name = "base"

    def __init__(self, config: AlignerConfig, kg1: Kg, kg2: Kg):
        if kg2.id_offset != kg1.num_entities or kg2.rel_offset != kg1.num_relations:
            raise ValueError("kg2 must be interned directly after kg1 "
                             "(disjoint contiguous id spaces)")
        self.config = config
        self.kg1 = kg1
        self.kg2 = kg2
        self.epoch = 0
        rng = np.random.default_rng(config.rng_seed)
        n_ent = kg1.num_entities + kg2.num_entities
        n_rel = kg1.num_relations + kg2.num_relations
        ent = rng.normal(0.0, 1.0, size=(n_ent, config.dim)) / np.sqrt(config.dim)
        self.params: dict[str, np.ndarray] = {
            "ent": _normalize_rows(ent),
            "rel": rng.normal(0.0, 1.0, size=(n_rel, config.dim)) / np.sqrt(config.dim),
        }
        self._init_model_params(rng)
        self._train_rng = np.random.default_rng((config.rng_seed, 1))
        self._triples = np.array(kg1.triples + kg2.triples, dtype=np.int64)
        self._triple_set = set(kg1.triples) | set(kg2.triples)

    # -- subclass hooks -----------------------------------------------------

    def _init_model_params(self, rng: np.random.Generator) -> None:
        pass

    def _sample_batch(self, pairs: np.ndarray, hinge_mask: np.ndarray,
                      rng: np.random.Generator) -> dict:
        """Sample per-epoch negatives (and any other stochastic inputs)."""
        raise NotImplementedError

    def _loss_and_grad(self, batch: dict) -> tuple[float, dict[str, np.ndarray]]:
        raise NotImplementedError

    def _postprocess_grads(self, grads: dict[str, np.ndarray]) -> None:
        pass

    def _inference_vectors(self) -> np.ndarray:
        """Per-entity vectors used for similarity and retrieval."""
        return self.params["ent"]

    # -- training -----------------------------------------------------------

    def train(self, train_pairs: AlignmentSet, epochs: int,
              use_negatives: bool = True,
              negative_free_pairs: set[tuple[int, int]] | None = None) -> None:
        """Run ``epochs`` of full-batch gradient descent on the joint objective.

        ``use_negatives`` toggles the margin/negative terms of alignment
        learning globally; ``negative_free_pairs`` exempts specific pairs
        (newly accumulated training data) while seed pairs keep negatives.
        """
        if len(train_pairs) == 0:
            raise ValueError("train_pairs must be non-empty")
        if epochs < 1:
            raise ValueError("epochs must be >= 1")
        pairs = np.array(train_pairs.pairs, dtype=np.int64)
        if not use_negatives:
            hinge_mask = np.zeros(len(pairs), dtype=bool)
        elif negative_free_pairs:
            hinge_mask = np.array([tuple(p) not in negative_free_pairs for p in pairs])
        else:
            hinge_mask = np.ones(len(pairs), dtype=bool)
        opt = Adam(self.params, self.config.learning_rate)
        for _ in range(epochs):
            batch = self._sample_batch(pairs, hinge_mask, self._train_rng)
            loss, grads = self._loss_and_grad(batch)
            if not np.isfinite(loss):
                raise DivergenceError(self.epoch, loss)
            self._postprocess_grads(grads)
            opt.step(grads)
            self.params["ent"] = _normalize_rows(self.params["ent"])
            self.epoch += 1

    # -- alignment objective shared by all models ---------------------------

    def _pair_negatives(self, pairs: np.ndarray, hinge_mask: np.ndarray,
                        rng: np.random.Generator, pair_set: set) -> np.ndarray:
        """Negative target ids per hinged pair, filtered against positives."""
        k = self.config.negatives_per_positive
        n_hinged = int(hinge_mask.sum())
        lo, hi = self.kg2.id_offset, self.kg2.id_offset + self.kg2.num_entities
        neg = rng.integers(lo, hi, size=(n_hinged, k))
        hinged_sources = pairs[hinge_mask, 0]
        for _ in range(3):
            bad = np.array([[(int(x), int(y)) in pair_set for y in row]
                            for x, row in zip(hinged_sources, neg)])
            if not bad.any():
                break
            neg[bad] = rng.integers(lo, hi, size=int(bad.sum()))
        return neg

    def _alignment_loss_grad(self, vectors: np.ndarray, pairs: np.ndarray,
                             hinge_mask: np.ndarray, neg_targets: np.ndarray,
                             grad_out: np.ndarray) -> float:
        """Alignment objective on ``vectors``; accumulates d/d vectors into grad_out.

        Loss = (1 - mean cosine over pairs) plus, for hinged pairs, a mean
        hinge pushing sampled negative targets below the true pair by
        ALIGN_MARGIN.  Returns the (weighted) loss value.
        """
        xs, ys = pairs[:, 0], pairs[:, 1]
        cos, dx, dy = _batch_cosine(vectors[xs], vectors[ys])
        n = len(pairs)
        loss = 1.0 - float(np.mean(cos))
        coeff = -ALIGN_WEIGHT / n
        np.add.at(grad_out, xs, coeff * dx)
        np.add.at(grad_out, ys, coeff * dy)

        if hinge_mask.any():
            k = neg_targets.shape[1]
            hx = pairs[hinge_mask, 0]
            hy = pairs[hinge_mask, 1]
            cos_pos, dpx, dpy = _batch_cosine(vectors[hx], vectors[hy])
            hx_rep = np.repeat(hx, k)
            neg_flat = neg_targets.reshape(-1)
            cos_neg, dnx, dny = _batch_cosine(vectors[hx_rep], vectors[neg_flat])
            slack = ALIGN_MARGIN + cos_neg - np.repeat(cos_pos, k)
            active = slack > 0
            n_terms = len(slack)
            hinge = float(np.sum(slack[active])) / n_terms
            loss += hinge
            w = ALIGN_WEIGHT / n_terms
            np.add.at(grad_out, hx_rep[active], w * dnx[active])
            np.add.at(grad_out, neg_flat[active], w * dny[active])
            counts = active.reshape(-1, k).sum(axis=1).astype(float)
            np.add.at(grad_out, hx, -w * counts[:, None] * dpx)
            np.add.at(grad_out, hy, -w * counts[:, None] * dpy)
        return ALIGN_WEIGHT * loss

    # -- read-only views ----------------------------------------------------

    def similarity_view(self, sources: list[int], targets: list[int]) -> SimilarityView:
        """Dense cosine similarity matrix in the given id orders."""
        vecs = self._inference_vectors()
        a = _normalize_rows(vecs[np.array(sources, dtype=np.int64)])
        b = _normalize_rows(vecs[np.array(targets, dtype=np.int64)])
        return SimilarityView(list(sources), list(targets), a @ b.T)

    def validate(self, valid_pairs: AlignmentSet) -> float:
        """Hits@1 with candidates restricted to the validation targets."""
        if len(valid_pairs) == 0:
            raise ValueError("valid_pairs must be non-empty")
        sources = [x for x, _ in valid_pairs]
        targets = [y for _, y in valid_pairs]
        return hits_at_1(self.similarity_view(sources, targets), valid_pairs)

    def embedding_table(self, include_relations: bool = False) -> EmbeddingTable:
        vectors = {int(e): self.params["ent"][e].copy()
                   for kg in (self.kg1, self.kg2) for e in kg.entities}
        if include_relations:
            for kg in (self.kg1, self.kg2):
                for r in kg.relations:
                    vectors[int(r)] = self.params["rel"][r].copy()
        return EmbeddingTable(self.config.dim, vectors)

    # -- checkpointing ------------------------------------------------------

    def save_checkpoint(self, path: str) -> None:
        ent = self.params["ent"]
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"{self.config.model_kind} {self.config.dim} {self.epoch}\n")
            for kg in (self.kg1, self.kg2):
                for e in kg.entities:
                    vals = " ".join(f"{v:.9g}" for v in ent[e])
                    f.write(f"{kg.entity_name(e)} {vals}\n")

    def load_checkpoint(self, path: str) -> None:
        with open(path, encoding="utf-8") as f:
            header = f.readline().split()
            if len(header) != 3:
                raise ValueError(f"{path}: malformed checkpoint header")
            kind, dim, epoch = header[0], int(header[1]), int(header[2])
            if kind != self.config.model_kind or dim != self.config.dim:
                raise ValueError(f"{path}: checkpoint is {kind}/dim={dim}, aligner is "
                                 f"{self.config.model_kind}/dim={self.config.dim}")
            self.epoch = epoch
            missing = []
            for line in f:
                fields = line.split()
                if len(fields) != dim + 1:
                    raise ValueError(f"{path}: bad vector line for {fields[:1]}")
                name = fields[0]
                eid = None
                for kg in (self.kg1, self.kg2):
                    if kg.has_entity(name):
                        eid = kg.entity_id(name)
                        break
                if eid is None:
                    missing.append(name)
                    continue
                self.params["ent"][eid] = np.array([float(v) for v in fields[1:]])
            if missing:
                raise ValueError(f"{path}: entities not in dataset: {missing[:5]}")


def read_checkpoint_header(path: str) -> tuple[str, int, int]:
    with open(path, encoding="utf-8") as f:
        fields = f.readline().split()
    if len(fields) != 3:
        raise ValueError(f"{path}: malformed checkpoint header")
    return fields[0], int(fields[1]), int(fields[2])


def _normalize_rows(a: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(a, axis=1, keepdims=True)
    return a / np.maximum(norms, 1e-12)
