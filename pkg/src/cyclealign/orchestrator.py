"""Cycle-teaching loop: order arrangement, transmission, conflict resolution.

Each iteration every aligner proposes reliable alignment via diversity-aware
selection, the teaching cycle is re-arranged to maximize summed edge weights
(complementarity + performance gap), each aligner resolves conflicts between
its own proposal and its predecessor's by re-matching, and the resolved pairs
are accumulated as training data for a short fine-tuning step.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .alignment import AlignmentSet
from .aligners import AlignerConfig, BaseAligner, DivergenceError, make_aligner
from .ensemble import alignment_quality, ensemble_similarity, ensemble_weights, hits_at_1
from .kg import Kg
from .selection import SimilarityView, build_candidates, diversity_scores, stable_match

log = logging.getLogger(__name__)

BASELINE_STRATEGIES = ("self_training", "intersection", "union", "majority_vote")
EXACT_ORDER_LIMIT = 8


@dataclass
class TeachingOrder:
    cycle: list[int]          # aligner index at position i teaches position i+1 (mod k)
    total_weight: float


@dataclass
class ConflictSet:
    source_conflicts: set[tuple[int, int, int]]   # (x, y_self, y_received)
    target_conflicts: set[tuple[int, int, int]]   # (y, x_self, x_received)

    def __bool__(self) -> bool:
        return bool(self.source_conflicts or self.target_conflicts)


@dataclass
class CycleConfig:
    aligner_configs: list[AlignerConfig]
    epsilon: float = 0.2
    max_iterations: int = 10
    min_new_pairs: int = 5
    top_n: int = 10
    sim_threshold: float = 0.5
    rng_seed: int = 0
    use_diversity: bool = True
    use_conflict_resolution: bool = True
    mu_count_pair_once: bool = False
    patience: int = 2

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class IterationReport:
    iteration: int
    cycle: list[int]
    per_aligner: list[dict]
    ensemble_valid_hits1: float
    total_new_pairs: int

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "cycle": self.cycle,
            "per_aligner": self.per_aligner,
            "ensemble_valid_hits1": self.ensemble_valid_hits1,
            "total_new_pairs": self.total_new_pairs,
        }


# -- teaching-order arrangement ---------------------------------------------

def complementarity(a_i: AlignmentSet, a_j: AlignmentSet) -> float:
    """Fraction of aligner i's proposal that is novel to j, relative to |j|."""
    if len(a_j) == 0:
        log.debug("complementarity against an empty proposal set; defining as 0")
        return 0.0
    novel = len(a_i.pair_set() - a_j.pair_set())
    return novel / len(a_j)


def performance_gap(valid_i: float, valid_j: float) -> float:
    """exp of the validation Hits@1 difference (fractions in [0, 1])."""
    if not (0.0 <= valid_i <= 1.0 and 0.0 <= valid_j <= 1.0):
        raise ValueError("validation scores must be fractions in [0, 1]")
    return math.exp(valid_i - valid_j)


def edge_weight(f_com: float, f_per: float, epsilon: float) -> float:
    return f_com + epsilon * f_per


def arrange_order(weights: np.ndarray) -> TeachingOrder:
    """Maximum-weight directed Hamiltonian cycle over the aligner graph.

    Exhaustive enumeration of the (k-1)! cycles through node 0 for
    k <= 8; greedy nearest-successor above that.  Ties go to the
    lexicographically smallest cycle starting from aligner 0.
    """
    weights = np.asarray(weights, dtype=float)
    k = weights.shape[0]
    if weights.shape != (k, k) or k < 2:
        raise ValueError("weights must be a k x k matrix with k >= 2")

    def cycle_weight(cycle: tuple[int, ...]) -> float:
        return float(sum(weights[cycle[i], cycle[(i + 1) % k]] for i in range(k)))

    if k <= EXACT_ORDER_LIMIT:
        best = None
        best_w = -math.inf
        for rest in itertools.permutations(range(1, k)):
            cycle = (0,) + rest
            w = cycle_weight(cycle)
            if w > best_w:
                best_w = w
                best = cycle
        return TeachingOrder(list(best), best_w)

    cycle = [0]
    remaining = set(range(1, k))
    while remaining:
        cur = cycle[-1]
        nxt = max(sorted(remaining), key=lambda j: (weights[cur, j], -j))
        cycle.append(nxt)
        remaining.discard(nxt)
    return TeachingOrder(cycle, cycle_weight(tuple(cycle)))


# -- conflict resolution ----------------------------------------------------

def find_conflicts(a_self: AlignmentSet, a_received: AlignmentSet) -> ConflictSet:
    """Source- and target-side disagreements between two 1:1 alignments."""
    source_conflicts = set()
    target_conflicts = set()
    for x in a_self.sources & a_received.sources:
        y1, y2 = a_self.target_of(x), a_received.target_of(x)
        if y1 != y2:
            source_conflicts.add((x, y1, y2))
    for y in a_self.targets & a_received.targets:
        x1, x2 = a_self.source_of(y), a_received.source_of(y)
        if x1 != x2:
            target_conflicts.add((y, x1, x2))
    return ConflictSet(source_conflicts, target_conflicts)


def _split_union(a_self: AlignmentSet, a_received: AlignmentSet,
                 conflicts: ConflictSet):
    """Partition the union of two proposals into non-conflicting and conflicting pairs."""
    conflict_sources = {x for x, _, _ in conflicts.source_conflicts}
    conflict_targets = {y for y, _, _ in conflicts.target_conflicts}
    union = list(dict.fromkeys(a_self.pairs + a_received.pairs))
    non_conflicting, conflicting = [], []
    for x, y in union:
        if x in conflict_sources or y in conflict_targets:
            conflicting.append((x, y))
        else:
            non_conflicting.append((x, y))
    return non_conflicting, conflicting


def _pair_meta(pair, *sets):
    for s in sets:
        if pair in s:
            return s.provenance.get(pair, "proposed"), s.confidence.get(pair)
    return "proposed", None


def resolve_conflicts(conflicts: ConflictSet, a_self: AlignmentSet,
                      a_received: AlignmentSet, view_self: SimilarityView,
                      view_received: SimilarityView, valid_self: float,
                      valid_received: float, top_n: int = 10,
                      sim_threshold: float = 0.5, use_diversity: bool = True,
                      mu_count_pair_once: bool = False) -> AlignmentSet:
    """Re-match conflicting entities on a validation-weighted combined similarity.

    The re-matching pools are the conflicting source entities and the targets
    not occurring in any non-conflicting pair; the combined edge weight is
    alpha * pi_self + (1 - alpha) * pi_received with alpha derived from the
    two aligners' validation Hits@1.  Output = non-conflicting pairs plus the
    re-matched ones (provenance ``resolved``).
    """
    non_conflicting, conflicting = _split_union(a_self, a_received, conflicts)
    out = AlignmentSet()
    for pair in non_conflicting:
        prov, conf = _pair_meta(pair, a_self, a_received)
        out.add(*pair, provenance=prov, confidence=conf)
    if not conflicts:
        return out

    total = valid_self + valid_received
    alpha = valid_self / total if total > 0 else 0.5

    sources = sorted({x for x, _ in conflicting})
    blocked = {y for _, y in non_conflicting}
    targets = sorted(set(view_self.targets) - blocked)
    if not sources or not targets:
        return out
    sub_self = view_self.restrict(sources, targets)
    sub_recv = view_received.restrict(sources, targets)
    combined = SimilarityView(sources, targets,
                              alpha * sub_self.values + (1 - alpha) * sub_recv.values)
    cands = build_candidates(combined, top_n, sim_threshold)
    if use_diversity:
        conf = diversity_scores(cands, combined, mu_count_pair_once)
    else:
        conf = {(x, y): combined.similarity(x, y) for x, y in cands.pairs()}
    rematched = stable_match(cands, conf)
    for x, y in rematched:
        out.add(x, y, provenance="resolved", confidence=rematched.confidence.get((x, y)))
    return out


def combine_without_rematching(a_self: AlignmentSet,
                               a_received: AlignmentSet) -> AlignmentSet:
    """Ablation variant: keep the higher-confidence pair of each conflict."""
    conflicts = find_conflicts(a_self, a_received)
    non_conflicting, conflicting = _split_union(a_self, a_received, conflicts)
    out = AlignmentSet()
    for pair in non_conflicting:
        prov, conf = _pair_meta(pair, a_self, a_received)
        out.add(*pair, provenance=prov, confidence=conf)

    def key(pair):
        _, conf = _pair_meta(pair, a_self, a_received)
        return (-(conf if conf is not None else 0.0), pair)

    for x, y in sorted(conflicting, key=key):
        if x not in out.sources and y not in out.targets:
            prov, conf = _pair_meta((x, y), a_self, a_received)
            out.add(x, y, provenance=prov, confidence=conf)
    return out


# -- training-data accumulation ---------------------------------------------

@dataclass
class AlignerState:
    index: int
    aligner: BaseAligner
    training: AlignmentSet
    frozen: bool = False
    proposal: AlignmentSet = field(default_factory=AlignmentSet)
    valid_score: float = 0.0
    view: SimilarityView | None = None
    eligible_gold: AlignmentSet = field(default_factory=AlignmentSet)


def augment_training(state: AlignerState, resolved: AlignmentSet,
                     semi_epochs: int) -> list[tuple[int, int]]:
    """Append resolved pairs to the training set and fine-tune.

    Pairs violating the 1:1 constraint against existing training data are
    dropped (never the existing pair).  Fine-tuning runs without negative
    sampling over accumulated pairs; seed pairs keep their negatives.
    """
    added = []
    for x, y in resolved:
        if x in state.training.sources or y in state.training.targets:
            log.debug("dropping pair (%d, %d): clashes with existing training data", x, y)
            continue
        prov = resolved.provenance.get((x, y), "proposed")
        state.training.add(x, y, provenance=prov,
                           confidence=resolved.confidence.get((x, y)))
        added.append((x, y))
    if not added:
        state.aligner.epoch += semi_epochs
        return added
    accumulated = {(x, y) for (x, y), prov in state.training.provenance.items()
                   if prov in ("proposed", "resolved")}
    if not state.frozen:
        state.aligner.train(state.training, semi_epochs, use_negatives=True,
                            negative_free_pairs=accumulated)
    return added


# -- run loops --------------------------------------------------------------

def _unaligned_pools(kg1: Kg, kg2: Kg, training: AlignmentSet):
    sources = [e for e in kg1.entities if e not in training.sources]
    targets = [e for e in kg2.entities if e not in training.targets]
    return sources, targets


def _selection_phase(states, kg1, kg2, splits, config):
    from .selection import select_reliable
    for st in states:
        sources, targets = _unaligned_pools(kg1, kg2, st.training)
        st.view = st.aligner.similarity_view(sources, targets)
        st.proposal = select_reliable(st.view, config.top_n, config.sim_threshold,
                                      use_diversity=config.use_diversity,
                                      count_pair_once=config.mu_count_pair_once)
        st.valid_score = st.aligner.validate(splits.valid)


def _eligible_gold(gold: AlignmentSet | None, view: SimilarityView) -> AlignmentSet:
    out = AlignmentSet()
    if gold is None:
        return out
    sources = set(view.sources)
    targets = set(view.targets)
    for x, y in gold:
        if x in sources and y in targets:
            out.add(x, y)
    return out


def _quality(proposed: AlignmentSet, gold: AlignmentSet | None,
             eligible: AlignmentSet) -> dict:
    if gold is None:
        return {"precision": None, "recall": None, "f1": None}
    p, r, f1 = alignment_quality(proposed, gold, eligible)
    return {"precision": p, "recall": r, "f1": f1}


def _ensemble_valid(states, valid_pairs: AlignmentSet) -> float:
    sources = [x for x, _ in valid_pairs]
    targets = [y for _, y in valid_pairs]
    views = [st.aligner.similarity_view(sources, targets) for st in states]
    weights = ensemble_weights([st.valid_score for st in states])
    return hits_at_1(ensemble_similarity(views, weights), valid_pairs)


def _base_train(states, splits):
    survivors = []
    for st in states:
        try:
            st.aligner.train(st.training, st.aligner.config.base_epochs,
                             use_negatives=True)
            survivors.append(st)
        except DivergenceError as exc:
            log.warning("aligner %d diverged during base training (%s); freezing", st.index, exc)
            st.frozen = True
            survivors.append(st)
    return survivors


def _teach_and_resolve(states, order: TeachingOrder, config: CycleConfig):
    """Per-aligner conflict resolution against its predecessor's proposal."""
    pos = {idx: i for i, idx in enumerate(order.cycle)}
    by_index = {st.index: st for st in states}
    resolutions = {}
    for st in states:
        pred_index = order.cycle[(pos[st.index] - 1) % len(order.cycle)]
        pred = by_index[pred_index]
        if config.use_conflict_resolution:
            conflicts = find_conflicts(st.proposal, pred.proposal)
            conflict_sources = sorted(
                {x for x, _ in st.proposal.pairs + pred.proposal.pairs})
            targets = sorted(set(st.view.targets)
                             | {y for _, y in pred.proposal.pairs})
            view_self = st.aligner.similarity_view(conflict_sources, targets)
            view_recv = pred.aligner.similarity_view(conflict_sources, targets)
            resolutions[st.index] = resolve_conflicts(
                conflicts, st.proposal, pred.proposal, view_self, view_recv,
                st.valid_score, pred.valid_score, top_n=config.top_n,
                sim_threshold=config.sim_threshold,
                use_diversity=config.use_diversity,
                mu_count_pair_once=config.mu_count_pair_once)
        else:
            resolutions[st.index] = combine_without_rematching(st.proposal, pred.proposal)
    return resolutions


def _iterate(states, kg1, kg2, splits, config, gold, combine_fn, order_fn):
    """Shared semi-supervised loop; combine_fn maps states -> per-aligner new sets."""
    reports = []
    best_valid = -1.0
    stale = 0
    for iteration in range(1, config.max_iterations + 1):
        _selection_phase(states, kg1, kg2, splits, config)
        for st in states:
            st.eligible_gold = _eligible_gold(gold, st.view)
        order = order_fn(states)
        resolutions = combine_fn(states, order)

        per_aligner = []
        total_new = 0
        for st in states:
            resolved = resolutions[st.index]
            added = augment_training(st, resolved, st.aligner.config.semi_epochs)
            total_new += len(added)
            entry = {
                "aligner": st.index,
                "model_kind": st.aligner.config.model_kind,
                "proposed": len(st.proposal),
                "resolved": len(resolved),
                "added": len(added),
                "valid_hits1": st.valid_score,
                "proposal_quality": _quality(st.proposal, gold, st.eligible_gold),
                "resolved_quality": _quality(resolved, gold, st.eligible_gold),
            }
            per_aligner.append(entry)

        for st in states:
            st.valid_score = st.aligner.validate(splits.valid)
        ens_valid = _ensemble_valid(states, splits.valid)
        reports.append(IterationReport(
            iteration=iteration,
            cycle=list(order.cycle) if order is not None else [st.index for st in states],
            per_aligner=per_aligner,
            ensemble_valid_hits1=ens_valid,
            total_new_pairs=total_new,
        ))

        if total_new < config.min_new_pairs:
            log.info("stopping: %d new pairs < min_new_pairs=%d", total_new,
                     config.min_new_pairs)
            break
        if ens_valid > best_valid + 1e-12:
            best_valid = ens_valid
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                log.info("stopping: ensemble validation stalled for %d iterations", stale)
                break
    return reports


def run_cycle_teaching(kg1: Kg, kg2: Kg, splits, config: CycleConfig,
                       gold: AlignmentSet | None = None):
    """Run the full cycle-teaching loop; returns (reports, aligner states)."""
    if len(config.aligner_configs) < 2:
        raise ValueError("cycle teaching needs k >= 2 aligners; "
                         "use run_baseline('self_training', ...) for a single aligner")
    if len(splits.train) == 0:
        raise ValueError("seed alignment must be non-empty")
    states = [AlignerState(i, make_aligner(c, kg1, kg2), splits.train.copy())
              for i, c in enumerate(config.aligner_configs)]
    states = _base_train(states, splits)
    active = [st for st in states if not st.frozen]
    if len(active) < 2:
        raise RuntimeError("fewer than 2 aligners survived base training")

    def order_fn(sts):
        k = len(sts)
        w = np.zeros((k, k))
        for i, si in enumerate(sts):
            for j, sj in enumerate(sts):
                if i == j:
                    continue
                w[i, j] = edge_weight(complementarity(si.proposal, sj.proposal),
                                      performance_gap(si.valid_score, sj.valid_score),
                                      config.epsilon)
        order = arrange_order(w)
        # map matrix positions back to aligner indexes
        return TeachingOrder([sts[i].index for i in order.cycle], order.total_weight)

    def combine_fn(sts, order):
        return _teach_and_resolve(sts, order, config)

    reports = _iterate(active, kg1, kg2, splits, config, gold, combine_fn, order_fn)
    return reports, states


def _combine_baseline(strategy: str, states) -> AlignmentSet:
    proposals = [st.proposal for st in states]
    k = len(proposals)
    counts: dict[tuple[int, int], int] = {}
    confs: dict[tuple[int, int], list[float]] = {}
    for prop in proposals:
        for pair in prop:
            counts[pair] = counts.get(pair, 0) + 1
            conf = prop.confidence.get(pair)
            if conf is not None:
                confs.setdefault(pair, []).append(conf)

    if strategy == "intersection":
        keep = [p for p, c in counts.items() if c == k]
    elif strategy == "majority_vote":
        keep = [p for p, c in counts.items() if c > k / 2]
    elif strategy == "union":
        keep = list(counts)
    else:
        raise ValueError(f"unknown baseline combination {strategy!r}")

    def conf_of(pair):
        vals = confs.get(pair)
        return sum(vals) / len(vals) if vals else 0.0

    out = AlignmentSet()
    for x, y in sorted(keep, key=lambda p: (-counts[p], -conf_of(p), p)):
        if x not in out.sources and y not in out.targets:
            out.add(x, y, provenance="proposed", confidence=conf_of((x, y)))
    return out


def run_baseline(strategy: str, kg1: Kg, kg2: Kg, splits, config: CycleConfig,
                 gold: AlignmentSet | None = None):
    """Semi-supervised baselines: self-training and agreement-based strategies."""
    if strategy not in BASELINE_STRATEGIES:
        raise ValueError(f"strategy must be one of {BASELINE_STRATEGIES}")
    k = len(config.aligner_configs)
    if strategy == "majority_vote" and k % 2 == 0:
        raise ValueError("majority_vote requires an odd number of aligners")
    if k < 1:
        raise ValueError("need at least one aligner")
    states = [AlignerState(i, make_aligner(c, kg1, kg2), splits.train.copy())
              for i, c in enumerate(config.aligner_configs)]
    states = _base_train(states, splits)
    active = [st for st in states if not st.frozen]
    if not active:
        raise RuntimeError("no aligner survived base training")

    def order_fn(sts):
        return TeachingOrder([st.index for st in sts], 0.0)

    def combine_fn(sts, order):
        if strategy == "self_training":
            return {st.index: st.proposal for st in sts}
        combined = _combine_baseline(strategy, sts)
        return {st.index: combined for st in sts}

    reports = _iterate(active, kg1, kg2, splits, config, gold, combine_fn, order_fn)
    return reports, states
