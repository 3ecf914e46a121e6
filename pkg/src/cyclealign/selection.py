"""Diversity-aware alignment selection.

Given a similarity view between unaligned source and target entities, we keep
mutually top-ranked candidate pairs, score each pair by its match diversity
(how much its similarity stands out from the average similarity of competing
pairs), and propose a 1:1 matching with source-proposing Gale-Shapley.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .alignment import AlignmentSet


@dataclass
class SimilarityView:
    """Dense |sources| x |targets| matrix of cosine similarities."""

    sources: list[int]
    targets: list[int]
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.sources), len(self.targets)):
            raise ValueError(f"similarity matrix shape {self.values.shape} does not match "
                             f"{len(self.sources)} sources x {len(self.targets)} targets")
        self._src_index = {e: i for i, e in enumerate(self.sources)}
        self._tgt_index = {e: j for j, e in enumerate(self.targets)}

    def similarity(self, x: int, y: int) -> float:
        return float(self.values[self._src_index[x], self._tgt_index[y]])

    def source_index(self, x: int) -> int:
        return self._src_index[x]

    def target_index(self, y: int) -> int:
        return self._tgt_index[y]

    def restrict(self, sources: list[int], targets: list[int]) -> "SimilarityView":
        rows = [self._src_index[x] for x in sources]
        cols = [self._tgt_index[y] for y in targets]
        return SimilarityView(list(sources), list(targets),
                              self.values[np.ix_(rows, cols)])


@dataclass
class CandidateSets:
    """Mutual candidate lists per source and per target, sorted by similarity."""

    by_source: dict[int, list[int]]
    by_target: dict[int, list[int]]
    top_n: int
    sim_threshold: float

    def pairs(self) -> list[tuple[int, int]]:
        return [(x, y) for x, ys in self.by_source.items() for y in ys]

    def __len__(self) -> int:
        return sum(len(ys) for ys in self.by_source.values())


def build_candidates(view: SimilarityView, top_n: int, sim_threshold: float) -> CandidateSets:
    """Per-row and per-column top-``top_n`` entries above the similarity floor,
    intersected so every retained pair is a mutual candidate."""
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    values = view.values
    n_src, n_tgt = values.shape
    keep = np.zeros_like(values, dtype=bool)
    if n_src and n_tgt:
        k = min(top_n, n_tgt)
        row_order = np.argsort(-values, axis=1, kind="stable")[:, :k]
        row_top = np.zeros_like(keep)
        np.put_along_axis(row_top, row_order, True, axis=1)
        k = min(top_n, n_src)
        col_order = np.argsort(-values, axis=0, kind="stable")[:k, :]
        col_top = np.zeros_like(keep)
        np.put_along_axis(col_top, col_order, True, axis=0)
        keep = row_top & col_top & (values >= sim_threshold)
    by_source: dict[int, list[int]] = {}
    by_target: dict[int, list[int]] = {}
    for i, j in zip(*np.nonzero(keep)):
        by_source.setdefault(view.sources[int(i)], []).append(view.targets[int(j)])
        by_target.setdefault(view.targets[int(j)], []).append(view.sources[int(i)])
    for x, ys in by_source.items():
        ys.sort(key=lambda y: (-view.similarity(x, y), y))
    for y, xs in by_target.items():
        xs.sort(key=lambda x: (-view.similarity(x, y), x))
    return CandidateSets(by_source, by_target, top_n, sim_threshold)


def mean_competing_similarity(x: int, y: int, cands: CandidateSets, view: SimilarityView,
                              count_pair_once: bool = False) -> float:
    """Average similarity of the pairs competing with (x, y).

    Literal formula: both candidate-list sums include the pair (x, y) itself
    while the denominator is |N_x| + |N_y| - 1.  With ``count_pair_once`` the
    pair's own similarity enters the numerator a single time instead.
    """
    n_x = cands.by_source[x]
    n_y = cands.by_target[y]
    if y not in n_x or x not in n_y:
        raise ValueError(f"({x}, {y}) is not a mutual candidate pair")
    total = sum(view.similarity(x, yp) for yp in n_x)
    total += sum(view.similarity(xp, y) for xp in n_y)
    if count_pair_once:
        total -= view.similarity(x, y)
    return total / (len(n_x) + len(n_y) - 1)


def match_diversity(x: int, y: int, cands: CandidateSets, view: SimilarityView,
                    count_pair_once: bool = False) -> float:
    """Similarity of (x, y) minus the average similarity of its competitors."""
    return view.similarity(x, y) - mean_competing_similarity(x, y, cands, view,
                                                             count_pair_once)


def diversity_scores(cands: CandidateSets, view: SimilarityView,
                     count_pair_once: bool = False) -> dict[tuple[int, int], float]:
    """Match diversity for every retained candidate pair (vectorized)."""
    row_sum = {x: sum(view.similarity(x, y) for y in ys)
               for x, ys in cands.by_source.items()}
    col_sum = {y: sum(view.similarity(x, y) for x in xs)
               for y, xs in cands.by_target.items()}
    out = {}
    for x, ys in cands.by_source.items():
        for y in ys:
            pi = view.similarity(x, y)
            total = row_sum[x] + col_sum[y]
            if count_pair_once:
                total -= pi
            mu = total / (len(cands.by_source[x]) + len(cands.by_target[y]) - 1)
            out[(x, y)] = pi - mu
    return out


def stable_match(cands: CandidateSets, confidence: dict[tuple[int, int], float]) -> AlignmentSet:
    """Source-proposing Gale-Shapley over the mutual candidate lists.

    Preference lists sort candidates by descending confidence, ties broken by
    ascending target id then ascending source id.  Entities whose candidate
    lists run out stay unmatched.  The result has no blocking pair.
    """
    prefs = {x: sorted(ys, key=lambda y: (-confidence[(x, y)], y))
             for x, ys in cands.by_source.items()}
    target_rank: dict[int, dict[int, int]] = {}
    for y, xs in cands.by_target.items():
        ranked = sorted(xs, key=lambda x: (-confidence[(x, y)], x))
        target_rank[y] = {x: r for r, x in enumerate(ranked)}

    next_proposal = {x: 0 for x in prefs}
    engaged_to: dict[int, int] = {}  # target -> source
    free = sorted(prefs)
    while free:
        x = free.pop()
        while next_proposal[x] < len(prefs[x]):
            y = prefs[x][next_proposal[x]]
            next_proposal[x] += 1
            holder = engaged_to.get(y)
            if holder is None:
                engaged_to[y] = x
                break
            if target_rank[y][x] < target_rank[y][holder]:
                engaged_to[y] = x
                free.append(holder)
                break

    out = AlignmentSet()
    for y in sorted(engaged_to):
        x = engaged_to[y]
        out.add(x, y, provenance="proposed", confidence=confidence[(x, y)])
    return out


def select_reliable(view: SimilarityView, top_n: int, sim_threshold: float,
                    use_diversity: bool = True,
                    count_pair_once: bool = False) -> AlignmentSet:
    """Full selection pipeline: candidates -> match diversity -> stable matching.

    With ``use_diversity`` off (ablation), raw similarity is used as the
    matching confidence instead of match diversity.
    """
    cands = build_candidates(view, top_n, sim_threshold)
    if use_diversity:
        conf = diversity_scores(cands, view, count_pair_once)
    else:
        conf = {(x, y): view.similarity(x, y) for x, y in cands.pairs()}
    return stable_match(cands, conf)


def dump_candidates_tsv(path: str, cands: CandidateSets, view: SimilarityView,
                        count_pair_once: bool = False) -> None:
    """Debug dump: source, target, pi, mu, tau per retained candidate pair."""
    tau = diversity_scores(cands, view, count_pair_once)
    with open(path, "w", encoding="utf-8") as f:
        for (x, y), t in sorted(tau.items()):
            pi = view.similarity(x, y)
            f.write(f"{x}\t{y}\t{pi:.9g}\t{pi - t:.9g}\t{t:.9g}\n")
