"""End-to-end acceptance checks for the whole package.

Criteria 1-4 and 9 are deterministic; criteria 5-8 compare semi-supervised
strategies on a shared noisy synthetic benchmark (n=1000, 25% rewired triples,
10% seed alignment, three aligners, three rng seeds).  The benchmark runs once
per test session and is cached via pytest's cache between sessions.
"""

import itertools
import json
import math
import time

import numpy as np
import pytest

from cyclealign.aligners import AlignerConfig
from cyclealign.alignment import AlignmentSet
from cyclealign.cli import EXIT_OK, main
from cyclealign.ensemble import ensemble_similarity, ensemble_weights
from cyclealign.orchestrator import (
    CycleConfig,
    arrange_order,
    complementarity,
    edge_weight,
    find_conflicts,
    performance_gap,
    resolve_conflicts,
    run_baseline,
    run_cycle_teaching,
)
from cyclealign.selection import (
    SimilarityView,
    build_candidates,
    diversity_scores,
    match_diversity,
    mean_competing_similarity,
    stable_match,
)
from cyclealign.synth import SynthSpec, generate_synthetic_pair, split_alignment

from test_gradients import check_gradients, frozen_batch
from conftest import toy_pairs


# =========================================================================
# criterion 1: stable matching correctness
# =========================================================================

def gs_input(conf_matrix, sources, targets):
    from cyclealign.selection import CandidateSets
    by_source = {x: list(targets) for x in sources}
    by_target = {y: list(sources) for y in targets}
    conf = {(x, y): float(conf_matrix[i, j])
            for i, x in enumerate(sources) for j, y in enumerate(targets)}
    return CandidateSets(by_source, by_target, len(targets), -2.0), conf


def brute_force_source_optimal(conf_matrix):
    """Enumerate all maximum matchings, keep the stable ones, return the one
    that is best for every source (it dominates, hence maximizes total conf)."""
    n, m = conf_matrix.shape
    swap = n > m
    c = conf_matrix.T if swap else conf_matrix
    n, m = c.shape
    best, best_total = None, -math.inf
    stable_assignments = []
    for assign in itertools.permutations(range(m), n):
        a = np.array(assign)
        matched_conf = c[np.arange(n), a]
        holder = np.full(m, -np.inf)
        holder_conf = np.full(m, -np.inf)
        holder[a] = np.arange(n)
        holder_conf[a] = matched_conf
        # blocking pair: both sides strictly improve
        blocks = (c > matched_conf[:, None]) & (c > holder_conf[None, :])
        if blocks.any():
            continue
        stable_assignments.append((a, matched_conf))
        total = float(matched_conf.sum())
        if total > best_total:
            best_total = total
            best = a
    assert stable_assignments, "no stable matching found"
    # the returned matching must dominate every stable one source-wise
    best_conf = c[np.arange(n), best]
    for _, mc in stable_assignments:
        assert np.all(best_conf >= mc - 1e-12)
    if swap:
        return {int(best[i]): 100 + i for i in range(n)}
    return {i: 100 + int(best[i]) for i in range(n)}


def test_acceptance_1_stable_matching_matches_brute_force_and_is_stable():
    start = time.time()
    rng = np.random.default_rng(123)
    for _ in range(500):
        n = int(rng.integers(1, 8))
        m = int(rng.integers(1, 8))
        conf_matrix = rng.random((n, m))
        sources = list(range(n))
        targets = [100 + j for j in range(m)]
        cands, conf = gs_input(conf_matrix, sources, targets)
        got = stable_match(cands, conf)
        want = brute_force_source_optimal(conf_matrix)
        assert {x: y for x, y in got.pairs} == want

    # larger instances: partial candidate lists, no blocking pair
    for _ in range(200):
        n = int(rng.integers(5, 51))
        m = int(rng.integers(5, 51))
        view = SimilarityView(list(range(n)), [1000 + j for j in range(m)],
                              rng.uniform(-1.0, 1.0, (n, m)))
        cands = build_candidates(view, 3, 0.0)
        conf = diversity_scores(cands, view)
        matching = stable_match(cands, conf)
        matched_src = {x: y for x, y in matching.pairs}
        matched_tgt = {y: x for x, y in matching.pairs}
        for x, ys in cands.by_source.items():
            for y in ys:
                if matched_src.get(x) == y:
                    continue
                x_better = x not in matched_src or \
                    (-conf[(x, y)], y) < (-conf[(x, matched_src[x])], matched_src[x])
                y_better = y not in matched_tgt or \
                    (-conf[(x, y)], x) < (-conf[(matched_tgt[y], y)], matched_tgt[y])
                assert not (x_better and y_better), f"blocking pair ({x}, {y})"
    assert time.time() - start < 10.0


# =========================================================================
# criterion 2: order arrangement optimality
# =========================================================================

def test_acceptance_2_order_arrangement_is_exhaustively_optimal():
    rng = np.random.default_rng(7)
    for trial in range(200):
        k = int(rng.choice([3, 4, 5, 6]))
        w = rng.uniform(0.0, 2.0, (k, k))
        np.fill_diagonal(w, 0.0)
        candidates = [(0,) + rest for rest in itertools.permutations(range(1, k))]
        assert len(candidates) == math.factorial(k - 1)

        def weight_of(cycle):
            return sum(w[cycle[i], cycle[(i + 1) % k]] for i in range(k))

        best_w = max(weight_of(c) for c in candidates)
        # documented tie rule: first maximum in lexicographic enumeration order
        best = next(c for c in candidates if weight_of(c) == best_w)
        order = arrange_order(w)
        assert order.total_weight == pytest.approx(best_w, abs=1e-12)
        assert tuple(order.cycle) == best


# =========================================================================
# criterion 3: formula oracles vs naive reimplementations
# =========================================================================

def test_acceptance_3_match_diversity_oracle():
    rng = np.random.default_rng(11)
    evaluated = 0
    for _ in range(120):
        n = int(rng.integers(3, 8))
        view = SimilarityView(list(range(n)), [100 + j for j in range(n)],
                              rng.uniform(-1.0, 1.0, (n, n)))
        cands = build_candidates(view, 3, -1.0)
        tau = diversity_scores(cands, view)
        for x, ys in cands.by_source.items():
            for y in ys:
                naive_mu = (sum(view.similarity(x, yp) for yp in cands.by_source[x])
                            + sum(view.similarity(xp, y) for xp in cands.by_target[y]))
                naive_mu /= len(cands.by_source[x]) + len(cands.by_target[y]) - 1
                assert mean_competing_similarity(x, y, cands, view) == \
                    pytest.approx(naive_mu, abs=1e-12)
                naive_tau = view.similarity(x, y) - naive_mu
                assert match_diversity(x, y, cands, view) == pytest.approx(naive_tau, abs=1e-12)
                assert tau[(x, y)] == pytest.approx(naive_tau, abs=1e-12)
                evaluated += 1
    assert evaluated >= 1000

    # hand anchors
    single = SimilarityView([0], [100], np.array([[0.5]]))
    cands = build_candidates(single, 3, -1.0)
    assert mean_competing_similarity(0, 100, cands, single) == pytest.approx(1.0)
    assert match_diversity(0, 100, cands, single) == pytest.approx(-0.5)


def test_acceptance_3_edge_weight_oracles():
    rng = np.random.default_rng(12)
    for _ in range(1000):
        n_i = int(rng.integers(0, 6))
        n_j = int(rng.integers(0, 6))
        pool = [(i, 100 + i) for i in range(8)]
        pairs_i = [pool[k] for k in rng.choice(8, size=n_i, replace=False)]
        pairs_j = [pool[k] for k in rng.choice(8, size=n_j, replace=False)]
        a_i = AlignmentSet(pairs_i)
        a_j = AlignmentSet(pairs_j)
        naive_com = (len(set(pairs_i) - set(pairs_j)) / len(pairs_j)) if pairs_j else 0.0
        assert complementarity(a_i, a_j) == pytest.approx(naive_com, abs=1e-12)

        vi, vj = rng.random(), rng.random()
        assert performance_gap(vi, vj) == pytest.approx(math.exp(vi - vj), abs=1e-12)
        eps = rng.random()
        assert edge_weight(naive_com, math.exp(vi - vj), eps) == \
            pytest.approx(naive_com + eps * math.exp(vi - vj), abs=1e-12)

    assert performance_gap(0.7, 0.5) == pytest.approx(math.exp(0.2), abs=1e-12)
    assert edge_weight(0.5, 0.388, 0.2) == pytest.approx(0.5776, abs=1e-12)


def test_acceptance_3_conflict_weight_oracle():
    """Resolved-pair confidence equals the validation-weighted similarity."""
    rng = np.random.default_rng(13)
    for _ in range(1000):
        pi1 = rng.uniform(-1, 1, (1, 3))
        pi2 = rng.uniform(-1, 1, (1, 3))
        v1, v2 = rng.random(), rng.random()
        view1 = SimilarityView([0], [100, 101, 102], pi1)
        view2 = SimilarityView([0], [100, 101, 102], pi2)
        a_self = AlignmentSet([(0, 100)])
        a_recv = AlignmentSet([(0, 101)])
        out = resolve_conflicts(find_conflicts(a_self, a_recv), a_self, a_recv,
                                view1, view2, v1, v2, top_n=5, sim_threshold=-2.0,
                                use_diversity=False)
        alpha = v1 / (v1 + v2) if v1 + v2 > 0 else 0.5
        combined = alpha * pi1[0] + (1 - alpha) * pi2[0]
        y = out.target_of(0)
        assert y == 100 + int(np.argmax(combined))
        assert out.confidence[(0, y)] == pytest.approx(float(np.max(combined)), abs=1e-12)

    # anchor: alpha = 0.6, pi 0.8/0.5 -> combined 0.68
    view1 = SimilarityView([0], [100, 101], np.array([[0.8, 0.1]]))
    view2 = SimilarityView([0], [100, 101], np.array([[0.5, 0.2]]))
    out = resolve_conflicts(find_conflicts(AlignmentSet([(0, 100)]), AlignmentSet([(0, 101)])),
                            AlignmentSet([(0, 100)]), AlignmentSet([(0, 101)]),
                            view1, view2, 0.6, 0.4, top_n=5, sim_threshold=-2.0,
                            use_diversity=False)
    assert out.confidence[(0, 100)] == pytest.approx(0.68, abs=1e-12)


def test_acceptance_3_ensemble_oracles():
    rng = np.random.default_rng(14)
    for _ in range(1000):
        k = int(rng.integers(1, 5))
        scores = rng.random(k)
        weights = ensemble_weights(list(scores))
        naive = scores / scores.sum()
        assert weights.weights == pytest.approx(list(naive), abs=1e-12)

    for _ in range(100):
        k = int(rng.integers(1, 4))
        mats = [rng.uniform(-1, 1, (4, 5)) for _ in range(k)]
        scores = list(rng.random(k) + 0.01)
        views = [SimilarityView(list(range(4)), [100 + j for j in range(5)], m)
                 for m in mats]
        w = ensemble_weights(scores)
        out = ensemble_similarity(views, w)
        for i in range(4):
            for j in range(5):
                naive = sum(wk * m[i, j] for wk, m in zip(w.weights, mats))
                assert out.values[i, j] == pytest.approx(naive, abs=1e-12)

    assert ensemble_weights([0.6, 0.2]).weights == pytest.approx([0.75, 0.25], abs=1e-12)
    assert ensemble_weights([0.0, 0.0]).weights == pytest.approx([0.5, 0.5], abs=1e-12)


# =========================================================================
# criterion 4: gradient checks for all three aligner objectives
# =========================================================================

@pytest.mark.parametrize("kind", ["translational", "neighborhood", "path_skip"])
def test_acceptance_4_gradients(toy_kg_pair, kind):
    from cyclealign.aligners import make_aligner
    kg1, kg2 = toy_kg_pair
    config = AlignerConfig(kind, dim=4, negatives_per_positive=2,
                           base_epochs=10, semi_epochs=2, rng_seed=31)
    aligner = make_aligner(config, kg1, kg2)
    batch = frozen_batch(aligner, toy_pairs(kg1, kg2))
    check_gradients(aligner, batch)


# =========================================================================
# criteria 5-8: trend reproduction on the shared noisy benchmark
# =========================================================================

BENCH_SEEDS = (1, 2, 3)
BENCH_VERSION = 1   # bump to invalidate the cached benchmark


def _benchmark_aligners(seed):
    return [
        AlignerConfig("translational", dim=32, learning_rate=0.05, base_epochs=250,
                      semi_epochs=15, negatives_per_positive=3, rng_seed=seed * 100),
        AlignerConfig("neighborhood", dim=32, learning_rate=0.05, base_epochs=120,
                      semi_epochs=15, negatives_per_positive=3, rng_seed=seed * 100 + 1),
        AlignerConfig("path_skip", dim=32, learning_rate=0.05, base_epochs=200,
                      semi_epochs=15, negatives_per_positive=3, rng_seed=seed * 100 + 2),
    ]


def _benchmark_run(strategy, seed, ratio=0.1, top_n=3, sim_threshold=0.85, **cyc):
    kg1, kg2, gold = generate_synthetic_pair(
        SynthSpec(1000, 8, 5.0, structure_noise=0.25, rng_seed=seed))
    splits = split_alignment(gold, ratio, 0.1, rng_seed=seed + 50)
    config = CycleConfig(_benchmark_aligners(seed), max_iterations=5,
                         min_new_pairs=10, top_n=top_n,
                         sim_threshold=sim_threshold, **cyc)
    start = time.time()
    if strategy == "cycle":
        reports, states = run_cycle_teaching(kg1, kg2, splits, config, gold=gold)
    else:
        reports, states = run_baseline(strategy, kg1, kg2, splits, config, gold=gold)
    props = [e["proposal_quality"]["precision"] for r in reports for e in r.per_aligner
             if e["proposed"] > 0]
    ress = [e["resolved_quality"]["precision"] for r in reports for e in r.per_aligner
            if e["resolved"] > 0]
    recs = [e["resolved_quality"]["recall"] for r in reports for e in r.per_aligner
            if e["resolved"] > 0]
    return {
        "sup": [e["valid_hits1"] for e in reports[0].per_aligner],
        "final_ens": reports[-1].ensemble_valid_hits1,
        "final_per_aligner": [st.valid_score for st in states],
        "prop_prec": sum(props) / len(props) if props else 0.0,
        "res_prec": sum(ress) / len(ress) if ress else 0.0,
        "res_recall": sum(recs) / len(recs) if recs else 0.0,
        "seconds": time.time() - start,
    }


@pytest.fixture(scope="session")
def benchmark(request):
    key = f"cyclealign/benchmark-v{BENCH_VERSION}"
    cached = request.config.cache.get(key, None)
    if cached is not None:
        return cached
    results = {}
    for seed in BENCH_SEEDS:
        for strategy in ("cycle", "self_training", "majority_vote", "union",
                         "intersection"):
            results[f"{strategy}/{seed}/0.1"] = _benchmark_run(strategy, seed)
        results[f"cycle_nodiv/{seed}/0.1"] = _benchmark_run(
            "cycle", seed, use_diversity=False)
        # conflict resolution is compared where conflicts are frequent: the
        # tight selection above produces too few conflicts to measure anything
        results[f"cycle_cr/{seed}/0.1"] = _benchmark_run(
            "cycle", seed, top_n=5, sim_threshold=0.75)
        results[f"cycle_nocr/{seed}/0.1"] = _benchmark_run(
            "cycle", seed, top_n=5, sim_threshold=0.75,
            use_conflict_resolution=False)
        for ratio in (0.15, 0.2):
            results[f"cycle/{seed}/{ratio}"] = _benchmark_run("cycle", seed, ratio=ratio)
            results[f"self_training/{seed}/{ratio}"] = _benchmark_run(
                "self_training", seed, ratio=ratio)
    request.config.cache.set(key, results)
    return results


def seed_mean(benchmark, strategy, ratio=0.1, field="final_ens"):
    vals = [benchmark[f"{strategy}/{seed}/{ratio}"][field] for seed in BENCH_SEEDS]
    return float(np.mean(np.asarray(vals), axis=0)) if np.ndim(vals[0]) == 0 \
        else np.mean(np.asarray(vals), axis=0)


def test_acceptance_5_strategy_ordering_and_semi_supervised_gain(benchmark):
    cycle = seed_mean(benchmark, "cycle")
    for baseline in ("majority_vote", "union", "intersection"):
        assert cycle >= seed_mean(benchmark, baseline) - 0.01, baseline
    sup_best_mean = float(np.mean([np.max(benchmark[f"cycle/{seed}/0.1"]["sup"])
                                   for seed in BENCH_SEEDS]))
    for strategy in ("cycle", "self_training", "majority_vote", "union",
                     "intersection"):
        assert seed_mean(benchmark, strategy) >= sup_best_mean + 0.02, strategy
    runtime = sum(benchmark[f"{s}/{seed}/0.1"]["seconds"]
                  for s in ("cycle", "self_training", "majority_vote", "union",
                            "intersection")
                  for seed in BENCH_SEEDS)
    assert runtime < 600.0


def test_acceptance_6_conflict_resolution_raises_precision(benchmark):
    prec_with = seed_mean(benchmark, "cycle_cr", field="res_prec")
    prec_without = seed_mean(benchmark, "cycle_nocr", field="res_prec")
    assert prec_with >= prec_without + 0.01, (prec_with, prec_without)
    rec_with = seed_mean(benchmark, "cycle_cr", field="res_recall")
    rec_without = seed_mean(benchmark, "cycle_nocr", field="res_recall")
    assert rec_with >= rec_without - 0.05, (rec_with, rec_without)


def test_acceptance_7_diversity_selection_raises_precision(benchmark):
    """Diversity-aware preference is expected to beat raw-similarity preference
    on proposal precision.  On this uniform synthetic generator it does not:
    candidate generation dominates precision, and the competing-similarity
    average ranks unambiguous singleton candidates worst.  The test is kept
    red deliberately to document the gap rather than tuned into vacuity."""
    prec_with = seed_mean(benchmark, "cycle", field="prop_prec")
    prec_without = seed_mean(benchmark, "cycle_nodiv", field="prop_prec")
    assert prec_with >= prec_without + 0.01, (prec_with, prec_without)


def test_acceptance_8_robust_across_seed_ratios(benchmark):
    cycle_by_ratio = [seed_mean(benchmark, "cycle", ratio=r) for r in (0.1, 0.15, 0.2)]
    assert cycle_by_ratio[0] <= cycle_by_ratio[1] <= cycle_by_ratio[2]
    for ratio, cyc in zip((0.1, 0.15, 0.2), cycle_by_ratio):
        best_self = float(np.mean(
            [max(np.max(benchmark[f"self_training/{seed}/{ratio}"]["final_per_aligner"]),
                 benchmark[f"self_training/{seed}/{ratio}"]["final_ens"])
             for seed in BENCH_SEEDS]))
        assert cyc >= best_self, f"ratio {ratio}"


# =========================================================================
# criterion 9: byte-identical outputs for identical config and seed
# =========================================================================

def test_acceptance_9_runs_are_byte_identical(tmp_path):
    config = {
        "version": 1,
        "seed": 77,
        "strategy": "cycle_teaching",
        "dataset": {"synth": {"n_entities": 150, "n_relations": 5,
                              "avg_degree": 4.0, "structure_noise": 0.25},
                    "train_ratio": 0.2, "valid_ratio": 0.2},
        "aligners": [
            {"model_kind": "translational", "dim": 16, "base_epochs": 50,
             "semi_epochs": 5, "negatives_per_positive": 2},
            {"model_kind": "neighborhood", "dim": 16, "base_epochs": 50,
             "semi_epochs": 5, "negatives_per_positive": 2},
            {"model_kind": "path_skip", "dim": 16, "base_epochs": 50,
             "semi_epochs": 5, "negatives_per_positive": 2},
        ],
        "cycle": {"max_iterations": 2, "min_new_pairs": 1, "top_n": 5,
                  "sim_threshold": 0.5},
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    blobs = []
    for name in ("first", "second"):
        out = tmp_path / name
        assert main(["run", "--config", str(path), "--out", str(out)]) == EXIT_OK
        blobs.append((out / "reports.jsonl").read_bytes())
        assert blobs[-1]
    assert blobs[0] == blobs[1]
