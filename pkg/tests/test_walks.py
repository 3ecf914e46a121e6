import pytest

from cyclealign.kg import Kg
from cyclealign.walks import random_walk_paths


def test_single_triple_walk():
    kg = Kg([("a", "r", "b")])
    paths = random_walk_paths(kg, 3, 1, bias=0.5, rng_seed=0)
    a, b = kg.entity_id("a"), kg.entity_id("b")
    assert [a, kg.triples[0][1], b] in paths


def test_isolated_entity_truncates_to_single_element():
    kg = Kg([("a", "r", "b")], extra_entities=["lonely"])
    paths = random_walk_paths(kg, 5, 1, bias=0.0, rng_seed=0)
    assert [kg.entity_id("lonely")] in paths


def test_chain_with_full_bias_prefers_unvisited():
    kg = Kg([("a", "r1", "b"), ("b", "r2", "c")])
    paths = random_walk_paths(kg, 5, 1, bias=1.0, rng_seed=0)
    a = kg.entity_id("a")
    start_a = [p for p in paths if p[0] == a]
    expected = [a, kg.triples[0][1], kg.entity_id("b"), kg.triples[1][1], kg.entity_id("c")]
    assert start_a == [expected]


def test_every_window_is_a_triple():
    triples = [("a", "r", "b"), ("b", "r", "c"), ("c", "s", "a"), ("a", "s", "c"),
               ("c", "r", "b")]
    kg = Kg(triples)
    paths = random_walk_paths(kg, 7, 3, bias=0.7, rng_seed=4)
    triple_set = set(kg.triples)
    for path in paths:
        assert len(path) % 2 == 1
        for i in range(0, len(path) - 2, 2):
            assert (path[i], path[i + 1], path[i + 2]) in triple_set


def test_deterministic_for_fixed_seed():
    kg = Kg([("a", "r", "b"), ("b", "r", "c"), ("c", "s", "a")])
    assert random_walk_paths(kg, 5, 2, 0.5, 42) == random_walk_paths(kg, 5, 2, 0.5, 42)


@pytest.mark.parametrize("length", [2, 4, 1])
def test_even_or_short_length_rejected(length):
    kg = Kg([("a", "r", "b")])
    with pytest.raises(ValueError):
        random_walk_paths(kg, length, 1, 0.5, 0)
