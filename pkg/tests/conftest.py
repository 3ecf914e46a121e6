import numpy as np
import pytest

from cyclealign.kg import Kg


@pytest.fixture
def toy_kg_pair():
    """Five-entity source graph and an exact renamed copy."""
    src = [("a0", "r0", "a1"), ("a1", "r1", "a2"), ("a2", "r0", "a3"),
           ("a3", "r1", "a4"), ("a4", "r0", "a0"), ("a0", "r1", "a2"),
           ("a1", "r0", "a3")]
    tgt = [(h.replace("a", "b"), r.replace("r", "s"), t.replace("a", "b"))
           for h, r, t in src]
    kg1 = Kg(src)
    kg2 = Kg(tgt, id_offset=kg1.num_entities, rel_offset=kg1.num_relations)
    return kg1, kg2


def toy_pairs(kg1, kg2, count=3):
    from cyclealign.alignment import AlignmentSet
    out = AlignmentSet()
    for i in range(count):
        out.add(kg1.entity_id(f"a{i}"), kg2.entity_id(f"b{i}"), provenance="seed")
    return out
