"""Knowledge graph storage: interned ids, triples and adjacency indexes."""

from __future__ import annotations

import os
from typing import Iterable, Optional

from .alignment import AlignmentSet, SplitSet


class KgFormatError(ValueError):
    """Malformed triple or link file."""


class Kg:
    """One knowledge graph with densely interned entity and relation ids.

    Ids are assigned in first-appearance order starting at ``id_offset``
    (entities) and ``rel_offset`` (relations), so a source/target pair of
    graphs can live in disjoint id spaces.  Immutable after construction.
    """

    def __init__(self, triples: Iterable[tuple[str, str, str]],
                 id_offset: int = 0, rel_offset: int = 0,
                 extra_entities: Iterable[str] = ()):
        self.id_offset = id_offset
        self.rel_offset = rel_offset
        self._ent_id: dict[str, int] = {}
        self._rel_id: dict[str, int] = {}
        self.entity_names: list[str] = []
        self.relation_names: list[str] = []
        self.triples: list[tuple[int, int, int]] = []
        seen: set[tuple[int, int, int]] = set()
        for h, r, t in triples:
            triple = (self._intern_entity(h), self._intern_relation(r), self._intern_entity(t))
            if triple in seen:
                continue
            seen.add(triple)
            self.triples.append(triple)
        for name in extra_entities:
            self._intern_entity(name)
        self.out_adjacency: dict[int, list[tuple[int, int]]] = {e: [] for e in self.entities}
        self.in_adjacency: dict[int, list[tuple[int, int]]] = {e: [] for e in self.entities}
        for h, r, t in self.triples:
            self.out_adjacency[h].append((r, t))
            self.in_adjacency[t].append((r, h))

    def _intern_entity(self, name: str) -> int:
        eid = self._ent_id.get(name)
        if eid is None:
            eid = self.id_offset + len(self.entity_names)
            self._ent_id[name] = eid
            self.entity_names.append(name)
        return eid

    def _intern_relation(self, name: str) -> int:
        rid = self._rel_id.get(name)
        if rid is None:
            rid = self.rel_offset + len(self.relation_names)
            self._rel_id[name] = rid
            self.relation_names.append(name)
        return rid

    @property
    def num_entities(self) -> int:
        return len(self.entity_names)

    @property
    def num_relations(self) -> int:
        return len(self.relation_names)

    @property
    def entities(self) -> range:
        return range(self.id_offset, self.id_offset + len(self.entity_names))

    @property
    def relations(self) -> range:
        return range(self.rel_offset, self.rel_offset + len(self.relation_names))

    def entity_id(self, name: str) -> int:
        try:
            return self._ent_id[name]
        except KeyError:
            raise KeyError(f"unknown entity {name!r}") from None

    def entity_name(self, eid: int) -> str:
        return self.entity_names[eid - self.id_offset]

    def relation_name(self, rid: int) -> str:
        return self.relation_names[rid - self.rel_offset]

    def has_entity(self, name: str) -> bool:
        return name in self._ent_id

    def __repr__(self) -> str:
        return (f"Kg({self.num_entities} entities, {self.num_relations} relations, "
                f"{len(self.triples)} triples)")


def _read_tsv(path: str, n_fields: int) -> list[tuple[str, ...]]:
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != n_fields:
                raise KgFormatError(
                    f"{path}:{lineno}: expected {n_fields} tab-separated fields, "
                    f"got {len(fields)}")
            rows.append(tuple(fields))
    return rows


def load_kg(path: str, id_offset: int = 0, rel_offset: int = 0) -> Kg:
    """Load a triple file (``head<TAB>relation<TAB>tail`` per line).

    Duplicate lines are deduplicated; ids are interned in first-appearance
    order.  Raises :class:`KgFormatError` on malformed lines or empty files.
    """
    rows = _read_tsv(path, 3)
    if not rows:
        raise KgFormatError(f"{path}: empty triple file")
    return Kg(rows, id_offset=id_offset, rel_offset=rel_offset)


def load_links(path: str, kg1: Kg, kg2: Kg) -> AlignmentSet:
    """Load a link file (``source<TAB>target`` per line) against a KG pair."""
    out = AlignmentSet()
    for src, tgt in _read_tsv(path, 2):
        if not kg1.has_entity(src):
            raise KgFormatError(f"{path}: unknown source entity {src!r}")
        if not kg2.has_entity(tgt):
            raise KgFormatError(f"{path}: unknown target entity {tgt!r}")
        out.add(kg1.entity_id(src), kg2.entity_id(tgt))
    return out


def load_splits(directory: str, kg1: Kg, kg2: Kg,
                filenames: tuple[str, str, str] = ("train_links", "valid_links", "test_links"),
                ) -> SplitSet:
    """Load train/valid/test link files from a directory.

    The three files must contain mutually disjoint pairs and reference only
    entities present in the respective KGs.
    """
    paths = [os.path.join(directory, name) for name in filenames]
    for p in paths:
        if not os.path.exists(p):
            raise FileNotFoundError(p)
    train, valid, test = (load_links(p, kg1, kg2) for p in paths)
    return SplitSet(train, valid, test)


def write_kg(kg: Kg, path: str) -> None:
    """Export triples in the tab-separated external format."""
    with open(path, "w", encoding="utf-8") as f:
        for h, r, t in kg.triples:
            f.write(f"{kg.entity_name(h)}\t{kg.relation_name(r)}\t{kg.entity_name(t)}\n")


def write_links(pairs: Iterable[tuple[int, int]], kg1: Kg, kg2: Kg, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for x, y in pairs:
            f.write(f"{kg1.entity_name(x)}\t{kg2.entity_name(y)}\n")
