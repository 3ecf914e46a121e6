"""1:1 partial alignments between source and target entity ids."""

from __future__ import annotations

from typing import Iterable, Iterator, Optional

PROVENANCE_LABELS = ("seed", "proposed", "resolved")


class AlignmentError(ValueError):
    """Violation of the 1:1 matching constraint or alignment bookkeeping."""


class AlignmentSet:
    """A partial 1:1 matching between source and target entity ids.

    Each pair may carry a provenance label (``seed``, ``proposed`` or
    ``resolved``) and a confidence in [-1, 1].  Pairs without a label are
    treated as ground truth (e.g. a gold alignment).  Iteration order is
    insertion order, which keeps downstream runs deterministic.
    """

    def __init__(self, pairs: Iterable[tuple[int, int]] = ()):
        self._src_to_tgt: dict[int, int] = {}
        self._tgt_to_src: dict[int, int] = {}
        self.provenance: dict[tuple[int, int], str] = {}
        self.confidence: dict[tuple[int, int], float] = {}
        for x, y in pairs:
            self.add(x, y)

    def add(self, x: int, y: int, provenance: Optional[str] = None,
            confidence: Optional[float] = None) -> None:
        if x in self._src_to_tgt:
            if self._src_to_tgt[x] == y:
                return
            raise AlignmentError(f"source {x} already matched to {self._src_to_tgt[x]}")
        if y in self._tgt_to_src:
            raise AlignmentError(f"target {y} already matched to {self._tgt_to_src[y]}")
        if provenance is not None and provenance not in PROVENANCE_LABELS:
            raise AlignmentError(f"unknown provenance label {provenance!r}")
        self._src_to_tgt[x] = y
        self._tgt_to_src[y] = x
        if provenance is not None:
            self.provenance[(x, y)] = provenance
        if confidence is not None:
            self.confidence[(x, y)] = float(confidence)

    def remove(self, x: int, y: int) -> None:
        if self._src_to_tgt.get(x) != y:
            raise AlignmentError(f"pair ({x}, {y}) not present")
        del self._src_to_tgt[x]
        del self._tgt_to_src[y]
        self.provenance.pop((x, y), None)
        self.confidence.pop((x, y), None)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return [(x, y) for x, y in self._src_to_tgt.items()]

    def pair_set(self) -> set[tuple[int, int]]:
        return set(self._src_to_tgt.items())

    def target_of(self, x: int) -> Optional[int]:
        return self._src_to_tgt.get(x)

    def source_of(self, y: int) -> Optional[int]:
        return self._tgt_to_src.get(y)

    @property
    def sources(self) -> set[int]:
        return set(self._src_to_tgt)

    @property
    def targets(self) -> set[int]:
        return set(self._tgt_to_src)

    def copy(self) -> "AlignmentSet":
        out = AlignmentSet()
        for x, y in self._src_to_tgt.items():
            out.add(x, y, self.provenance.get((x, y)), self.confidence.get((x, y)))
        return out

    def __len__(self) -> int:
        return len(self._src_to_tgt)

    def __contains__(self, pair: tuple[int, int]) -> bool:
        x, y = pair
        return self._src_to_tgt.get(x) == y

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(self._src_to_tgt.items())

    def __repr__(self) -> str:
        return f"AlignmentSet({len(self)} pairs)"


class SplitSet:
    """Train / valid / test alignment splits with mutually disjoint pairs."""

    def __init__(self, train: AlignmentSet, valid: AlignmentSet, test: AlignmentSet):
        names = ("train", "valid", "test")
        sets = (train, valid, test)
        for i in range(3):
            for j in range(i + 1, 3):
                overlap = sets[i].pair_set() & sets[j].pair_set()
                if overlap:
                    raise AlignmentError(
                        f"splits {names[i]} and {names[j]} share pairs, e.g. {sorted(overlap)[0]}")
        self.train = train
        self.valid = valid
        self.test = test

    def __repr__(self) -> str:
        return (f"SplitSet(train={len(self.train)}, valid={len(self.valid)}, "
                f"test={len(self.test)})")
