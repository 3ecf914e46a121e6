"""Cycle-teaching semi-supervised entity alignment for knowledge graph pairs."""

from .alignment import AlignmentSet, SplitSet
from .kg import Kg, load_kg, load_links, load_splits
from .synth import SynthSpec, generate_synthetic_pair, split_alignment
from .walks import random_walk_paths

__version__ = "0.1.0"
