"""Embedding-based aligners sharing one train/similarity/validate interface."""

from ..kg import Kg
from .base import (
    ALIGN_MARGIN,
    Adam,
    AlignerConfig,
    BaseAligner,
    DivergenceError,
    EmbeddingTable,
    MODEL_KINDS,
    alignment_loss,
    cosine,
    read_checkpoint_header,
    translational_energy,
    zero_cosine_count,
)
from .neighborhood import NeighborhoodAligner, aggregate_neighborhood
from .path_skip import PathSkipAligner, PathSkipParams, encode_path_skip
from .translational import TranslationalAligner

_MODEL_CLASSES = {
    "translational": TranslationalAligner,
    "neighborhood": NeighborhoodAligner,
    "path_skip": PathSkipAligner,
}


def make_aligner(config: AlignerConfig, kg1: Kg, kg2: Kg) -> BaseAligner:
    return _MODEL_CLASSES[config.model_kind](config, kg1, kg2)
