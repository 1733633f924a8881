"""Concept annotation engine: dictionary NER+L with self-supervised
disambiguation, meta-annotation classifiers, and human-in-the-loop
training."""

from .embedding import ContextEmbedding, compute_context, cosine_sim_clamped
from .engine import ModelBundle, annotation_record
from .errors import BuildError, ConceptLinkError, DimensionMismatchError, ModelFormatError
from .linker import EntityMention, LinkerConfig, detect_candidates, link, prune_overlaps
from .store import (
    ConceptDatabase,
    ConceptName,
    ConceptRecord,
    Vocabulary,
    attach_vectors,
    build_cdb,
    build_vcb,
    load_model,
    save_model,
)
from .textpipe import Pipeline, Token, TokenizedDocument, spell_correct, tokenize
from .trainer import (
    NegativeSampler,
    TrainStats,
    negative_update,
    positive_update,
    self_supervised_train,
    supervised_train,
)

__version__ = "0.1.0"
