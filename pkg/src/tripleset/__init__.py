"""Joint entity and relation extraction as set prediction."""
from .assignment import Assignment, brute_force_assignment, hungarian, munkres_reference
from .data import Corpus, MatchingMode, Sentence, Triple, generate_synthetic, load_corpus
from .decode import ExtractedTriple, extract_triples
from .matching_loss import GoldTriple, GoldTripleSet, build_cost_matrix, set_loss
from .metrics import EvalReport, Scores, score
from .model import ModelConfig, SetPredictionModel, load_model, save_model

__version__ = "0.1.0"

__all__ = [
    "Assignment", "brute_force_assignment", "hungarian", "munkres_reference",
    "Corpus", "MatchingMode", "Sentence", "Triple", "generate_synthetic", "load_corpus",
    "ExtractedTriple", "extract_triples",
    "GoldTriple", "GoldTripleSet", "build_cost_matrix", "set_loss",
    "EvalReport", "Scores", "score",
    "ModelConfig", "SetPredictionModel", "load_model", "save_model",
]
