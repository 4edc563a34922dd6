"""Attention encoder-decoder parsers with three decoding regimes:
direct token decoding with copying, sketch-then-detail decoding, and
grammar-constrained action decoding.
"""

from lambdaehr.neural.config import TrainingConfig
from lambdaehr.neural.decode import DecodeResult, decode
from lambdaehr.neural.embeddings import EmbeddingTable, load_embeddings
from lambdaehr.neural.gradcheck import gradient_check
from lambdaehr.neural.model import Model
from lambdaehr.neural.train import TrainedModel, train
from lambdaehr.neural.vocab import Vocab, lf_text_tokens

__all__ = [
    "DecodeResult",
    "EmbeddingTable",
    "Model",
    "TrainedModel",
    "TrainingConfig",
    "Vocab",
    "decode",
    "gradient_check",
    "lf_text_tokens",
    "load_embeddings",
    "train",
]
