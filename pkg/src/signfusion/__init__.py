"""Gloss-free sign language translation with two fused encoder streams."""

from .autodiff import Parameter, ShapeError, Tensor, grad_check
from .bleu import BleuReport, bleu_n, brevity_penalty, clipped_precision, reduced_bleu
from .config import ModelConfig, load_config, parse_config
from .decoding import beam_search, greedy_decode, sample_decode
from .estimator import SignLanguageTranslator
from .model import Sample, TranslationModel
from .skeleton import SkeletonTopology, build_hops, hop_distance, laplacian, pose_topology
from .tokenizer import Blacklist, Vocabulary, build_blacklist, train_subword
from .training import TrainState, cosine_lr, lsce_loss, train

__version__ = "0.1.0"

__all__ = [
    "BleuReport",
    "Blacklist",
    "ModelConfig",
    "Parameter",
    "Sample",
    "ShapeError",
    "SignLanguageTranslator",
    "SkeletonTopology",
    "Tensor",
    "TrainState",
    "TranslationModel",
    "Vocabulary",
    "beam_search",
    "bleu_n",
    "brevity_penalty",
    "build_blacklist",
    "build_hops",
    "clipped_precision",
    "cosine_lr",
    "grad_check",
    "greedy_decode",
    "hop_distance",
    "laplacian",
    "load_config",
    "lsce_loss",
    "parse_config",
    "pose_topology",
    "reduced_bleu",
    "sample_decode",
    "train",
    "train_subword",
]
