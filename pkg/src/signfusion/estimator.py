"""A scikit-learn style estimator wrapping the full translation pipeline.

``fit`` consumes pose sequences and reference sentences, trains the
two-stream model end to end, and ``predict`` beam-decodes new sequences to
text. The constructor-arg / ``get_params`` / ``set_params`` contract matches
what scikit-learn utilities such as ``clone`` expect, without requiring
scikit-learn itself.
"""

from __future__ import annotations

import dataclasses
import inspect

from .checkpoint import load_checkpoint, restore_model, save_checkpoint
from .config import ModelConfig
from .decoding import beam_search
from .model import Sample
from .tokenizer import train_subword
from .training import TrainState, evaluate_bleu, train
from .validation import check_pose_corpus, check_sentences


class SignLanguageTranslator:
    """Gloss-free pose-sequence-to-sentence translator.

    Parameters mirror :class:`ModelConfig`; see its docstring for the
    defaults. Fitted attributes (``model_``, ``vocab_``, ``train_state_``)
    follow the trailing-underscore convention.
    """

    def __init__(self, *, batch_size=32, epochs=250, encoder_layers=6,
                 decoder_layers=3, heads=4, learning_rate=1e-3, ffn_dim=1024,
                 embed_dim=256, scheduler="cosine", stgcn_layers=3,
                 lstm_layers=1, fusion="summation", label_smoothing=0.1,
                 beam_size=5, validate_every=2, seed=0, vocab_size=1000,
                 feature_dim=64, clip_window=16, clip_stride=8, dropout=0.1,
                 max_decode_len=64, max_grad_norm=0.0,
                 keypoint_positions=False, smoothing_literal_form=False,
                 beam_length_norm=True):
        args = locals()
        for name in self._parameter_names():
            setattr(self, name, args[name])

    @classmethod
    def _parameter_names(cls) -> list:
        signature = inspect.signature(cls.__init__)
        return [n for n in signature.parameters if n != "self"]

    # scikit-learn parameter protocol ---------------------------------------

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._parameter_names()}

    def set_params(self, **params) -> "SignLanguageTranslator":
        valid = set(self._parameter_names())
        for key, value in params.items():
            if key not in valid:
                raise ValueError(
                    f"invalid parameter {key!r} for {type(self).__name__}"
                )
            setattr(self, key, value)
        return self

    def _config(self) -> ModelConfig:
        fields = {f.name for f in dataclasses.fields(ModelConfig)}
        return ModelConfig(
            **{k: v for k, v in self.get_params().items() if k in fields}
        ).validate()

    # Estimator surface -------------------------------------------------------

    def fit(self, X, y, features=None) -> "SignLanguageTranslator":
        """Train on pose sequences ``X`` and reference sentences ``y``.

        ``features`` optionally supplies per-sample clip-feature arrays;
        samples without one get the deterministic synthetic features.
        """
        sequences = check_pose_corpus(X)
        sentences = check_sentences(y, len(sequences))
        feature_list = list(features) if features is not None else \
            [None] * len(sequences)
        if len(feature_list) != len(sequences):
            raise ValueError(
                f"features has {len(feature_list)} entries for "
                f"{len(sequences)} sequences"
            )
        config = self._config()
        samples = [
            Sample(sample_id=str(i), keypoints=kp, text=text, features=feat)
            for i, (kp, text, feat)
            in enumerate(zip(sequences, sentences, feature_list))
        ]
        vocab = train_subword(sentences, config.vocab_size)
        model, state, optimizer = train(config, samples, vocab)
        self.model_ = model
        self.vocab_ = vocab
        self.config_ = config
        self.train_state_ = state
        self.optimizer_ = optimizer
        return self

    def _require_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError(
                f"{type(self).__name__} is not fitted; call fit() or load()"
            )

    def predict(self, X, features=None) -> list:
        """Beam-decode each pose sequence to a sentence."""
        self._require_fitted()
        sequences = check_pose_corpus(X)
        feature_list = list(features) if features is not None else \
            [None] * len(sequences)
        out = []
        for i, kp in enumerate(sequences):
            sample = Sample(sample_id=str(i), keypoints=kp, text="",
                            features=feature_list[i])
            result = beam_search(
                self.model_.step_fn(sample), vocab_size=len(self.vocab_),
                beam_size=self.config_.beam_size,
                max_len=self.config_.max_decode_len,
                length_norm=self.config_.beam_length_norm,
            )
            out.append(self.vocab_.decode(result.tokens))
        return out

    def score(self, X, y) -> float:
        """Corpus BLEU-4 (0-100) of greedy decodes against references."""
        self._require_fitted()
        sequences = check_pose_corpus(X)
        sentences = check_sentences(y, len(sequences))
        samples = [
            Sample(sample_id=str(i), keypoints=kp, text=text)
            for i, (kp, text) in enumerate(zip(sequences, sentences))
        ]
        return evaluate_bleu(self.model_, samples, self.vocab_)

    # Persistence --------------------------------------------------------------

    def save(self, path) -> None:
        self._require_fitted()
        save_checkpoint(path, self.model_, self.vocab_,
                        self.train_state_ or TrainState(), self.optimizer_)

    @classmethod
    def load(cls, path) -> "SignLanguageTranslator":
        ckpt = load_checkpoint(path)
        model, vocab, state, optimizer = restore_model(ckpt)
        est = cls()
        config = ckpt.config
        est.set_params(**{
            name: getattr(config, name) for name in est._parameter_names()
        })
        est.model_ = model
        est.vocab_ = vocab
        est.config_ = config
        est.train_state_ = state
        est.optimizer_ = optimizer
        return est
