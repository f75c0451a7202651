import math

import numpy as np
import pytest

from signfusion.autodiff import Parameter, grad_check
from signfusion.config import ModelConfig
from signfusion.decoding import beam_search, greedy_decode, sample_decode
from signfusion.errors import TrainingDiverged
from signfusion.model import Sample, TranslationModel
from signfusion.tokenizer import BOS, EOS, train_subword
from signfusion.training import (
    AdamOptimizer,
    cosine_lr,
    evaluate_bleu,
    lsce_loss,
    train,
)


def cross_entropy_oracle(logits, target):
    z = logits - logits.max()
    return -(z[target] - math.log(np.exp(z).sum()))


def tiny_config(**overrides):
    base = dict(
        batch_size=4, epochs=10, encoder_layers=1, decoder_layers=1, heads=2,
        learning_rate=3e-3, ffn_dim=32, embed_dim=16, stgcn_layers=1,
        lstm_layers=1, label_smoothing=0.0, beam_size=3, validate_every=0,
        seed=11, vocab_size=64, feature_dim=8, clip_window=4, clip_stride=4,
        dropout=0.0, max_decode_len=24,
    )
    base.update(overrides)
    return ModelConfig(**base)


def tiny_dataset(count=4, frames=8, seed=0):
    rng = np.random.default_rng(seed)
    texts = ["der hund rennt schnell", "die katze schläft tief",
             "regen zieht nach norden", "die sonne scheint warm",
             "nebel liegt im tal", "wind weht am meer"][:count]
    samples = [
        Sample(sample_id=str(i),
               keypoints=0.5 * rng.standard_normal((frames, 33, 3)),
               text=texts[i])
        for i in range(count)
    ]
    return samples, texts


class TestLsce:
    def test_alpha_zero_is_cross_entropy(self):
        rng = np.random.default_rng(0)
        logits = rng.standard_normal((3, 5))
        targets = [1, 4, 0]
        got = float(lsce_loss(Parameter(logits, "l"), targets, 0.0).data)
        expected = np.mean([cross_entropy_oracle(logits[i], t)
                            for i, t in enumerate(targets)])
        assert got == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("alpha", [0.0, 0.1, 0.5, 0.9])
    def test_uniform_logits_give_log_v(self, alpha):
        logits = Parameter(np.zeros((2, 4)), "l")
        loss = float(lsce_loss(logits, [0, 3], alpha).data)
        assert loss == pytest.approx(math.log(4.0), abs=1e-12)

    def test_binary_uniform_case(self):
        logits = Parameter(np.zeros((1, 2)), "l")
        loss = float(lsce_loss(logits, [0], 0.0).data)
        assert loss == pytest.approx(math.log(2.0), abs=1e-12)
        assert loss == pytest.approx(0.693147, abs=1e-6)

    def test_alpha_one_rejected(self):
        with pytest.raises(ValueError):
            lsce_loss(Parameter(np.zeros((1, 3)), "l"), [0], 1.0)

    def test_pad_positions_excluded(self):
        rng = np.random.default_rng(1)
        logits = rng.standard_normal((3, 5))
        with_pad = float(
            lsce_loss(Parameter(logits, "l"), [1, 0, 2], 0.0, pad_id=0).data)
        only_active = np.mean([cross_entropy_oracle(logits[0], 1),
                               cross_entropy_oracle(logits[2], 2)])
        assert with_pad == pytest.approx(only_active, abs=1e-12)

    def test_all_pad_rejected(self):
        with pytest.raises(ValueError):
            lsce_loss(Parameter(np.zeros((2, 4)), "l"), [0, 0], 0.1, pad_id=0)

    def test_literal_form_swaps_weights(self):
        rng = np.random.default_rng(2)
        logits = rng.standard_normal((1, 4))
        alpha = 0.3
        standard = float(lsce_loss(Parameter(logits, "a"), [2], alpha).data)
        literal = float(lsce_loss(Parameter(logits, "b"), [2], alpha,
                                  literal_form=True).data)
        z = logits[0] - logits[0].max()
        log_probs = z - math.log(np.exp(z).sum())
        weights = np.full(4, alpha / 3)
        weights[2] = 1 - alpha
        assert standard == pytest.approx(-(weights * log_probs).sum(), abs=1e-12)
        weights_lit = np.full(4, (1 - alpha) / 3)
        weights_lit[2] = alpha
        assert literal == pytest.approx(-(weights_lit * log_probs).sum(),
                                        abs=1e-12)

    def test_nonnegative_and_gradient(self):
        logits = Parameter(np.random.default_rng(3).standard_normal((4, 6)), "l")
        loss = lsce_loss(logits, [1, 2, 3, 4], 0.2)
        assert float(loss.data) >= 0.0
        err = grad_check(lambda: lsce_loss(logits, [1, 2, 3, 4], 0.2), [logits])
        assert err <= 1e-4


class TestCosineSchedule:
    def test_start_is_base_rate(self):
        assert cosine_lr(0, 100, 1e-3) == pytest.approx(1e-3)

    def test_end_is_zero(self):
        assert cosine_lr(100, 100, 1e-3) == 0.0

    def test_midpoint_is_half(self):
        assert cosine_lr(50, 100, 1e-3) == pytest.approx(5e-4, abs=1e-15)

    def test_beyond_total_clamps(self):
        assert cosine_lr(150, 100, 1e-3) == 0.0

    def test_negative_step_rejected(self):
        with pytest.raises(ValueError):
            cosine_lr(-1, 10, 1e-3)


class TestAdam:
    def test_single_step_matches_hand_formula(self):
        p = Parameter(np.array([1.0, -2.0]), "p")
        p.grad[...] = np.array([0.5, -1.5])
        opt = AdamOptimizer([p], beta1=0.9, beta2=0.98, eps=1e-9)
        opt.step(lr=0.01, t=1)
        g = np.array([0.5, -1.5])
        m_hat = (0.1 * g) / (1 - 0.9)
        v_hat = (0.02 * g * g) / (1 - 0.98)
        expected = np.array([1.0, -2.0]) - 0.01 * m_hat / (np.sqrt(v_hat) + 1e-9)
        np.testing.assert_allclose(p.data, expected, atol=1e-12)

    def test_invalid_step_index_rejected(self):
        p = Parameter(np.zeros(2), "p")
        opt = AdamOptimizer([p])
        with pytest.raises(ValueError):
            opt.step(1e-3, 0)


def toy_step_fn(vocab_size, seed):
    """Markov toy model: next-token logits depend on the last token."""
    rng = np.random.default_rng(seed)
    table = rng.standard_normal((vocab_size, vocab_size)) * 1.5

    def step(prefix):
        logits = table[prefix[-1]]
        z = logits - logits.max()
        return z - math.log(np.exp(z).sum())

    return step


def enumerate_all_sequences(step_fn, vocab_size, max_len):
    """Exhaustive scoring oracle over all <=max_len-token decodes."""
    best = None
    stack = [([BOS], 0.0)]
    while stack:
        prefix, raw = stack.pop()
        log_probs = step_fn(prefix)
        for token in range(vocab_size):
            seq = prefix + [token]
            score_raw = raw + float(log_probs[token])
            emitted = len(seq) - 1
            if token == EOS:
                entry = (score_raw / emitted, True, seq[1:-1])
            elif emitted == max_len:
                entry = (score_raw / emitted, False, seq[1:])
            else:
                stack.append((seq, score_raw))
                continue
            key = (entry[0], entry[1], [-t for t in entry[2]])
            if best is None or key > best[0]:
                best = (key, entry)
    return best[1]


class TestBeamSearch:
    def test_beam_one_equals_greedy_on_many_models(self):
        for seed in range(25):
            step = toy_step_fn(4, seed)
            greedy = greedy_decode(step, max_len=6)
            beam = beam_search(step, vocab_size=4, beam_size=1, max_len=6)
            assert beam.tokens == greedy.tokens
            assert beam.score == pytest.approx(greedy.score, abs=1e-12)

    def test_toy_scale_matches_exhaustive_enumeration(self):
        hits = 0
        for seed in range(50):
            step = toy_step_fn(3, 100 + seed)
            beam = beam_search(step, vocab_size=3, beam_size=5, max_len=3)
            score, finished, tokens = enumerate_all_sequences(step, 3, 3)
            assert beam.tokens == tokens
            assert beam.score == pytest.approx(score, abs=1e-12)
            hits += 1
        assert hits == 50

    def test_beam_never_below_greedy(self):
        for seed in range(50):
            step = toy_step_fn(3, 300 + seed)
            greedy = greedy_decode(step, max_len=3)
            beam = beam_search(step, vocab_size=3, beam_size=5, max_len=3)
            assert beam.score >= greedy.score - 1e-12

    def test_unnormalized_flag(self):
        step = toy_step_fn(4, 9)
        raw = beam_search(step, vocab_size=4, beam_size=2, max_len=4,
                          length_norm=False)
        assert raw.score <= 0.0

    def test_bad_bounds_rejected(self):
        step = toy_step_fn(3, 0)
        with pytest.raises(ValueError):
            beam_search(step, vocab_size=3, beam_size=0, max_len=3)
        with pytest.raises(ValueError):
            beam_search(step, vocab_size=3, beam_size=2, max_len=0)
        with pytest.raises(ValueError):
            greedy_decode(step, max_len=0)

    def test_sampling_is_seeded_and_terminates(self):
        step = toy_step_fn(5, 4)
        a = sample_decode(step, 5, np.random.default_rng(3), max_len=8)
        b = sample_decode(step, 5, np.random.default_rng(3), max_len=8)
        assert a.tokens == b.tokens


class TestForwardPass:
    def test_log_probability_identity(self):
        config = tiny_config()
        samples, texts = tiny_dataset()
        vocab = train_subword(texts, config.vocab_size)
        model = TranslationModel(config, vocab_size=len(vocab))
        ids = vocab.encode(texts[0])
        log_probs = model.forward_log_probs(samples[0], ids[:-1]).data
        per_step = [log_probs[i, t] for i, t in enumerate(ids[1:])]
        product_of_probs = float(np.prod([math.exp(v) for v in per_step]))
        assert math.exp(sum(per_step)) == pytest.approx(product_of_probs,
                                                        rel=1e-12)

    def test_deterministic_forward(self):
        config = tiny_config()
        samples, texts = tiny_dataset()
        vocab = train_subword(texts, config.vocab_size)
        model = TranslationModel(config, vocab_size=len(vocab))
        ids = vocab.encode(texts[0])[:-1]
        a = model.forward_log_probs(samples[0], ids).data
        b = model.forward_log_probs(samples[0], ids).data
        assert np.array_equal(a, b)

    def test_missing_keypoints_rejected(self):
        config = tiny_config()
        vocab = train_subword(["a b"], config.vocab_size)
        model = TranslationModel(config, vocab_size=len(vocab))
        broken = Sample(sample_id="x", keypoints=None, text="a")
        with pytest.raises(ValueError):
            model.forward_log_probs(broken, [BOS])


class TestTraining:
    def test_overfits_tiny_corpus(self):
        config = tiny_config(epochs=150, learning_rate=1e-2)
        samples, texts = tiny_dataset()
        vocab = train_subword(texts, config.vocab_size)
        model, state, _ = train(config, samples, vocab)
        assert state.loss_history[-1] < 0.3
        decoded = []
        for sample in samples:
            result = greedy_decode(model.step_fn(sample),
                                   max_len=config.max_decode_len)
            decoded.append(vocab.decode(result.tokens))
        assert decoded == texts
        assert evaluate_bleu(model, samples, vocab) == pytest.approx(100.0)

    def test_same_seed_identical_loss_curve(self):
        config = tiny_config(epochs=4)
        samples_a, texts = tiny_dataset()
        samples_b, _ = tiny_dataset()
        vocab = train_subword(texts, config.vocab_size)
        _, state_a, _ = train(config, samples_a, vocab)
        _, state_b, _ = train(config, samples_b, vocab)
        assert state_a.loss_history == state_b.loss_history

    def test_seeded_parameters_bit_identical(self):
        config = tiny_config(epochs=3)
        samples, texts = tiny_dataset()
        vocab = train_subword(texts, config.vocab_size)
        model_a, _, _ = train(config, samples, vocab)
        model_b, _, _ = train(config, samples, vocab)
        for pa, pb in zip(model_a.store.parameters(),
                          model_b.store.parameters()):
            assert np.array_equal(pa.data, pb.data), pa.name

    def test_nan_loss_aborts_with_step(self):
        config = tiny_config(epochs=2)
        samples, texts = tiny_dataset()
        vocab = train_subword(texts, config.vocab_size)
        model = TranslationModel(config, vocab_size=len(vocab))
        model.store["text.embedding"].data[BOS, 0] = np.nan
        with pytest.raises(TrainingDiverged) as err:
            train(config, samples, vocab, model=model)
        assert err.value.step == 0

    def test_empty_dataset_rejected(self):
        config = tiny_config()
        vocab = train_subword(["a"], config.vocab_size)
        with pytest.raises(ValueError):
            train(config, [], vocab)

    def test_learning_rate_schedule_starts_at_base(self):
        config = tiny_config(epochs=1)
        samples, texts = tiny_dataset()
        vocab = train_subword(texts, config.vocab_size)
        _, state, _ = train(config, samples, vocab)
        assert state.learning_rate == pytest.approx(
            cosine_lr(0, 1, config.learning_rate))
