"""Autoregressive decoding: greedy, beam search, and optional sampling.

A decode works against a step function mapping a prefix of token ids
(starting at <bos>) to the log-probability vector of the next token, so the
same search runs on the real model and on toy models in tests.
"""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

from .tokenizer import BOS, EOS


class DecodeResult(NamedTuple):
    tokens: list  # emitted ids, excluding <bos>, excluding the final <eos>
    score: float  # length-normalized (or raw, per flag) log-probability
    finished: bool


def _normalized(raw: float, length: int, length_norm: bool) -> float:
    if not length_norm:
        return raw
    return raw / max(length, 1)


def greedy_decode(step_fn: Callable, max_len: int = 64, bos: int = BOS,
                  eos: int = EOS, length_norm: bool = True) -> DecodeResult:
    """Argmax chain from <bos> until <eos> or the length bound."""
    if max_len < 1:
        raise ValueError(f"max_len must be at least 1, got {max_len}")
    prefix = [bos]
    raw = 0.0
    emitted = 0
    for _ in range(max_len):
        log_probs = step_fn(prefix)
        token = int(np.argmax(log_probs))
        raw += float(log_probs[token])
        emitted += 1
        if token == eos:
            return DecodeResult(prefix[1:], _normalized(raw, emitted, length_norm),
                                True)
        prefix.append(token)
    return DecodeResult(prefix[1:], _normalized(raw, emitted, length_norm), False)


def beam_search(step_fn: Callable, vocab_size: int, beam_size: int = 5,
                max_len: int = 64, bos: int = BOS, eos: int = EOS,
                length_norm: bool = True) -> DecodeResult:
    """Width-limited best-first search with length-normalized selection.

    Per step every live hypothesis expands over the whole vocabulary;
    candidates ranked within the beam that end in <eos> retire to the
    finished pool and the best remaining candidates stay live. Once the
    finished pool is as wide as the beam the search stops as soon as no
    live hypothesis can still beat the best finished score; the answer is
    the best finished hypothesis (or the best unfinished one if nothing
    finished within the length bound). A width-one beam is exactly the
    greedy argmax chain.
    """
    if max_len < 1:
        raise ValueError(f"max_len must be at least 1, got {max_len}")
    if beam_size < 1:
        raise ValueError(f"beam_size must be at least 1, got {beam_size}")
    if beam_size == 1:
        return greedy_decode(step_fn, max_len=max_len, bos=bos, eos=eos,
                             length_norm=length_norm)

    live: list[tuple[list, float]] = [([bos], 0.0)]
    finished: list[tuple[float, list]] = []
    depth = 0
    for depth in range(1, max_len + 1):
        candidates: list[tuple[float, list]] = []
        for prefix, raw in live:
            log_probs = step_fn(prefix)
            for token in range(vocab_size):
                candidates.append((raw + float(log_probs[token]), prefix + [token]))
        # Deterministic rank: raw score descending, then token order.
        candidates.sort(key=lambda c: (-c[0], c[1]))
        live = []
        for rank, (raw, seq) in enumerate(candidates):
            if rank >= beam_size and len(live) >= beam_size:
                break
            if seq[-1] == eos:
                # Retirement is gated on beam rank; weaker endings keep
                # competing through their live siblings instead.
                if rank < beam_size:
                    finished.append((_normalized(raw, depth, length_norm),
                                     seq[1:-1]))
            elif len(live) < beam_size:
                live.append((seq, raw))
        if not live:
            break
        if len(finished) >= beam_size:
            # Log-probabilities only accumulate downward, so the best score
            # a live hypothesis can still reach is its raw total spread over
            # the longest permissible sequence.
            best_finished = max(score for score, _ in finished)
            bound = max(raw for _, raw in live)
            if length_norm:
                bound = bound / max_len
            if bound <= best_finished:
                break

    pool = [(score, tokens, True) for score, tokens in finished]
    if depth == max_len:
        # Hypotheses still live at the length bound compete as unfinished.
        pool += [
            (_normalized(raw, len(seq) - 1, length_norm), seq[1:], False)
            for seq, raw in live
        ]
    if not pool:
        return DecodeResult([], float("-inf"), False)
    best = max(pool, key=lambda e: (e[0], e[2], [-t for t in e[1]]))
    return DecodeResult(list(best[1]), best[0], best[2])


def sample_decode(step_fn: Callable, vocab_size: int,
                  rng: np.random.Generator, max_len: int = 64, bos: int = BOS,
                  eos: int = EOS, temperature: float = 1.0) -> DecodeResult:
    """Draw tokens from the predicted distribution; a stochastic alternative."""
    if max_len < 1:
        raise ValueError(f"max_len must be at least 1, got {max_len}")
    prefix = [bos]
    raw = 0.0
    for step in range(max_len):
        log_probs = np.asarray(step_fn(prefix), dtype=np.float64)
        if temperature != 1.0:
            log_probs = log_probs / temperature
            log_probs -= np.log(np.exp(log_probs - log_probs.max()).sum()) \
                + log_probs.max()
        probs = np.exp(log_probs - log_probs.max())
        probs /= probs.sum()
        token = int(rng.choice(vocab_size, p=probs))
        raw += float(log_probs[token])
        if token == eos:
            return DecodeResult(prefix[1:], raw / (step + 1), True)
        prefix.append(token)
    return DecodeResult(prefix[1:], raw / max_len, False)
