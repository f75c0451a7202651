"""Sub-word tokenization, target-side embedding, and word blacklists.

The vocabulary is learned by greedy pair merging over sentence character
streams in which whitespace is rewritten to a visible separator. Encoding
matches the longest known token first, so any sentence over the training
alphabet round-trips exactly.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Parameter, Tensor, add, take_rows
from .attention import positional_encoding_matrix

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>")
UNK_MARKER = "⁇"  # double question mark stands in for unknown characters
WORD_SEP = "▁"  # visible space used inside the token inventory
MERGE_SENTINEL = "#MERGES"


def _to_stream(sentence: str) -> str:
    return "".join(WORD_SEP if ch.isspace() else ch for ch in sentence)


def _from_stream(stream: str) -> str:
    return stream.replace(WORD_SEP, " ")


@dataclass
class Vocabulary:
    """Token inventory with fixed special ids and learned merges."""

    id_to_token: list
    merges: list = field(default_factory=list)

    def __post_init__(self):
        if tuple(self.id_to_token[:4]) != SPECIAL_TOKENS:
            raise ValueError("vocabulary must start with the special tokens")
        self.token_to_id = {tok: i for i, tok in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("vocabulary contains duplicate tokens")
        self._plain = {
            tok for tok in self.id_to_token[4:]
        }
        self._max_len = max((len(t) for t in self._plain), default=1)

    def __len__(self) -> int:
        return len(self.id_to_token)

    def encode(self, sentence: str) -> list:
        """Longest-match tokenization wrapped in <bos> ... <eos>."""
        stream = _to_stream(sentence)
        ids = [BOS]
        pos = 0
        while pos < len(stream):
            length = min(self._max_len, len(stream) - pos)
            while length > 0 and stream[pos : pos + length] not in self._plain:
                length -= 1
            if length == 0:
                ids.append(UNK)
                pos += 1
            else:
                ids.append(self.token_to_id[stream[pos : pos + length]])
                pos += length
        ids.append(EOS)
        return ids

    def decode(self, ids) -> str:
        pieces = []
        for i in ids:
            if i in (PAD, BOS, EOS):
                continue
            if i == UNK:
                pieces.append(UNK_MARKER)
            elif 0 <= i < len(self.id_to_token):
                pieces.append(self.id_to_token[i])
            else:
                raise IndexError(f"token id {i} outside vocabulary of {len(self)}")
        return _from_stream("".join(pieces))


def train_subword(corpus, vocab_size: int) -> Vocabulary:
    """Learn a vocabulary by merging the most frequent adjacent pair.

    Merging stops at ``vocab_size`` entries or when no pair occurs twice.
    Ties break toward the lexicographically smallest pair so builds are
    deterministic.
    """
    sentences = [s for s in corpus]
    if not sentences:
        raise ValueError("cannot train a vocabulary on an empty corpus")
    streams = [[ch for ch in _to_stream(s)] for s in sentences]
    alphabet = sorted({ch for stream in streams for ch in stream})
    floor = len(SPECIAL_TOKENS) + len(alphabet)
    if vocab_size < floor:
        raise ValueError(
            f"vocab_size {vocab_size} cannot hold {len(alphabet)} characters "
            f"plus {len(SPECIAL_TOKENS)} specials"
        )
    tokens = list(SPECIAL_TOKENS) + alphabet
    merges = []
    while len(tokens) < vocab_size:
        pairs = Counter()
        for stream in streams:
            for a, b in zip(stream, stream[1:]):
                pairs[(a, b)] += 1
        if not pairs:
            break
        best, count = min(
            pairs.items(), key=lambda item: (-item[1], item[0])
        )
        if count < 2:
            break
        merged = best[0] + best[1]
        merges.append(best)
        tokens.append(merged)
        for stream in streams:
            out = []
            k = 0
            while k < len(stream):
                if k + 1 < len(stream) and (stream[k], stream[k + 1]) == best:
                    out.append(merged)
                    k += 2
                else:
                    out.append(stream[k])
                    k += 1
            stream[:] = out
    return Vocabulary(id_to_token=tokens, merges=merges)


def save_vocabulary(path, vocab: Vocabulary) -> None:
    lines = [f"{tok}\t{i}" for i, tok in enumerate(vocab.id_to_token)]
    lines.append(MERGE_SENTINEL)
    lines.extend(f"{a}\t{b}" for a, b in vocab.merges)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_vocabulary(path) -> Vocabulary:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_vocabulary(text, source=str(path))


def parse_vocabulary(text: str, source: str = "<string>") -> Vocabulary:
    tokens = []
    merges = []
    in_merges = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line:
            continue
        if line == MERGE_SENTINEL:
            in_merges = True
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(
                f"{source}:{lineno}: expected two tab-separated fields"
            )
        if in_merges:
            merges.append((parts[0], parts[1]))
        else:
            tok, raw_id = parts
            if int(raw_id) != len(tokens):
                raise ValueError(
                    f"{source}:{lineno}: token ids must be dense and ordered"
                )
            tokens.append(tok)
    return Vocabulary(id_to_token=tokens, merges=merges)


def serialize_vocabulary(vocab: Vocabulary) -> str:
    lines = [f"{tok}\t{i}" for i, tok in enumerate(vocab.id_to_token)]
    lines.append(MERGE_SENTINEL)
    lines.extend(f"{a}\t{b}" for a, b in vocab.merges)
    return "\n".join(lines) + "\n"


def embed_target(table: Parameter, ids, d_model: int | None = None) -> Tensor:
    """Token embedding lookup plus the sinusoidal position codes."""
    ids = list(ids)
    for i in ids:
        if not 0 <= i < table.shape[0]:
            raise IndexError(
                f"token id {i} out of range for embedding table of "
                f"{table.shape[0]} rows"
            )
    width = table.shape[1] if d_model is None else d_model
    looked_up = take_rows(table, ids)
    pe = positional_encoding_matrix(len(ids), width)
    return add(looked_up, Tensor(pe))


@dataclass(frozen=True)
class Blacklist:
    """The most frequent surface words of a corpus, frequency-descending."""

    words: tuple
    size: int
    source: str = ""
    frequencies: tuple = ()

    def word_set(self):
        return frozenset(self.words)


def build_blacklist(corpus, top_k: int, source: str = "") -> Blacklist:
    """Top-K whitespace words by count; ties break lexicographically.

    Latin-script words are lowercased (case folding is a no-op for scripts
    without case). Asking for more words than exist returns them all.
    """
    if top_k < 1:
        raise ValueError(f"top_k must be at least 1, got {top_k}")
    counts = Counter()
    for sentence in corpus:
        for word in sentence.split():
            counts[word.lower()] += 1
    ordered = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    chosen = tuple(word for word, _ in ordered[:top_k])
    return Blacklist(
        words=chosen, size=top_k, source=source, frequencies=tuple(ordered)
    )


def save_blacklist(path, blacklist: Blacklist) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(blacklist.words) + ("\n" if blacklist.words else ""))


def load_blacklist(path) -> Blacklist:
    with open(path, encoding="utf-8") as fh:
        words = [line.strip() for line in fh if line.strip()]
    return Blacklist(words=tuple(words), size=len(words), source=str(path))
