"""Corpus ingestion, vocabulary construction, tokenization, and batching.

A corpus file is UTF-8, one sentence per line. Sentences are lowercased,
stripped of the punctuation set ``. , ! ? ; : " ( )``, whitespace-split,
and kept only when their word count lies within [min_len, max_len]. The
train/test split is a seeded 90/10 shuffle so runs are reproducible.

Vocabulary files are one ``index<TAB>word`` per line, specials included.
"""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PUNCTUATION = '.,!?;:"()'

PAD, START, END, UNK = 0, 1, 2, 3
SPECIAL_TOKENS = ["<pad>", "<start>", "<end>", "<unk>"]


class CorpusError(ValueError):
    pass


def tokenize(line: str) -> list[str]:
    """Lowercase, replace punctuation with spaces, split on whitespace."""
    lowered = line.lower()
    for ch in PUNCTUATION:
        lowered = lowered.replace(ch, " ")
    return lowered.split()


@dataclass
class Corpus:
    sentences: list[list[str]]
    source_path: str
    min_len: int
    max_len: int
    train: list[list[str]] = field(default_factory=list)
    test: list[list[str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.sentences)


def load_corpus(path, min_len: int = 4, max_len: int = 30,
                split_seed: int = 1, test_fraction: float = 0.1) -> Corpus:
    """Read, filter by word-count bounds, and split 90/10 by seeded shuffle."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read corpus file {path}: {exc}") from exc

    sentences = []
    for line in text.splitlines():
        words = tokenize(line)
        if min_len <= len(words) <= max_len:
            sentences.append(words)
    if not sentences:
        raise CorpusError(
            f"no sentences within [{min_len}, {max_len}] words in {path}")

    order = np.random.default_rng(split_seed).permutation(len(sentences))
    n_test = int(round(len(sentences) * test_fraction))
    test_idx = set(order[:n_test].tolist())
    corpus = Corpus(sentences, str(path), min_len, max_len)
    corpus.train = [sentences[i] for i in range(len(sentences)) if i not in test_idx]
    corpus.test = [sentences[i] for i in sorted(test_idx)]
    return corpus


class Vocabulary:
    """word<->index maps with fixed specials PAD=0, START=1, END=2, UNK=3."""

    def __init__(self, words: list[str]):
        self.index_to_word = list(SPECIAL_TOKENS) + list(words)
        self.word_to_index = {w: i for i, w in enumerate(self.index_to_word)}
        if len(self.word_to_index) != len(self.index_to_word):
            raise ValueError("duplicate words in vocabulary")

    @property
    def size(self) -> int:
        return len(self.index_to_word)

    def encode(self, words: list[str]) -> list[int]:
        return [self.word_to_index.get(w, UNK) for w in words]

    def decode(self, ids, skip_special: bool = True) -> list[str]:
        out = []
        for i in ids:
            i = int(i)
            if skip_special and i < len(SPECIAL_TOKENS):
                continue
            out.append(self.index_to_word[i])
        return out

    def save(self, path) -> None:
        lines = [f"{i}\t{w}" for i, w in enumerate(self.index_to_word)]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        words = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            idx, word = line.split("\t", 1)
            words.append((int(idx), word))
        words.sort()
        ordered = [w for _, w in words]
        if ordered[: len(SPECIAL_TOKENS)] != SPECIAL_TOKENS:
            raise ValueError(f"vocabulary file {path} lacks the fixed specials")
        return cls(ordered[len(SPECIAL_TOKENS):])


def _sentences_of(corpus) -> list[list[str]]:
    if isinstance(corpus, Corpus):
        return corpus.train
    return list(corpus)


def build_vocab(corpus, min_freq: int = 1) -> Vocabulary:
    """Index words with frequency >= min_freq, most frequent first.

    Ties break alphabetically. Counting uses the training split when given
    a Corpus. A degenerate corpus yields a specials-only vocabulary.
    """
    counts = Counter(w for s in _sentences_of(corpus) for w in s)
    kept = sorted((w for w, c in counts.items() if c >= min_freq),
                  key=lambda w: (-counts[w], w))
    if not kept:
        warnings.warn("vocabulary degenerated to the 4 special tokens")
    return Vocabulary(kept)


def extend_vocab(vocab: Vocabulary, corpus, min_freq: int = 1) -> Vocabulary:
    """New vocabulary keeping every existing index, appending unseen words."""
    counts = Counter(w for s in _sentences_of(corpus) for w in s)
    existing = set(vocab.index_to_word)
    new_words = sorted((w for w, c in counts.items()
                        if c >= min_freq and w not in existing),
                       key=lambda w: (-counts[w], w))
    return Vocabulary(vocab.index_to_word[len(SPECIAL_TOKENS):] + new_words)


@dataclass
class TokenBatch:
    """Padded index rows: START, words..., END, then PAD to the batch L."""

    tokens: np.ndarray       # (B, L) int64
    pad_mask: np.ndarray     # (B, L) bool, True on non-PAD positions
    true_lengths: np.ndarray  # (B,) word counts, specials excluded

    @property
    def batch_size(self) -> int:
        return self.tokens.shape[0]

    @property
    def length(self) -> int:
        return self.tokens.shape[1]


def make_batch(sentences: list[list[str]], vocab: Vocabulary) -> TokenBatch:
    """Pack sentences into one TokenBatch padded to max length + 2."""
    if not sentences:
        raise ValueError("make_batch: empty sentence list")
    lengths = np.array([len(s) for s in sentences], dtype=np.int64)
    width = int(lengths.max()) + 2
    tokens = np.full((len(sentences), width), PAD, dtype=np.int64)
    for r, words in enumerate(sentences):
        ids = vocab.encode(words)
        tokens[r, 0] = START
        tokens[r, 1:1 + len(ids)] = ids
        tokens[r, 1 + len(ids)] = END
    return TokenBatch(tokens, tokens != PAD, lengths)


def make_batches(corpus, vocab: Vocabulary, batch_size: int, shuffle_seed: int):
    """Yield TokenBatches covering every sentence exactly once per epoch."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    sentences = _sentences_of(corpus)
    order = np.random.default_rng(shuffle_seed).permutation(len(sentences))
    for lo in range(0, len(sentences), batch_size):
        chunk = [sentences[i] for i in order[lo:lo + batch_size]]
        yield make_batch(chunk, vocab)
