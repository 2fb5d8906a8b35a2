"""Character and word tokenization of raw HTML, vocabulary construction, and
encoding into fixed-length index sequences.

No lowercasing, entity decoding or tag stripping happens here: the model sees
the page text exactly as decoded. Word tokenization splits on Unicode
whitespace and emits every punctuation character (anything that is neither
alphanumeric nor underscore) as its own single-character token, so markup like
``<a href=...>`` decomposes into tags, attribute names and separators.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

PAD_TOKEN = "<PAD>"
OOV_TOKEN = "<OOV>"
PAD_INDEX = 0
OOV_INDEX = 1

DEFAULT_CHAR_MAXLEN = 180
DEFAULT_WORD_MAXLEN = 2000


def tokenize_chars(html: str) -> list[str]:
    """Each Unicode scalar value of the text becomes one token, in order."""
    return list(html)


def _is_punct(ch: str) -> bool:
    return not (ch.isalnum() or ch == "_")


def tokenize_words(html: str) -> list[str]:
    """Split on Unicode whitespace, then break each chunk into punctuation
    tokens (one per character) and maximal alphanumeric/underscore runs.

    Whitespace itself never appears as a token.
    """
    tokens: list[str] = []
    for chunk in html.split():
        run_start = None
        for i, ch in enumerate(chunk):
            if _is_punct(ch):
                if run_start is not None:
                    tokens.append(chunk[run_start:i])
                    run_start = None
                tokens.append(ch)
            elif run_start is None:
                run_start = i
        if run_start is not None:
            tokens.append(chunk[run_start:])
    return tokens


@dataclass
class Vocabulary:
    """Bidirectional token<->index map with reserved PAD (0) and OOV (1) slots.

    ``token_to_index`` holds corpus tokens only (indices >= 2);
    ``index_to_token`` additionally carries the two sentinel entries.
    """

    kind: str  # "character" | "word"
    index_to_token: list[str]
    token_to_index: dict[str, int] = field(default_factory=dict)
    pad_index: int = PAD_INDEX
    oov_index: int = OOV_INDEX

    def __post_init__(self):
        if self.kind not in ("character", "word"):
            raise ValueError(f"unknown vocabulary kind {self.kind!r}")
        if not self.token_to_index:
            self.token_to_index = {
                tok: i for i, tok in enumerate(self.index_to_token) if i >= 2
            }

    @property
    def size(self) -> int:
        return len(self.index_to_token)

    def encode_token(self, token: str) -> int:
        return self.token_to_index.get(token, self.oov_index)

    def save(self, path: Path | str) -> None:
        """One escaped token per line, index order, sentinels first."""
        lines = [_escape(tok) for tok in self.index_to_token]
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: Path | str, kind: str) -> "Vocabulary":
        with open(path, "r", encoding="utf-8", newline="") as fh:
            text = fh.read()
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        tokens = [_unescape(line) for line in lines]
        if len(tokens) < 2 or tokens[0] != PAD_TOKEN or tokens[1] != OOV_TOKEN:
            raise ValueError(f"{path}: not a vocabulary file (missing sentinel lines)")
        return cls(kind=kind, index_to_token=tokens)


def _escape(token: str) -> str:
    return token.replace("\\", "\\\\").replace("\n", "\\n").replace("\r", "\\r")


def _unescape(line: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(line):
        ch = line[i]
        if ch == "\\" and i + 1 < len(line):
            nxt = line[i + 1]
            out.append({"n": "\n", "r": "\r", "\\": "\\"}.get(nxt, nxt))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def build_vocab(corpus: Iterable[str], kind: str, max_size: int | None = None) -> Vocabulary:
    """Build a vocabulary from training texts.

    Tokens are ranked by descending corpus frequency, ties broken by first
    occurrence, then assigned indices 2.. after the PAD/OOV sentinels.
    ``max_size`` caps the total size including the sentinels.
    """
    if kind not in ("character", "word"):
        raise ValueError(f"unknown vocabulary kind {kind!r}")
    if max_size is not None and max_size < 2:
        raise ValueError("max_size must be at least 2 (PAD and OOV)")
    tokenize = tokenize_chars if kind == "character" else tokenize_words
    counts: dict[str, int] = {}
    first_seen: dict[str, int] = {}
    n_texts = 0
    for text in corpus:
        n_texts += 1
        for tok in tokenize(text):
            counts[tok] = counts.get(tok, 0) + 1
            if tok not in first_seen:
                first_seen[tok] = len(first_seen)
    if n_texts == 0:
        raise ValueError("empty corpus: no documents to build a vocabulary from")
    if not counts:
        raise ValueError("empty corpus: documents contained no tokens")
    ranked = sorted(counts, key=lambda t: (-counts[t], first_seen[t]))
    if max_size is not None:
        ranked = ranked[: max_size - 2]
    return Vocabulary(kind=kind, index_to_token=[PAD_TOKEN, OOV_TOKEN] + ranked)


@dataclass
class EncodedDocument:
    """Fixed-length character and word index streams plus the 0/1 label.

    Streams for an unused pipeline have length 0. Padding is strictly
    trailing: pad_index never precedes a real token.
    """

    char_ids: np.ndarray
    word_ids: np.ndarray
    label: int
    doc_id: str | None = None


def _encode_stream(tokens: Iterator[str], vocab: Vocabulary, maxlen: int) -> np.ndarray:
    ids = np.zeros(maxlen, dtype=np.int64)
    i = 0
    for tok in tokens:
        if i >= maxlen:
            break
        ids[i] = vocab.encode_token(tok)
        i += 1
    return ids


def encode(html: str, label: int,
           char_vocab: Vocabulary | None = None,
           word_vocab: Vocabulary | None = None,
           maxlen_1: int = DEFAULT_CHAR_MAXLEN,
           maxlen_2: int = DEFAULT_WORD_MAXLEN,
           doc_id: str | None = None) -> EncodedDocument:
    """Encode one document: first ``maxlen_1`` character tokens and first
    ``maxlen_2`` word tokens mapped to vocabulary indices (OOV for unseen),
    post-padded with zeros to the exact lengths."""
    if char_vocab is None and word_vocab is None:
        raise ValueError("encode needs at least one vocabulary")
    if char_vocab is not None:
        char_ids = _encode_stream(iter(html[:maxlen_1]), char_vocab, maxlen_1)
    else:
        char_ids = np.zeros(0, dtype=np.int64)
    if word_vocab is not None:
        word_ids = _encode_stream(iter(tokenize_words(html)), word_vocab, maxlen_2)
    else:
        word_ids = np.zeros(0, dtype=np.int64)
    return EncodedDocument(char_ids=char_ids, word_ids=word_ids,
                           label=int(label), doc_id=doc_id)
