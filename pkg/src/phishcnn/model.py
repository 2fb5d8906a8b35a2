"""The three classifier variants: character-only, word-only, and the full
model that stacks the character embedding block on top of the word embedding
block along the sequence axis before a shared convolutional head.

Head for every variant: valid 1D convolution -> ReLU -> max pooling ->
flatten -> dense(10)+ReLU+dropout -> dense(1) -> sigmoid. Parameters live in
plain float64 arrays and serialize to a versioned binary container (.hph).
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nncore
from .tokenizer import EncodedDocument

VARIANTS = ("character", "word", "full")
MODEL_SUFFIX = ".hph"

_MAGIC = b"HPH1"
_FORMAT_VERSION = 1
_VARIANT_CODES = {name: i for i, name in enumerate(VARIANTS)}


class ModelFormatError(Exception):
    """Model file has a bad magic/version, is truncated, or is inconsistent."""


@dataclass(frozen=True)
class ArchitectureSpec:
    """Shape description of one model variant; every tensor shape follows
    from these fields."""

    variant: str
    char_vocab_size: int | None = None
    word_vocab_size: int | None = None
    maxlen_1: int | None = None
    maxlen_2: int | None = None
    d: int = 100
    filters: int = 32
    kernel: int = 8
    pool: int = 2
    dense1_units: int = 10
    dropout: float = 0.5

    @property
    def uses_chars(self) -> bool:
        return self.variant in ("character", "full")

    @property
    def uses_words(self) -> bool:
        return self.variant in ("word", "full")

    @property
    def input_len(self) -> int:
        """Sequence length seen by the convolution (character block first)."""
        return (self.maxlen_1 or 0) + (self.maxlen_2 or 0)

    @property
    def conv_out_len(self) -> int:
        return self.input_len - self.kernel + 1

    @property
    def pooled_len(self) -> int:
        return self.conv_out_len // self.pool

    @property
    def flat_size(self) -> int:
        return self.pooled_len * self.filters

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        for name in ("d", "filters", "kernel", "pool", "dense1_units"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.uses_chars:
            if self.char_vocab_size is None or self.char_vocab_size < 2:
                raise ValueError("char_vocab_size must cover PAD and OOV")
            if self.maxlen_1 is None or self.maxlen_1 < 0:
                raise ValueError("maxlen_1 required for the character pipeline")
        elif self.char_vocab_size is not None or self.maxlen_1 is not None:
            raise ValueError("word variant must not carry character fields")
        if self.uses_words:
            if self.word_vocab_size is None or self.word_vocab_size < 2:
                raise ValueError("word_vocab_size must cover PAD and OOV")
            if self.maxlen_2 is None or self.maxlen_2 < 0:
                raise ValueError("maxlen_2 required for the word pipeline")
        elif self.word_vocab_size is not None or self.maxlen_2 is not None:
            raise ValueError("character variant must not carry word fields")
        # the degenerate maxlen=0 block is allowed in the full variant only;
        # single-pipeline variants need a non-empty stream
        if self.variant == "character" and self.maxlen_1 == 0:
            raise ValueError("maxlen_1 must be >= 1 for the character variant")
        if self.variant == "word" and self.maxlen_2 == 0:
            raise ValueError("maxlen_2 must be >= 1 for the word variant")
        if self.input_len < self.kernel:
            raise ValueError(f"total sequence length {self.input_len} shorter "
                             f"than kernel {self.kernel}")
        if self.pooled_len < 1:
            raise ValueError("pooling would produce an empty feature map")


def parameter_count(spec: ArchitectureSpec) -> int:
    """Closed-form count of trainable scalars for a spec."""
    total = 0
    if spec.uses_chars:
        total += spec.char_vocab_size * spec.d
    if spec.uses_words:
        total += spec.word_vocab_size * spec.d
    total += spec.filters * spec.kernel * spec.d + spec.filters
    total += spec.flat_size * spec.dense1_units + spec.dense1_units
    total += spec.dense1_units * 1 + 1
    return total


@dataclass
class ModelParams:
    """All trainable tensors of one variant plus training metadata."""

    spec: ArchitectureSpec
    char_embedding: np.ndarray | None
    word_embedding: np.ndarray | None
    conv_w: np.ndarray
    conv_b: np.ndarray
    dense1_w: np.ndarray
    dense1_b: np.ndarray
    dense2_w: np.ndarray
    dense2_b: np.ndarray
    seed: int = 0
    epochs_trained: int = 0
    final_train_loss: float = math.nan
    final_val_loss: float = math.nan

    def tensors(self) -> dict[str, np.ndarray]:
        """The trainable arrays themselves (not copies), in a fixed order."""
        out: dict[str, np.ndarray] = {}
        if self.char_embedding is not None:
            out["char_embedding"] = self.char_embedding
        if self.word_embedding is not None:
            out["word_embedding"] = self.word_embedding
        out["conv_w"] = self.conv_w
        out["conv_b"] = self.conv_b
        out["dense1_w"] = self.dense1_w
        out["dense1_b"] = self.dense1_b
        out["dense2_w"] = self.dense2_w
        out["dense2_b"] = self.dense2_b
        return out

    def n_parameters(self) -> int:
        return sum(arr.size for arr in self.tensors().values())

    def copy(self) -> "ModelParams":
        def dup(arr):
            return None if arr is None else arr.copy()
        return ModelParams(
            spec=self.spec,
            char_embedding=dup(self.char_embedding),
            word_embedding=dup(self.word_embedding),
            conv_w=self.conv_w.copy(), conv_b=self.conv_b.copy(),
            dense1_w=self.dense1_w.copy(), dense1_b=self.dense1_b.copy(),
            dense2_w=self.dense2_w.copy(), dense2_b=self.dense2_b.copy(),
            seed=self.seed, epochs_trained=self.epochs_trained,
            final_train_loss=self.final_train_loss,
            final_val_loss=self.final_val_loss)


def _expected_shapes(spec: ArchitectureSpec) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    if spec.uses_chars:
        shapes["char_embedding"] = (spec.char_vocab_size, spec.d)
    if spec.uses_words:
        shapes["word_embedding"] = (spec.word_vocab_size, spec.d)
    shapes["conv_w"] = (spec.filters, spec.kernel, spec.d)
    shapes["conv_b"] = (spec.filters,)
    shapes["dense1_w"] = (spec.flat_size, spec.dense1_units)
    shapes["dense1_b"] = (spec.dense1_units,)
    shapes["dense2_w"] = (spec.dense1_units, 1)
    shapes["dense2_b"] = (1,)
    return shapes


def build_model(spec: ArchitectureSpec, rng: np.random.Generator) -> ModelParams:
    """Allocate and initialize all parameters. Embeddings draw from
    uniform(-0.05, 0.05); conv and dense weights use a fan-in-scaled uniform
    range; biases start at zero. Draw order is fixed for determinism."""
    spec.validate()

    def uniform(shape, limit):
        return rng.uniform(-limit, limit, size=shape)

    char_emb = uniform((spec.char_vocab_size, spec.d), 0.05) if spec.uses_chars else None
    word_emb = uniform((spec.word_vocab_size, spec.d), 0.05) if spec.uses_words else None
    conv_w = uniform((spec.filters, spec.kernel, spec.d),
                     1.0 / math.sqrt(spec.kernel * spec.d))
    dense1_w = uniform((spec.flat_size, spec.dense1_units),
                       1.0 / math.sqrt(spec.flat_size))
    dense2_w = uniform((spec.dense1_units, 1), 1.0 / math.sqrt(spec.dense1_units))
    return ModelParams(
        spec=spec,
        char_embedding=char_emb,
        word_embedding=word_emb,
        conv_w=conv_w, conv_b=np.zeros(spec.filters),
        dense1_w=dense1_w, dense1_b=np.zeros(spec.dense1_units),
        dense2_w=dense2_w, dense2_b=np.zeros(1))


@dataclass
class ForwardCache:
    """Intermediate activations kept for the backward pass."""

    mode: str
    char_ids: np.ndarray
    word_ids: np.ndarray
    emb: np.ndarray
    conv_pre: np.ndarray
    conv_act: np.ndarray
    pooled: np.ndarray
    flat: np.ndarray
    d1_pre: np.ndarray
    d1_act: np.ndarray
    dropped: np.ndarray
    drop_mask: np.ndarray | None
    prob: float


def forward(params: ModelParams, doc: EncodedDocument, mode: str = "infer",
            rng: np.random.Generator | None = None) -> tuple[float, ForwardCache]:
    """Score one encoded document; returns the phishing probability in (0, 1)
    and the activation cache. Dropout fires only in train mode."""
    spec = params.spec
    if mode not in ("train", "infer"):
        raise ValueError(f"unknown mode {mode!r}")
    blocks = []
    if spec.uses_chars:
        if len(doc.char_ids) != spec.maxlen_1:
            raise ValueError(f"char stream length {len(doc.char_ids)} != "
                             f"maxlen_1 {spec.maxlen_1}")
        blocks.append(nncore.embedding_forward(doc.char_ids, params.char_embedding))
    if spec.uses_words:
        if len(doc.word_ids) != spec.maxlen_2:
            raise ValueError(f"word stream length {len(doc.word_ids)} != "
                             f"maxlen_2 {spec.maxlen_2}")
        blocks.append(nncore.embedding_forward(doc.word_ids, params.word_embedding))
    emb = blocks[0] if len(blocks) == 1 else np.concatenate(blocks, axis=0)
    conv_pre = nncore.conv1d_forward(emb, params.conv_w, params.conv_b)
    conv_act = nncore.relu(conv_pre)
    pooled = nncore.maxpool1d(conv_act, spec.pool)
    flat = pooled.reshape(-1)
    d1_pre = nncore.dense_forward(flat, params.dense1_w, params.dense1_b)
    d1_act = nncore.relu(d1_pre)
    dropped, mask = nncore.dropout_forward(d1_act, spec.dropout, mode, rng)
    d2_pre = nncore.dense_forward(dropped, params.dense2_w, params.dense2_b)
    prob = float(nncore.sigmoid(d2_pre)[0])
    cache = ForwardCache(mode=mode, char_ids=doc.char_ids, word_ids=doc.word_ids,
                         emb=emb, conv_pre=conv_pre, conv_act=conv_act,
                         pooled=pooled, flat=flat, d1_pre=d1_pre, d1_act=d1_act,
                         dropped=dropped, drop_mask=mask, prob=prob)
    return prob, cache


def backward(params: ModelParams, cache: ForwardCache, label: int) -> dict[str, np.ndarray]:
    """Gradients of the binary cross-entropy loss w.r.t. every trainable
    tensor, keyed like ``params.tensors()``. Requires a train-mode cache."""
    if cache.mode != "train":
        raise ValueError("backward needs a cache from a train-mode forward pass")
    spec = params.spec
    _, dlogit = nncore.bce_loss(cache.prob, label)
    g = np.array([dlogit])
    d_dropped, d_w2, d_b2 = nncore.dense_backward(cache.dropped, params.dense2_w, g)
    d_act1 = nncore.dropout_backward(d_dropped, cache.drop_mask, spec.dropout)
    d_pre1 = nncore.relu_backward(cache.d1_pre, d_act1)
    d_flat, d_w1, d_b1 = nncore.dense_backward(cache.flat, params.dense1_w, d_pre1)
    d_pooled = d_flat.reshape(cache.pooled.shape)
    d_conv_act = nncore.maxpool1d_backward(cache.conv_act, d_pooled, spec.pool)
    d_conv_pre = nncore.relu_backward(cache.conv_pre, d_conv_act)
    d_emb, d_cw, d_cb = nncore.conv1d_backward(cache.emb, params.conv_w, d_conv_pre)

    grads: dict[str, np.ndarray] = {}
    offset = 0
    if spec.uses_chars:
        grads["char_embedding"] = nncore.embedding_backward(
            cache.char_ids, d_emb[: spec.maxlen_1], spec.char_vocab_size)
        offset = spec.maxlen_1
    if spec.uses_words:
        grads["word_embedding"] = nncore.embedding_backward(
            cache.word_ids, d_emb[offset:], spec.word_vocab_size)
    grads["conv_w"] = d_cw
    grads["conv_b"] = d_cb
    grads["dense1_w"] = d_w1
    grads["dense1_b"] = d_b1
    grads["dense2_w"] = d_w2
    grads["dense2_b"] = d_b2
    return grads


# ---------------------------------------------------------------------------
# Serialization: magic, version, spec block, metadata, then each tensor as
# (rank, extents, raw little-endian float64 data). Round-trips bit-exactly.
# ---------------------------------------------------------------------------

def save_model(params: ModelParams, path: Path | str) -> None:
    spec = params.spec
    buf = bytearray()
    buf += _MAGIC
    buf += struct.pack("<I", _FORMAT_VERSION)
    buf += struct.pack("<B", _VARIANT_CODES[spec.variant])
    buf += struct.pack("<9Q", spec.char_vocab_size or 0, spec.word_vocab_size or 0,
                       spec.maxlen_1 if spec.maxlen_1 is not None else 0,
                       spec.maxlen_2 if spec.maxlen_2 is not None else 0,
                       spec.d, spec.filters, spec.kernel, spec.pool,
                       spec.dense1_units)
    buf += struct.pack("<d", spec.dropout)
    buf += struct.pack("<QQ", params.seed, params.epochs_trained)
    buf += struct.pack("<dd", params.final_train_loss, params.final_val_loss)
    tensors = params.tensors()
    buf += struct.pack("<B", len(tensors))
    for arr in tensors.values():
        buf += struct.pack("<B", arr.ndim)
        buf += struct.pack(f"<{arr.ndim}Q", *arr.shape)
        buf += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(buf))


class _Reader:
    def __init__(self, data: bytes, name: str):
        self.data = data
        self.pos = 0
        self.name = name

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFormatError(f"{self.name}: truncated model file")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def done(self) -> bool:
        return self.pos == len(self.data)


def load_model(path: Path | str) -> ModelParams:
    path = Path(path)
    reader = _Reader(path.read_bytes(), str(path))
    if reader.take(4) != _MAGIC:
        raise ModelFormatError(f"{path}: bad magic; not a model file")
    (version,) = reader.unpack("<I")
    if version != _FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported format version {version}")
    (variant_code,) = reader.unpack("<B")
    if variant_code >= len(VARIANTS):
        raise ModelFormatError(f"{path}: unknown variant code {variant_code}")
    variant = VARIANTS[variant_code]
    (cvs, wvs, m1, m2, d, filters, kernel, pool, dense1) = reader.unpack("<9Q")
    (dropout,) = reader.unpack("<d")
    (seed, epochs) = reader.unpack("<QQ")
    (train_loss, val_loss) = reader.unpack("<dd")
    uses_chars = variant in ("character", "full")
    uses_words = variant in ("word", "full")
    spec = ArchitectureSpec(
        variant=variant,
        char_vocab_size=cvs if uses_chars else None,
        word_vocab_size=wvs if uses_words else None,
        maxlen_1=m1 if uses_chars else None,
        maxlen_2=m2 if uses_words else None,
        d=d, filters=filters, kernel=kernel, pool=pool,
        dense1_units=dense1, dropout=dropout)
    try:
        spec.validate()
    except ValueError as exc:
        raise ModelFormatError(f"{path}: inconsistent spec: {exc}") from exc

    expected = _expected_shapes(spec)
    (count,) = reader.unpack("<B")
    if count != len(expected):
        raise ModelFormatError(f"{path}: expected {len(expected)} tensors, file "
                               f"declares {count}")
    loaded: dict[str, np.ndarray] = {}
    for name, want in expected.items():
        (rank,) = reader.unpack("<B")
        shape = reader.unpack(f"<{rank}Q") if rank else ()
        if tuple(shape) != want:
            raise ModelFormatError(f"{path}: tensor {name!r} has shape {shape}, "
                                   f"spec requires {want}")
        n_elems = int(np.prod(shape)) if shape else 1
        raw = reader.take(8 * n_elems)
        loaded[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    if not reader.done():
        raise ModelFormatError(f"{path}: trailing bytes after last tensor")
    return ModelParams(
        spec=spec,
        char_embedding=loaded.get("char_embedding"),
        word_embedding=loaded.get("word_embedding"),
        conv_w=loaded["conv_w"], conv_b=loaded["conv_b"],
        dense1_w=loaded["dense1_w"], dense1_b=loaded["dense1_b"],
        dense2_w=loaded["dense2_w"], dense2_b=loaded["dense2_b"],
        seed=seed, epochs_trained=epochs,
        final_train_loss=train_loss, final_val_loss=val_loss)
