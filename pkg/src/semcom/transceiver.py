"""The learned transceiver: semantic and channel encoder/decoder networks.

Transmit path: token embeddings with sinusoidal positions feed a stack of
Transformer encoder layers (the semantic encoder); a two-layer dense relu
head (the channel encoder) maps each position to ``channel_units`` reals,
interpreted as ``channel_units / 2`` complex symbols and normalized to
unit average power per symbol. Receive path: a two-layer dense relu head
(the channel decoder) back to model width, then Transformer decoder layers
with causal self-attention and cross-attention over the recovered
features, ending in a linear projection to vocabulary logits.

Checkpoint format (binary, little-endian), shared with the CLI:
magic ``DSC1``, one version byte, uint32 entry count, then per entry:
uint32 name length, UTF-8 name, uint32 rank, ``rank`` uint32 dims, and
the raw float32 payload. The reserved entry ``__config__`` carries the
architecture vector so a file is self-describing. Files round-trip
byte-exactly.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import tensor as T
from .blocks import ComplexSymbolBlock
from .textdata import END, PAD, START, TokenBatch

NEG_INF = -1e9


@dataclass
class TransceiverConfig:
    vocab_size: int
    num_enc_layers: int = 3
    num_dec_layers: int = 3
    model_dim: int = 128
    num_heads: int = 8
    ffn_dim: int = 512
    channel_units: int = 16
    chan_hidden: int = 256
    dropout_rate: float = 0.1
    max_len: int = 64

    def __post_init__(self):
        if self.model_dim % self.num_heads:
            raise ValueError("model_dim must be divisible by num_heads")
        if self.channel_units % 2:
            raise ValueError("channel_units must be even (pairs of reals per complex symbol)")
        # checkpoints store this as float32; keep equality clean across a roundtrip
        self.dropout_rate = float(np.float32(self.dropout_rate))

    @property
    def symbols_per_word(self) -> int:
        return self.channel_units // 2


# parameter-set names of the four networks plus the shared embedding
GROUPS = ("embedding", "beta", "alpha", "delta", "chi")


def _group_of(name: str) -> str:
    if name.startswith("embedding."):
        return "embedding"
    if name.startswith("enc."):
        return "beta"
    if name.startswith("chan_enc."):
        return "alpha"
    if name.startswith("chan_dec."):
        return "delta"
    if name.startswith(("dec.", "pred.")):
        return "chi"
    raise KeyError(f"parameter {name} belongs to no group")


class ModelParams:
    """Named parameter tensors plus the config that determined their shapes."""

    def __init__(self, config: TransceiverConfig, params: dict[str, T.Tensor]):
        self.config = config
        self.params = params

    def __getitem__(self, name: str) -> T.Tensor:
        return self.params[name]

    def names(self) -> list[str]:
        return list(self.params)

    def group_names(self, groups) -> list[str]:
        groups = set(groups)
        return [n for n in self.params if _group_of(n) in groups]

    def trainable(self, frozen=()) -> list[tuple[str, T.Tensor]]:
        frozen = set(frozen)
        return [(n, p) for n, p in self.params.items() if _group_of(n) not in frozen]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p.data)) for p in self.params.values())


def _linear_params(rng, name, fan_in, fan_out, params):
    params[f"{name}.w"] = T.uniform_init(rng, (fan_in, fan_out), fan_in)
    params[f"{name}.b"] = T.uniform_init(rng, (fan_out,), fan_in)


def _attn_params(rng, prefix, d, params):
    for part in ("wq", "wk", "wv", "wo"):
        params[f"{prefix}.{part}"] = T.uniform_init(rng, (d, d), d)
    for part in ("bq", "bk", "bv", "bo"):
        params[f"{prefix}.{part}"] = T.uniform_init(rng, (d,), d)


def _ln_params(prefix, d, params):
    params[f"{prefix}.gain"] = T.Tensor(np.ones(d, dtype=np.float32), requires_grad=True)
    params[f"{prefix}.bias"] = T.Tensor(np.zeros(d, dtype=np.float32), requires_grad=True)


def init_params(config: TransceiverConfig, seed: int) -> ModelParams:
    """Seeded uniform fan-in initialization of every parameter tensor."""
    rng = np.random.default_rng(seed)
    d, ffn = config.model_dim, config.ffn_dim
    params: dict[str, T.Tensor] = {}

    params["embedding.table"] = T.uniform_init(rng, (config.vocab_size, d), d)

    for i in range(config.num_enc_layers):
        _attn_params(rng, f"enc.{i}.attn", d, params)
        _ln_params(f"enc.{i}.ln1", d, params)
        _linear_params(rng, f"enc.{i}.ffn.fc1", d, ffn, params)
        _linear_params(rng, f"enc.{i}.ffn.fc2", ffn, d, params)
        _ln_params(f"enc.{i}.ln2", d, params)

    _linear_params(rng, "chan_enc.fc1", d, config.chan_hidden, params)
    _linear_params(rng, "chan_enc.fc2", config.chan_hidden, config.channel_units, params)

    _linear_params(rng, "chan_dec.fc1", config.channel_units, config.chan_hidden, params)
    _linear_params(rng, "chan_dec.fc2", config.chan_hidden, d, params)

    for i in range(config.num_dec_layers):
        _attn_params(rng, f"dec.{i}.self", d, params)
        _ln_params(f"dec.{i}.ln1", d, params)
        _attn_params(rng, f"dec.{i}.cross", d, params)
        _ln_params(f"dec.{i}.ln2", d, params)
        _linear_params(rng, f"dec.{i}.ffn.fc1", d, ffn, params)
        _linear_params(rng, f"dec.{i}.ffn.fc2", ffn, d, params)
        _ln_params(f"dec.{i}.ln3", d, params)

    _linear_params(rng, "pred", d, config.vocab_size, params)
    return ModelParams(config, params)


def positional_encoding(length: int, dim: int) -> np.ndarray:
    """Sinusoidal position table, (length, dim) float32."""
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(dim, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    table = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return table.astype(np.float32)


def attention_mask(key_valid: np.ndarray, num_heads: int, query_len: int,
                   causal: bool = False) -> T.Tensor:
    """Additive mask (B, H, Lq, Lk): 0 on allowed keys, -1e9 elsewhere."""
    batch, key_len = key_valid.shape
    base = np.where(key_valid[:, None, None, :], 0.0, NEG_INF).astype(np.float32)
    base = np.broadcast_to(base, (batch, num_heads, query_len, key_len)).copy()
    if causal:
        tri = np.triu(np.full((query_len, key_len), NEG_INF, dtype=np.float32), k=1)
        base += tri
    return T.Tensor(base)


def _linear(params, name, x):
    return T.matmul(x, params[f"{name}.w"]) + params[f"{name}.b"]


def _multi_head_attention(params, prefix, query_in, key_in, mask, num_heads,
                          train, rate, rng):
    batch, q_len, d = query_in.shape
    k_len = key_in.shape[1]
    head_dim = d // num_heads

    def heads(x, length):
        return T.transpose(T.reshape(x, (batch, length, num_heads, head_dim)), (0, 2, 1, 3))

    q = heads(T.matmul(query_in, params[f"{prefix}.wq"]) + params[f"{prefix}.bq"], q_len)
    k = heads(T.matmul(key_in, params[f"{prefix}.wk"]) + params[f"{prefix}.bk"], k_len)
    v = heads(T.matmul(key_in, params[f"{prefix}.wv"]) + params[f"{prefix}.bv"], k_len)

    scores = T.matmul(q, T.transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(head_dim))
    weights = T.softmax(scores + mask, axis=-1)
    weights = T.dropout(weights, rate, train, rng)
    ctx = T.matmul(weights, v)
    ctx = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (batch, q_len, d))
    return T.matmul(ctx, params[f"{prefix}.wo"]) + params[f"{prefix}.bo"]


def _sublayer_norm(params, prefix, residual, sub):
    normed = T.layer_norm(residual + sub, axis=-1, eps=1e-6)
    return normed * params[f"{prefix}.gain"] + params[f"{prefix}.bias"]


def _ffn(params, prefix, x):
    hidden = T.relu(_linear(params, f"{prefix}.fc1", x))
    return _linear(params, f"{prefix}.fc2", hidden)


def _embed(params, tokens: np.ndarray, train, rate, rng):
    d = params.config.model_dim
    emb = T.embedding_lookup(params["embedding.table"], tokens) * math.sqrt(d)
    pe = positional_encoding(tokens.shape[1], d)
    x = emb + T.Tensor(pe)
    return T.dropout(x, rate, train, rng)


def semantic_encode(params: ModelParams, batch: TokenBatch,
                    train: bool = False, rng=None) -> T.Tensor:
    """Token batch -> semantic features (B, L, model_dim)."""
    cfg = params.config
    if batch.tokens.max(initial=0) >= cfg.vocab_size:
        raise ValueError("token index exceeds vocab_size")
    rate = cfg.dropout_rate
    x = _embed(params, batch.tokens, train, rate, rng)
    mask = attention_mask(batch.pad_mask, cfg.num_heads, batch.length)
    for i in range(cfg.num_enc_layers):
        attn = _multi_head_attention(params, f"enc.{i}.attn", x, x, mask,
                                     cfg.num_heads, train, rate, rng)
        x = _sublayer_norm(params, f"enc.{i}.ln1", x, T.dropout(attn, rate, train, rng))
        ffn = _ffn(params, f"enc.{i}.ffn", x)
        x = _sublayer_norm(params, f"enc.{i}.ln2", x, T.dropout(ffn, rate, train, rng))
    return x


def channel_encode(params: ModelParams, features: T.Tensor) -> ComplexSymbolBlock:
    """Features -> unit-power complex symbols, channel_units/2 per word."""
    cfg = params.config
    hidden = T.relu(_linear(params, "chan_enc.fc1", features))
    raw = T.relu(_linear(params, "chan_enc.fc2", hidden))
    mean_sq = T.tmean(raw * raw)
    if float(mean_sq.data) == 0.0:
        n = cfg.channel_units // 2
        zeros = np.zeros(features.shape[:2] + (n,), dtype=np.float32)
        return ComplexSymbolBlock(T.Tensor(zeros), T.Tensor(zeros), degenerate=True)
    # mean(re^2 + im^2) over complex symbols is 2 * mean over all reals
    normed = raw / T.sqrt(mean_sq * 2.0)
    n = cfg.channel_units // 2
    re = T.slice_axis(normed, -1, 0, n)
    im = T.slice_axis(normed, -1, n, n)
    return ComplexSymbolBlock(re, im)


def channel_decode(params: ModelParams, block: ComplexSymbolBlock) -> T.Tensor:
    """Received symbols -> recovered features (B, L, model_dim)."""
    y = T.concat([block.re, block.im], axis=-1)
    hidden = T.relu(_linear(params, "chan_dec.fc1", y))
    return T.relu(_linear(params, "chan_dec.fc2", hidden))


def semantic_decode_train(params: ModelParams, memory: T.Tensor,
                          dec_input: np.ndarray, src_valid: np.ndarray,
                          train: bool = False, rng=None) -> T.Tensor:
    """Teacher-forced decoder: right-shifted targets -> vocabulary logits."""
    cfg = params.config
    rate = cfg.dropout_rate
    x = _embed(params, dec_input, train, rate, rng)
    tgt_len = dec_input.shape[1]
    self_mask = attention_mask(dec_input != PAD, cfg.num_heads, tgt_len, causal=True)
    cross_mask = attention_mask(src_valid, cfg.num_heads, tgt_len)
    for i in range(cfg.num_dec_layers):
        self_attn = _multi_head_attention(params, f"dec.{i}.self", x, x, self_mask,
                                          cfg.num_heads, train, rate, rng)
        x = _sublayer_norm(params, f"dec.{i}.ln1", x, T.dropout(self_attn, rate, train, rng))
        cross = _multi_head_attention(params, f"dec.{i}.cross", x, memory, cross_mask,
                                      cfg.num_heads, train, rate, rng)
        x = _sublayer_norm(params, f"dec.{i}.ln2", x, T.dropout(cross, rate, train, rng))
        ffn = _ffn(params, f"dec.{i}.ffn", x)
        x = _sublayer_norm(params, f"dec.{i}.ln3", x, T.dropout(ffn, rate, train, rng))
    return _linear(params, "pred", x)


def greedy_decode(params: ModelParams, memory: T.Tensor, max_len: int,
                  src_valid: np.ndarray | None = None) -> list[list[int]]:
    """Autoregressive argmax from START until END or max_len, per row.

    Returns word-token ids only (START/END stripped, PAD-free).
    """
    batch = memory.shape[0]
    if src_valid is None:
        src_valid = np.ones((batch, memory.shape[1]), dtype=bool)
    tokens = np.full((batch, 1), START, dtype=np.int64)
    finished = np.zeros(batch, dtype=bool)
    with T.no_grad():
        for _ in range(max_len):
            logits = semantic_decode_train(params, memory, tokens, src_valid)
            nxt = np.argmax(logits.data[:, -1, :], axis=-1)
            nxt = np.where(finished, PAD, nxt)
            tokens = np.concatenate([tokens, nxt[:, None]], axis=1)
            finished |= nxt == END
            if finished.all():
                break
    out = []
    for row in tokens:
        words: list[int] = []
        for tok in row[1:]:
            if tok == END or tok == PAD:
                break
            words.append(int(tok))
        out.append(words)
    return out


def transmit_features(params: ModelParams, batch: TokenBatch,
                      train: bool = False, rng=None) -> ComplexSymbolBlock:
    """semantic_encode then channel_encode, the full transmit path."""
    return channel_encode(params, semantic_encode(params, batch, train, rng))


# ---------------------------------------------------------------------------
# checkpoint I/O

MAGIC = b"DSC1"
VERSION = 1
_CONFIG_KEY = "__config__"
_CONFIG_FIELDS = ("num_enc_layers", "num_dec_layers", "model_dim", "num_heads",
                  "ffn_dim", "channel_units", "chan_hidden", "dropout_rate",
                  "max_len", "vocab_size")


def _config_vector(config: TransceiverConfig) -> np.ndarray:
    return np.array([getattr(config, f) for f in _CONFIG_FIELDS], dtype="<f4")


def _config_from_vector(vec: np.ndarray) -> TransceiverConfig:
    kwargs = {}
    for field, value in zip(_CONFIG_FIELDS, vec):
        kwargs[field] = float(value) if field == "dropout_rate" else int(value)
    return TransceiverConfig(**kwargs)


def _write_entry(fh, name: str, array: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<I", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<I", array.ndim))
    for dim in array.shape:
        fh.write(struct.pack("<I", dim))
    fh.write(np.ascontiguousarray(array, dtype="<f4").tobytes())


def save_checkpoint(path, params: ModelParams) -> None:
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([VERSION]))
        fh.write(struct.pack("<I", len(params.params) + 1))
        _write_entry(fh, _CONFIG_KEY, _config_vector(params.config))
        for name, tensor in params.params.items():
            _write_entry(fh, name, tensor.data)


class CheckpointError(ValueError):
    pass


def load_checkpoint(path) -> ModelParams:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    if blob[4] != VERSION:
        raise CheckpointError(f"{path}: unsupported version {blob[4]}")
    offset = 5
    (count,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        name = blob[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        dims = struct.unpack_from(f"<{rank}I", blob, offset)
        offset += 4 * rank
        size = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(blob, dtype="<f4", count=size, offset=offset).reshape(dims)
        offset += 4 * size
        entries[name] = data
    if _CONFIG_KEY not in entries:
        raise CheckpointError(f"{path}: missing {_CONFIG_KEY} entry")
    config = _config_from_vector(entries.pop(_CONFIG_KEY))
    expected = init_params(config, seed=0)
    if set(entries) != set(expected.params):
        raise CheckpointError(f"{path}: parameter names do not match the architecture")
    params = {name: T.Tensor(entries[name].copy(), requires_grad=True)
              for name in entries}
    return ModelParams(config, params)


def clone_params(params: ModelParams) -> ModelParams:
    copied = {n: T.Tensor(p.data.copy(), requires_grad=True)
              for n, p in params.params.items()}
    return ModelParams(replace(params.config), copied)
