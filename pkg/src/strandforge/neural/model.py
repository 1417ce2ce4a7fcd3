"""Transformer encoder over encoded strand samples, plus task heads.

Post-layer-norm residual blocks, learned absolute position embeddings,
and a third embedding table for the two input languages (assembly vs
expression). All layers' hidden states are exposed because intrinsic
pooling reads the second-to-last layer while fine-tuned pooling reads
the last.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from strandforge.neural.tensor import (
    Tensor,
    embedding,
    gather_rows,
    gelu,
    layer_norm,
    log_softmax,
    reshape,
    softmax,
    softplus,
    sqrt,
    take,
    tensor,
    transpose,
)
from strandforge.tokenizer import (
    CLS_ID,
    MARK_ID,
    MASK_ID,
    PAD_ID,
    SEP_ID,
    Sample,
    pad_batch,
)

__all__ = [
    "ModelConfig", "ShapeError", "MarkMissing", "Encoder",
    "desk_config", "paper_config", "make_batch",
    "elm_loss", "ssm_loss", "classifier_loss", "classify",
    "cosine_similarity", "siamese_loss", "token_loss",
    "embed_sequence", "group_embedding", "IGNORE_INDEX",
]

IGNORE_INDEX = -1


class ShapeError(ValueError):
    """Batch does not fit the model's declared dimensions."""


class MarkMissing(ValueError):
    """A recovery sample has no marked instruction."""


@dataclass(frozen=True)
class ModelConfig:
    hidden: int
    layers: int
    heads: int
    ffn: int
    max_seq: int
    vocab_size: int
    n_languages: int = 2

    def __post_init__(self) -> None:
        if self.hidden % self.heads != 0:
            raise ShapeError(
                f"hidden {self.hidden} not divisible by heads {self.heads}"
            )


def desk_config(vocab_size: int, max_seq: int = 128) -> ModelConfig:
    return ModelConfig(64, 2, 2, 256, max_seq, vocab_size)


def paper_config(vocab_size: int) -> ModelConfig:
    return ModelConfig(768, 12, 12, 3072, 512, vocab_size)


def _trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    x = rng.standard_normal(shape)
    for _ in range(16):
        bad = np.abs(x) > 2.0
        if not bad.any():
            break
        x[bad] = rng.standard_normal(int(bad.sum()))
    np.clip(x, -2.0, 2.0, out=x)
    return x * std


class Encoder:
    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        self.params: dict[str, Tensor] = {}
        rng = np.random.default_rng(seed)
        h, f, v = config.hidden, config.ffn, config.vocab_size

        def weight(name: str, shape) -> None:
            self.params[name] = tensor(
                _trunc_normal(rng, shape), requires_grad=True, dtype=dtype
            )

        def zeros(name: str, shape) -> None:
            self.params[name] = tensor(np.zeros(shape), requires_grad=True, dtype=dtype)

        def ones(name: str, shape) -> None:
            self.params[name] = tensor(np.ones(shape), requires_grad=True, dtype=dtype)

        weight("tok_emb", (v, h))
        weight("pos_emb", (config.max_seq, h))
        weight("lang_emb", (config.n_languages, h))
        ones("emb_ln_g", (h,))
        zeros("emb_ln_b", (h,))
        for i in range(config.layers):
            for mat in ("q", "k", "v", "o"):
                weight(f"l{i}.{mat}_w", (h, h))
                zeros(f"l{i}.{mat}_b", (h,))
            ones(f"l{i}.attn_ln_g", (h,))
            zeros(f"l{i}.attn_ln_b", (h,))
            weight(f"l{i}.ffn_w1", (h, f))
            zeros(f"l{i}.ffn_b1", (f,))
            weight(f"l{i}.ffn_w2", (f, h))
            zeros(f"l{i}.ffn_b2", (h,))
            ones(f"l{i}.ffn_ln_g", (h,))
            zeros(f"l{i}.ffn_ln_b", (h,))
        weight("elm_w", (h, v))
        zeros("elm_b", (v,))
        weight("ssm_w", (h, 2))
        zeros("ssm_b", (2,))

    def add_head(self, name: str, out_dim: int, seed: int = 0) -> None:
        """Attach a linear head (idempotent for a matching existing one)."""
        key = f"{name}_w"
        if key in self.params:
            if self.params[key].shape != (self.config.hidden, out_dim):
                raise ShapeError(f"head {name} exists with different width")
            return
        rng = np.random.default_rng(seed)
        self.params[key] = tensor(
            _trunc_normal(rng, (self.config.hidden, out_dim)),
            requires_grad=True,
            dtype=self.dtype,
        )
        self.params[f"{name}_b"] = tensor(
            np.zeros(out_dim), requires_grad=True, dtype=self.dtype
        )

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def forward(self, batch: dict[str, np.ndarray]) -> list[Tensor]:
        """All hidden states: index 0 is the embedding output, -1 the last layer."""
        ids = batch["token_ids"]
        if ids.ndim != 2:
            raise ShapeError(f"token_ids must be 2-D, got {ids.shape}")
        if ids.shape[1] > self.config.max_seq:
            raise ShapeError(
                f"sequence length {ids.shape[1]} exceeds max_seq {self.config.max_seq}"
            )
        if ids.max(initial=0) >= self.config.vocab_size:
            raise ShapeError("token id out of vocabulary range")
        if batch["language_ids"].max(initial=0) >= self.config.n_languages:
            raise ShapeError("language id out of range")

        p = self.params
        emb = (
            embedding(p["tok_emb"], ids)
            + embedding(p["pos_emb"], batch["position_ids"])
            + embedding(p["lang_emb"], batch["language_ids"])
        )
        x = layer_norm(emb, p["emb_ln_g"], p["emb_ln_b"])

        attn_mask = np.asarray(batch["attention_mask"], dtype=self.dtype)
        bias = (1.0 - attn_mask)[:, None, None, :] * np.asarray(-1e9, dtype=self.dtype)
        nh = self.config.heads
        dh = self.config.hidden // nh
        scale = np.asarray(1.0 / np.sqrt(dh), dtype=self.dtype)

        states = [x]
        for i in range(self.config.layers):
            b, s = ids.shape

            def proj(mat: str) -> Tensor:
                y = x @ p[f"l{i}.{mat}_w"] + p[f"l{i}.{mat}_b"]
                return transpose(reshape(y, (b, s, nh, dh)), (0, 2, 1, 3))

            q, k, v = proj("q"), proj("k"), proj("v")
            scores = (q @ transpose(k, (0, 1, 3, 2))) * scale + Tensor(bias)
            weights = softmax(scores, axis=-1)
            ctx = reshape(transpose(weights @ v, (0, 2, 1, 3)), (b, s, self.config.hidden))
            attn_out = ctx @ p[f"l{i}.o_w"] + p[f"l{i}.o_b"]
            x = layer_norm(x + attn_out, p[f"l{i}.attn_ln_g"], p[f"l{i}.attn_ln_b"])
            ffn = gelu(x @ p[f"l{i}.ffn_w1"] + p[f"l{i}.ffn_b1"]) @ p[f"l{i}.ffn_w2"] + p[
                f"l{i}.ffn_b2"
            ]
            x = layer_norm(x + ffn, p[f"l{i}.ffn_ln_g"], p[f"l{i}.ffn_ln_b"])
            states.append(x)
        return states

    def cls_vector(self, states: Sequence[Tensor]) -> Tensor:
        last = states[-1]
        return reshape(take(last, np.array([0]), axis=1), (last.shape[0], last.shape[2]))


def make_batch(samples: Sequence[Sample], dtype=np.float32) -> dict[str, np.ndarray]:
    padded = pad_batch(list(samples))
    return {
        "token_ids": np.array([s.token_ids for s in padded], dtype=np.int64),
        "language_ids": np.array([s.language_ids for s in padded], dtype=np.int64),
        "position_ids": np.array([s.position_ids for s in padded], dtype=np.int64),
        "attention_mask": np.array([s.attention_mask for s in padded], dtype=dtype),
        "instr_starts": [list(s.instr_starts) for s in padded],
    }


def _one_hot(labels: np.ndarray, width: int, dtype) -> np.ndarray:
    out = np.zeros((len(labels), width), dtype=dtype)
    out[np.arange(len(labels)), labels] = 1.0
    return out


def _cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    logp = log_softmax(logits, axis=-1)
    hot = Tensor(_one_hot(labels, logits.shape[-1], logits.dtype))
    return -((logp * hot).sum(axis=-1)).mean()


def elm_loss(encoder: Encoder, states: Sequence[Tensor], labels: np.ndarray) -> Tensor:
    """Mean NLL over the masked positions; 0 when nothing was masked."""
    last = states[-1]
    flat_labels = np.asarray(labels).reshape(-1)
    picked = np.nonzero(flat_labels != IGNORE_INDEX)[0]
    if picked.size == 0:
        return Tensor(np.zeros((), dtype=last.dtype))
    b, s, h = last.shape
    rows = gather_rows(reshape(last, (b * s, h)), picked)
    logits = rows @ encoder.params["elm_w"] + encoder.params["elm_b"]
    return _cross_entropy(logits, flat_labels[picked])


def ssm_loss(encoder: Encoder, states: Sequence[Tensor], labels: np.ndarray) -> Tensor:
    cls = encoder.cls_vector(states)
    logits = cls @ encoder.params["ssm_w"] + encoder.params["ssm_b"]
    return _cross_entropy(logits, np.asarray(labels))


def classifier_loss(
    encoder: Encoder, head: str, states: Sequence[Tensor], labels: np.ndarray
) -> Tensor:
    cls = encoder.cls_vector(states)
    logits = cls @ encoder.params[f"{head}_w"] + encoder.params[f"{head}_b"]
    return _cross_entropy(logits, np.asarray(labels))


def classify(encoder: Encoder, head: str, states: Sequence[Tensor]) -> np.ndarray:
    cls = encoder.cls_vector(states)
    logits = cls @ encoder.params[f"{head}_w"] + encoder.params[f"{head}_b"]
    return np.argmax(logits.data, axis=-1)


def cosine_similarity(a: Tensor, b: Tensor) -> Tensor:
    eps = np.asarray(1e-12, dtype=a.dtype)
    num = (a * b).sum(axis=-1)
    na = sqrt((a * a).sum(axis=-1) + Tensor(eps))
    nb = sqrt((b * b).sum(axis=-1) + Tensor(eps))
    return num / (na * nb)


def siamese_loss(emb_a: Tensor, emb_b: Tensor, labels: np.ndarray) -> Tensor:
    """(cosine - label)^2, labels in {+1, -1}, averaged over the batch."""
    cos = cosine_similarity(emb_a, emb_b)
    diff = cos - Tensor(np.asarray(labels, dtype=cos.dtype))
    return (diff * diff).mean()


def token_loss(
    encoder: Encoder,
    states: Sequence[Tensor],
    instr_starts: Sequence[Sequence[int]],
    marked: Sequence[int],
    labels: Sequence[Sequence[int]],
) -> Tensor:
    """Binary cross entropy at each instruction-start hidden state.

    ``marked[b]`` is the index (within sample b's instruction list) of the
    query instruction; it carries no label. Labels align with
    ``instr_starts`` and say whether each instruction belongs to the
    strand being recovered.
    """
    last = states[-1]
    b_, s_, h_ = last.shape
    flat_pos: list[int] = []
    flat_labels: list[float] = []
    for b in range(b_):
        if marked[b] is None or marked[b] < 0 or marked[b] >= len(instr_starts[b]):
            raise MarkMissing(f"sample {b} has no marked instruction")
        for k, start in enumerate(instr_starts[b]):
            if k == marked[b]:
                continue
            flat_pos.append(b * s_ + start)
            flat_labels.append(float(labels[b][k]))
    if not flat_pos:
        return Tensor(np.zeros((), dtype=last.dtype))
    rows = gather_rows(reshape(last, (b_ * s_, h_)), np.asarray(flat_pos))
    z = reshape(rows @ encoder.params["tok_w"] + encoder.params["tok_b"], (len(flat_pos),))
    y = Tensor(np.asarray(flat_labels, dtype=z.dtype))
    return (softplus(z) - y * z).mean()


_NON_PAYLOAD = (PAD_ID, CLS_ID, SEP_ID, MASK_ID, MARK_ID)


def embed_sequence(
    encoder: Encoder,
    states: Sequence[Tensor],
    batch: dict[str, np.ndarray],
    mode: str,
) -> Tensor:
    """Pooled sequence embeddings, one row per batch element.

    intrinsic: second-to-last layer, mean over payload tokens (specials
    and padding excluded). finetuned: last layer, mean over everything
    except padding.
    """
    if mode == "intrinsic":
        hidden = states[-2]
        ids = batch["token_ids"]
        mask = np.asarray(batch["attention_mask"], dtype=hidden.dtype).copy()
        for special in _NON_PAYLOAD:
            mask[ids == special] = 0.0
    elif mode == "finetuned":
        hidden = states[-1]
        mask = np.asarray(batch["attention_mask"], dtype=hidden.dtype)
    else:
        raise ValueError(f"unknown embedding mode {mode!r}")
    counts = np.maximum(mask.sum(axis=1, keepdims=True), 1.0)
    weighted = hidden * Tensor(mask[:, :, None])
    return weighted.sum(axis=1) * Tensor(1.0 / counts)


def group_embedding(vectors: np.ndarray) -> np.ndarray:
    """A block or function embedding is the mean of its strand embeddings."""
    arr = np.asarray(vectors)
    return arr.mean(axis=0)
