"""Optimization loops, checkpointing, and metrics logging.

Pretraining minimizes the sum of the masked-language and the
set-membership losses with Adam under a linear-warmup-then-constant
schedule. Gradient accumulation averages micro-batch gradients so that
accum=2 at batch 16 reproduces the batch-32 update exactly.
"""
from __future__ import annotations

import csv
import json
import random
import struct
from dataclasses import asdict, dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from strandforge.neural.model import (
    Encoder,
    IGNORE_INDEX,
    ModelConfig,
    classifier_loss,
    classify,
    elm_loss,
    embed_sequence,
    make_batch,
    siamese_loss,
    ssm_loss,
    token_loss,
)
from strandforge.neural.tensor import Tensor
from strandforge.tokenizer import PAD_ID, Sample, Vocab, encode

__all__ = [
    "TrainConfig", "Adam", "NonFiniteLoss",
    "pretrain", "finetune_siamese", "finetune_classifier", "finetune_token",
    "evaluate_ssm", "evaluate_classifier", "embed_samples",
    "save_checkpoint", "load_checkpoint", "write_metrics",
]


class NonFiniteLoss(RuntimeError):
    """Training produced NaN or infinity; the run aborts with context."""


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    warmup_steps: int = 0
    batch: int = 16
    grad_accum: int = 1
    epochs: int = 1
    seed: int = 0


class Adam:
    def __init__(self, params: dict[str, Tensor], config: TrainConfig):
        self.params = params
        self.config = config
        self.steps = 0
        self._m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def current_lr(self) -> float:
        c = self.config
        if c.warmup_steps > 0 and self.steps < c.warmup_steps:
            return c.lr * (self.steps / c.warmup_steps)
        return c.lr

    def step(self) -> float:
        self.steps += 1
        c = self.config
        lr = (
            c.lr * min(1.0, self.steps / c.warmup_steps)
            if c.warmup_steps > 0
            else c.lr
        )
        bc1 = 1.0 - c.beta1 ** self.steps
        bc2 = 1.0 - c.beta2 ** self.steps
        for name, p in self.params.items():
            if p.grad is None:
                continue
            if name not in self._m:  # head attached after optimizer creation
                self._m[name] = np.zeros_like(p.data)
                self._v[name] = np.zeros_like(p.data)
            g = p.grad
            m = self._m[name] = c.beta1 * self._m[name] + (1.0 - c.beta1) * g
            v = self._v[name] = c.beta2 * self._v[name] + (1.0 - c.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + c.eps)
            p.data = p.data - np.asarray(lr, dtype=p.data.dtype) * update.astype(
                p.data.dtype
            )
        return lr

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


def _require_finite(value: float, context: str) -> float:
    if not np.isfinite(value):
        raise NonFiniteLoss(f"{context}: loss is {value}")
    return float(value)


def _batched(indices: Sequence[int], size: int) -> Iterator[list[int]]:
    for i in range(0, len(indices), size):
        yield list(indices[i : i + size])


def _masked_batch(
    samples: Sequence[Sample],
    vocab: Vocab,
    mp: float,
    rng: random.Random,
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    from strandforge.corpus import mask_tokens

    width = max(len(s) for s in samples)
    ids = np.full((len(samples), width), PAD_ID, dtype=np.int64)
    labels = np.full((len(samples), width), IGNORE_INDEX, dtype=np.int64)
    langs = np.zeros((len(samples), width), dtype=np.int64)
    positions = np.tile(np.arange(width, dtype=np.int64), (len(samples), 1))
    attn = np.zeros((len(samples), width), dtype=np.float32)
    for i, s in enumerate(samples):
        masked = mask_tokens(s, vocab, mp=mp, rng=rng)
        n = len(s)
        ids[i, :n] = masked.input_ids
        labels[i, :n] = masked.labels
        langs[i, :n] = s.language_ids
        attn[i, :n] = 1.0
    batch = {
        "token_ids": ids,
        "language_ids": langs,
        "position_ids": positions,
        "attention_mask": attn,
    }
    return batch, labels


def _train_loop(
    encoder: Encoder,
    n_rows: int,
    config: TrainConfig,
    group_step: Callable[[list[list[int]]], dict[str, float]],
    max_steps: int | None = None,
) -> list[dict[str, float]]:
    """Shared shuffle/accumulate/update skeleton; returns per-step metrics.

    ``group_step`` receives the micro-batches of one optimizer step, runs
    backward on each with its own contribution weight, and returns the
    combined loss terms. Weighting by share (samples, or masked/labeled
    positions) makes grad_accum=k at batch b reproduce the batch k*b
    gradient exactly.
    """
    opt = Adam(encoder.parameters(), config)
    history: list[dict[str, float]] = []
    done = False
    for epoch in range(config.epochs):
        if done:
            break
        order = list(range(n_rows))
        random.Random(config.seed + epoch).shuffle(order)
        micro_batches = list(_batched(order, config.batch))
        for group_start in range(0, len(micro_batches), config.grad_accum):
            group = micro_batches[group_start : group_start + config.grad_accum]
            totals = group_step(group)
            lr = opt.step()
            opt.zero_grad()
            totals["lr"] = lr
            totals["step"] = opt.steps
            history.append(totals)
            if max_steps is not None and opt.steps >= max_steps:
                done = True
                break
    return history


def pretrain(
    encoder: Encoder,
    rows: Sequence[dict],
    vocab: Vocab,
    config: TrainConfig,
    mp: float = 0.3,
    max_steps: int | None = None,
) -> list[dict[str, float]]:
    """Joint masked-language + set-membership pretraining.

    ``rows`` carry asm lines, an expression, and the membership label, so
    every batch feeds both losses.
    """
    mask_rng = random.Random(config.seed ^ 0xE1)
    samples = [encode(r["asm"], r["symexpr"], vocab) for r in rows]
    labels = np.array([int(r["label"]) for r in rows], dtype=np.int64)

    def group_step(group: list[list[int]]) -> dict[str, float]:
        prepared = []
        for idx in group:
            batch, elm_labels = _masked_batch(
                [samples[i] for i in idx], vocab, mp, mask_rng
            )
            prepared.append((idx, batch, elm_labels))
        n_total = sum(len(idx) for idx, _, _ in prepared)
        m_total = sum(
            int((el != IGNORE_INDEX).sum()) for _, _, el in prepared
        )
        out = {"L_ELM": 0.0, "L_SSM": 0.0}
        for idx, batch, elm_labels in prepared:
            states = encoder.forward(batch)
            l_elm = elm_loss(encoder, states, elm_labels)
            l_ssm = ssm_loss(encoder, states, labels[idx])
            w_elm = (
                int((elm_labels != IGNORE_INDEX).sum()) / m_total
                if m_total
                else 0.0
            )
            w_ssm = len(idx) / n_total
            combined = l_elm * w_elm + l_ssm * w_ssm
            _require_finite(combined.item(), "pretrain")
            combined.backward()
            out["L_ELM"] += float(l_elm.data) * w_elm
            out["L_SSM"] += float(l_ssm.data) * w_ssm
        out["L"] = out["L_ELM"] + out["L_SSM"]
        return out

    return _train_loop(encoder, len(rows), config, group_step, max_steps)


def finetune_siamese(
    encoder: Encoder,
    pair_rows: Sequence[dict],
    vocab: Vocab,
    config: TrainConfig,
    max_steps: int | None = None,
) -> list[dict[str, float]]:
    """Cosine-MSE training on strand pairs with shared encoder weights."""
    side_a = [encode(r["a"], None, vocab) for r in pair_rows]
    side_b = [encode(r["b"], None, vocab) for r in pair_rows]
    labels = np.array([float(r["label"]) for r in pair_rows], dtype=np.float64)

    def group_step(group: list[list[int]]) -> dict[str, float]:
        n_total = sum(len(idx) for idx in group)
        total = 0.0
        for idx in group:
            batch_a = make_batch([side_a[i] for i in idx], dtype=encoder.dtype)
            batch_b = make_batch([side_b[i] for i in idx], dtype=encoder.dtype)
            emb_a = embed_sequence(encoder, encoder.forward(batch_a), batch_a, "finetuned")
            emb_b = embed_sequence(encoder, encoder.forward(batch_b), batch_b, "finetuned")
            loss = siamese_loss(emb_a, emb_b, labels[idx]) * (len(idx) / n_total)
            _require_finite(loss.item(), "siamese")
            loss.backward()
            total += float(loss.data)
        return {"L": total}

    return _train_loop(encoder, len(pair_rows), config, group_step, max_steps)


def finetune_classifier(
    encoder: Encoder,
    samples: Sequence[Sample],
    labels: Sequence[int],
    n_classes: int,
    config: TrainConfig,
    head: str = "cls",
    max_steps: int | None = None,
) -> list[dict[str, float]]:
    encoder.add_head(head, n_classes, seed=config.seed)
    targets = np.asarray(labels, dtype=np.int64)

    def group_step(group: list[list[int]]) -> dict[str, float]:
        n_total = sum(len(idx) for idx in group)
        total = 0.0
        for idx in group:
            batch = make_batch([samples[i] for i in idx], dtype=encoder.dtype)
            states = encoder.forward(batch)
            loss = classifier_loss(encoder, head, states, targets[idx]) * (
                len(idx) / n_total
            )
            _require_finite(loss.item(), "classifier")
            loss.backward()
            total += float(loss.data)
        return {"L": total}

    return _train_loop(encoder, len(samples), config, group_step, max_steps)


def finetune_token(
    encoder: Encoder,
    samples: Sequence[Sample],
    marked: Sequence[int],
    labels: Sequence[Sequence[int]],
    config: TrainConfig,
    max_steps: int | None = None,
) -> list[dict[str, float]]:
    encoder.add_head("tok", 1, seed=config.seed)

    def group_step(group: list[list[int]]) -> dict[str, float]:
        counts = [
            sum(len(samples[i].instr_starts) - 1 for i in idx) for idx in group
        ]
        n_total = max(sum(counts), 1)
        total = 0.0
        for idx, count in zip(group, counts):
            batch = make_batch([samples[i] for i in idx], dtype=encoder.dtype)
            states = encoder.forward(batch)
            loss = token_loss(
                encoder,
                states,
                batch["instr_starts"],
                [marked[i] for i in idx],
                [labels[i] for i in idx],
            ) * (count / n_total)
            _require_finite(loss.item(), "token")
            loss.backward()
            total += float(loss.data)
        return {"L": total}

    return _train_loop(encoder, len(samples), config, group_step, max_steps)


def evaluate_ssm(
    encoder: Encoder, rows: Sequence[dict], vocab: Vocab, batch: int = 64
) -> float:
    samples = [encode(r["asm"], r["symexpr"], vocab) for r in rows]
    labels = np.array([int(r["label"]) for r in rows])
    correct = 0
    for idx in _batched(range(len(rows)), batch):
        b = make_batch([samples[i] for i in idx], dtype=encoder.dtype)
        states = encoder.forward(b)
        cls = encoder.cls_vector(states)
        logits = cls @ encoder.params["ssm_w"] + encoder.params["ssm_b"]
        correct += int((np.argmax(logits.data, axis=-1) == labels[idx]).sum())
    return correct / max(len(rows), 1)


def evaluate_classifier(
    encoder: Encoder,
    samples: Sequence[Sample],
    labels: Sequence[int],
    head: str = "cls",
    batch: int = 64,
) -> float:
    targets = np.asarray(labels)
    correct = 0
    for idx in _batched(range(len(samples)), batch):
        b = make_batch([samples[i] for i in idx], dtype=encoder.dtype)
        pred = classify(encoder, head, encoder.forward(b))
        correct += int((pred == targets[idx]).sum())
    return correct / max(len(samples), 1)


def embed_samples(
    encoder: Encoder, samples: Sequence[Sample], mode: str, batch: int = 64
) -> np.ndarray:
    """Pooled embeddings as a plain array, batch by batch."""
    out = []
    for idx in _batched(range(len(samples)), batch):
        b = make_batch([samples[i] for i in idx], dtype=encoder.dtype)
        states = encoder.forward(b)
        out.append(embed_sequence(encoder, states, b, mode).data)
    if not out:
        return np.zeros((0, encoder.config.hidden), dtype=encoder.dtype)
    return np.concatenate(out, axis=0)


_MAGIC = b"SFCK"
_VERSION = 1


def save_checkpoint(encoder: Encoder, path: str, vocab_hash: str = "") -> None:
    names = sorted(encoder.params)
    header = {
        "version": _VERSION,
        "config": asdict(encoder.config),
        "vocab_hash": vocab_hash,
        "tensors": [
            {"name": n, "shape": list(encoder.params[n].shape)} for n in names
        ],
        "dtype": "f32",
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(encoder.params[n].data, dtype="<f4").tobytes())


def load_checkpoint(path: str) -> tuple[Encoder, str]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"not a checkpoint file: magic {magic!r}")
        version, blob_len = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        header = json.loads(fh.read(blob_len).decode("utf-8"))
        config = ModelConfig(**header["config"])
        encoder = Encoder(config, seed=0)
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 4)
            arr = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
            name = entry["name"]
            if name in encoder.params:
                if encoder.params[name].shape != shape:
                    raise ValueError(f"shape mismatch for {name}")
                encoder.params[name].data = arr
            else:  # fine-tune heads attached after construction
                encoder.params[name] = Tensor(arr, requires_grad=True)
    return encoder, header["vocab_hash"]


def write_metrics(path: str, history: Sequence[dict[str, float]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "L_ELM", "L_SSM", "L", "lr"])
        for row in history:
            writer.writerow(
                [
                    int(row.get("step", 0)),
                    f"{row.get('L_ELM', float('nan')):.6f}",
                    f"{row.get('L_SSM', float('nan')):.6f}",
                    f"{row.get('L', float('nan')):.6f}",
                    f"{row.get('lr', 0.0):.8f}",
                ]
            )
