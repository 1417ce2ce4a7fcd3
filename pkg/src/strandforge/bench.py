"""Benchmark datasets and evaluation metrics.

Two intrinsic evaluations work on frozen embeddings: instruction outlier
detection (five instructions, four sharing an opcode or operand class) and
embedding-database retrieval scored with precision/recall/nDCG at k.  The
dataset builders assemble the fine-tuning tasks from pipeline artifacts:
similarity pairs, provenance classification, strand recovery, and strand
execution.
"""
from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from strandforge.cfg import FunctionCfg
from strandforge.corpus import (
    SynthCorpus,
    build_exec_dataset,
    split_rows,
)
from strandforge.slicer import Strand, disjoint_strand_cover, extract_function_strands
from strandforge.symx import RepresentativeSet, assign_equal, assign_to_text

__all__ = [
    "QueryNotInDb", "InsufficientData", "OutlierSet", "SimilarityDb",
    "ndcg", "topk_search", "query_metrics", "evaluate_db",
    "make_outlier_sets", "outlier_predict", "outlier_accuracy",
    "outlier_benchmark", "random_embedding", "roc_auc", "best_epoch",
    "truncate_function", "build_task_datasets",
    "write_results_csv", "write_embeddings_csv",
]

FUNCTION_INSTRUCTION_LIMIT = 150


class QueryNotInDb(KeyError):
    """Raised when a retrieval query id is absent from the database."""


class InsufficientData(ValueError):
    def __init__(self, task: str, needed: int, found: int):
        super().__init__(f"task {task!r} needs {needed} usable items, found {found}")
        self.task = task
        self.needed = needed
        self.found = found


# ── ranking metrics ──────────────────────────────────────────────────────


def ndcg(flags: Sequence[int], n_sim: int, k: int | None = None) -> float:
    """Discounted gain of a ranked 0/1 hit list against the ideal prefix.

    The numerator discounts hit i (1-based) by 1/ln(1+i); the denominator
    is the score of a perfect answer placing all ``n_sim`` hits first.
    The ratio does not depend on the logarithm base.
    """
    if n_sim < 1:
        raise ValueError("n_sim must be >= 1")
    if k is None:
        k = len(flags)
    got = sum(f / math.log(1 + i) for i, f in enumerate(flags[:k], start=1))
    ideal = sum(1 / math.log(1 + i) for i in range(1, n_sim + 1))
    return got / ideal


@dataclass
class SimilarityDb:
    """Embedding database with ground-truth groups and a query subset."""

    ids: tuple[str, ...]
    embeddings: np.ndarray  # (n, h) float
    groups: tuple[str, ...]
    queries: tuple[str, ...] = ()

    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.ids) != len(self.groups) or len(self.ids) != len(self.embeddings):
            raise ValueError("ids, groups and embeddings must align")
        self.index = {e: i for i, e in enumerate(self.ids)}
        if len(self.index) != len(self.ids):
            raise ValueError("duplicate entry id")
        if not self.queries:
            self.queries = tuple(
                e for i, e in enumerate(self.ids) if self.similar_count(e) > 0
            )

    def similar_count(self, entry_id: str) -> int:
        """Entries sharing the query's group, the query itself excluded."""
        i = self.index[entry_id]
        return sum(
            1 for j, g in enumerate(self.groups) if g == self.groups[i] and j != i
        )


def _cosines(db: SimilarityDb, qi: int) -> np.ndarray:
    emb = np.asarray(db.embeddings, dtype=np.float64)
    norms = np.sqrt((emb * emb).sum(axis=1))
    norms = np.maximum(norms, 1e-12)
    return (emb @ emb[qi]) / (norms * norms[qi])


def topk_search(db: SimilarityDb, query_id: str, k: int) -> list[str]:
    """Ids of the k nearest entries by cosine, the query itself excluded.

    Ties are broken by entry id; when k exceeds the database size the
    ranking simply stops there.
    """
    if query_id not in db.index:
        raise QueryNotInDb(query_id)
    qi = db.index[query_id]
    sims = _cosines(db, qi)
    order = sorted(
        (i for i in range(len(db.ids)) if i != qi),
        key=lambda i: (-sims[i], db.ids[i]),
    )
    return [db.ids[i] for i in order[:k]]


def query_metrics(db: SimilarityDb, query_id: str, k: int) -> dict[str, float]:
    ranked = topk_search(db, query_id, k)
    group = db.groups[db.index[query_id]]
    flags = [1 if db.groups[db.index[r]] == group else 0 for r in ranked]
    n_sim = db.similar_count(query_id)
    if n_sim < 1:
        raise ValueError(f"query {query_id!r} has no similar entry")
    return {
        "precision": sum(flags) / k,
        "recall": sum(flags) / n_sim,
        "ndcg": ndcg(flags, n_sim, k),
    }


def evaluate_db(db: SimilarityDb, ks: Sequence[int]) -> list[dict]:
    """Per-query metrics averaged over the query set, one row per (metric, k)."""
    rows = []
    for k in ks:
        sums = {"precision": 0.0, "recall": 0.0, "ndcg": 0.0}
        for q in db.queries:
            for name, value in query_metrics(db, q, k).items():
                sums[name] += value
        for name, total in sums.items():
            rows.append({"metric": name, "k": k, "value": total / len(db.queries)})
    return rows


# ── instruction outlier detection ────────────────────────────────────────

_REGS64 = ("rax", "rbx", "rcx", "rdx", "rsi", "rdi", "r8", "r9", "r10", "r11")
_REGS32 = ("eax", "ebx", "ecx", "edx", "esi", "edi", "r8d", "r9d")


def _mem(rng: random.Random, size: str = "qword") -> str:
    base = rng.choice(("rbp", "rsp", "rax", "rbx"))
    disp = rng.randrange(-128, 129, 8)
    sign = "+" if disp >= 0 else "-"
    return f"{size} ptr [{base} {sign} {abs(disp)}]"


def _opcode_instruction(cls: str, rng: random.Random) -> str:
    r = lambda: rng.choice(_REGS64)
    e = lambda: rng.choice(_REGS32)
    imm = lambda: rng.randrange(1, 64)
    if cls == "data-movement":
        mn = rng.choice(("mov", "push", "pop", "cltq", "cwtl", "cqto"))
        if mn == "mov":
            return f"mov {r()}, {r()}"
        if mn in ("push", "pop"):
            return f"{mn} {r()}"
        return mn
    if cls == "unary":
        return f"{rng.choice(('inc', 'dec', 'neg', 'not'))} {r()}"
    if cls == "binary":
        mn = rng.choice(("add", "sub", "imul", "xor", "or", "and"))
        return f"{mn} {r()}, {r()}"
    if cls == "shift":
        return f"{rng.choice(('sal', 'sar', 'shr', 'shl'))} {r()}, {imm() % 31 + 1}"
    if cls == "special-arithmetic":
        return f"{rng.choice(('mul', 'imul', 'div', 'idiv'))} {r()}"
    if cls == "comparison":
        return f"{rng.choice(('cmp', 'test'))} {r()}, {r()}"
    if cls == "conditional-set":
        mn = rng.choice(("sete", "setne", "setz", "sets", "setg", "setle", "seta", "setb"))
        return f"{mn} al"
    if cls == "jump":
        mn = rng.choice(("jmp", "je", "jne", "jz", "js", "jg", "jle", "ja", "jb"))
        return f"{mn} MEM"
    if cls == "conditional-move":
        mn = rng.choice(("cmove", "cmovne", "cmovz", "cmovs", "cmovg", "cmovle", "cmova", "cmovb"))
        return f"{mn} {r()}, {r()}"
    if cls == "procedure-call":
        mn = rng.choice(("call", "ret", "leave"))
        return "call func" if mn == "call" else mn
    if cls == "floating-point":
        mn = rng.choice(("fadd", "fsub", "fmul", "fdiv", "fabs", "fchs", "fsqrt"))
        return mn
    raise ValueError(f"unknown opcode class {cls!r}")


def _operand_instruction(cls: str, rng: random.Random) -> str:
    r = lambda: rng.choice(_REGS64)
    imm = lambda: rng.randrange(1, 64)
    if cls == "none":
        return rng.choice(("ret", "leave", "cltq"))
    if cls == "cnst":
        return f"push {imm()}"
    if cls == "reg":
        return f"{rng.choice(('inc', 'dec', 'neg', 'push', 'pop'))} {r()}"
    if cls == "ref":
        return f"{rng.choice(('inc', 'push'))} {_mem(rng)}"
    if cls == "reg-reg":
        return f"{rng.choice(('mov', 'add', 'sub', 'xor', 'cmp'))} {r()}, {r()}"
    if cls == "reg-cnst":
        return f"{rng.choice(('mov', 'add', 'cmp', 'and'))} {r()}, {imm()}"
    if cls == "reg-ref":
        return f"{rng.choice(('mov', 'add'))} {r()}, {_mem(rng)}"
    if cls == "ref-reg":
        return f"{rng.choice(('mov', 'add'))} {_mem(rng)}, {r()}"
    if cls == "ref-cnst":
        return f"mov {_mem(rng, 'dword')}, {imm()}"
    if cls == "tri":
        return f"imul {r()}, {r()}, {imm()}"
    raise ValueError(f"unknown operand class {cls!r}")


OPCODE_CLASSES = (
    "data-movement", "unary", "binary", "shift", "special-arithmetic",
    "comparison", "conditional-set", "jump", "conditional-move",
    "procedure-call", "floating-point",
)
OPERAND_CLASSES = (
    "none", "cnst", "reg", "ref", "reg-reg", "reg-cnst", "reg-ref",
    "ref-reg", "ref-cnst", "tri",
)


@dataclass(frozen=True)
class OutlierSet:
    """Five instructions, four sharing a class; one position is the odd one."""

    instructions: tuple[str, ...]
    outlier_index: int
    basis: str  # "opcode" | "operand"


def make_outlier_sets(n_sets: int, basis: str, seed: int = 0) -> list[OutlierSet]:
    if basis == "opcode":
        classes, render = OPCODE_CLASSES, _opcode_instruction
    elif basis == "operand":
        classes, render = OPERAND_CLASSES, _operand_instruction
    else:
        raise ValueError(f"basis must be 'opcode' or 'operand', got {basis!r}")
    rng = random.Random(seed)
    sets = []
    for _ in range(n_sets):
        main, odd = rng.sample(classes, 2)
        instrs = [render(main, rng) for _ in range(4)]
        where = rng.randrange(5)
        instrs.insert(where, render(odd, rng))
        sets.append(OutlierSet(tuple(instrs), where, basis))
    return sets


def outlier_predict(vectors: np.ndarray) -> int:
    """Index of the row with the largest summed cosine distance to the rest."""
    v = np.asarray(vectors, dtype=np.float64)
    norms = np.maximum(np.sqrt((v * v).sum(axis=1)), 1e-12)
    cos = (v @ v.T) / np.outer(norms, norms)
    distance = (1.0 - cos).sum(axis=1)  # self-distance contributes zero
    return int(np.argmax(distance))


def outlier_accuracy(
    embed_fn: Callable[[str], np.ndarray], sets: Sequence[OutlierSet]
) -> float:
    hits = 0
    for s in sets:
        vectors = np.stack([embed_fn(text) for text in s.instructions])
        hits += outlier_predict(vectors) == s.outlier_index
    return hits / len(sets)


def outlier_benchmark(
    embed_fn: Callable[[str], np.ndarray],
    basis: str,
    n_sets: int,
    runs: int = 10,
    seed: int = 0,
) -> tuple[float, float]:
    """Mean and standard deviation of accuracy over freshly drawn datasets."""
    scores = [
        outlier_accuracy(embed_fn, make_outlier_sets(n_sets, basis, seed + run))
        for run in range(runs)
    ]
    return float(np.mean(scores)), float(np.std(scores))


def random_embedding(dim: int = 32, seed: int = 0) -> Callable[[str], np.ndarray]:
    """Baseline embedder: an independent draw per call, text ignored."""
    rng = np.random.default_rng(seed)

    def embed(_text: str) -> np.ndarray:
        return rng.standard_normal(dim)

    return embed


# ── validation-epoch selection ───────────────────────────────────────────


def roc_auc(labels: Sequence[int], scores: Sequence[float]) -> float:
    """Area under the ROC curve via the rank statistic; ties share rank."""
    pairs = sorted(zip(scores, labels))
    n_pos = sum(labels)
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs both classes present")
    rank_sum = 0.0
    i = 0
    while i < len(pairs):
        j = i
        while j < len(pairs) and pairs[j][0] == pairs[i][0]:
            j += 1
        mean_rank = (i + 1 + j) / 2  # 1-based average rank of the tie block
        rank_sum += mean_rank * sum(lab for _, lab in pairs[i:j])
        i = j
    return (rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)


def best_epoch(epoch_aucs: Sequence[float]) -> int:
    """Earliest epoch with the highest validation AUC."""
    if not epoch_aucs:
        raise ValueError("no epochs scored")
    best = max(epoch_aucs)
    return next(i for i, a in enumerate(epoch_aucs) if a == best)


# ── task dataset builders ────────────────────────────────────────────────


def truncate_function(lines: Sequence[str], limit: int = FUNCTION_INSTRUCTION_LIMIT) -> list[str]:
    return list(lines)[:limit]


def _rep_texts(reps: RepresentativeSet | None) -> frozenset[str]:
    if reps is None:
        return frozenset()
    return frozenset(assign_to_text(a) for a in reps.assigns)


def _sets_intersect(a: RepresentativeSet, b: RepresentativeSet) -> bool:
    return any(assign_equal(x, y) for x in a.assigns for y in b.assigns)


def strand_similarity_rows(
    strands: Sequence[Strand],
    representative_sets: Sequence[RepresentativeSet | None],
    seed: int,
) -> list[dict]:
    """Balanced ±1 pairs with shared-expression ground truth.

    Positives are found by bucketing strands on each expression's text, so
    only textually colliding candidates pay the structural comparison.
    """
    usable = [
        (s, r)
        for s, r in zip(strands, representative_sets)
        if r is not None and r.assigns
    ]
    buckets: dict[str, list[int]] = {}
    for i, (_, reps) in enumerate(usable):
        for text in _rep_texts(reps):
            buckets.setdefault(text, []).append(i)

    positives: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    for members in buckets.values():
        for ai in range(len(members)):
            for bi in range(ai + 1, len(members)):
                key = (members[ai], members[bi])
                if key not in seen:
                    seen.add(key)
                    positives.append(key)
    if len(positives) < 2:
        raise InsufficientData("strand-similarity", 2, len(positives))

    rng = random.Random(seed)
    rows = [
        {
            "a": list(usable[a][0].asm),
            "b": list(usable[b][0].asm),
            "label": 1,
        }
        for a, b in positives
    ]
    want = len(rows)
    made = 0
    attempts = 0
    while made < want and attempts < want * 100:
        attempts += 1
        a, b = rng.sample(range(len(usable)), 2)
        if _sets_intersect(usable[a][1], usable[b][1]):
            continue
        rows.append(
            {"a": list(usable[a][0].asm), "b": list(usable[b][0].asm), "label": -1}
        )
        made += 1
    return rows


def _synth_pair_rows(synth: SynthCorpus) -> list[dict]:
    return synth.pair_rows()


def _provenance_rows(
    functions: Sequence[FunctionCfg], label_of: Callable[[FunctionCfg], str | None],
    task: str,
) -> list[dict]:
    rows = []
    for fn in functions:
        label = label_of(fn)
        if label is None:
            continue
        lines = [i.raw for b in fn.blocks for i in b.instructions]
        rows.append(
            {
                "function_id": fn.function_id,
                "asm": truncate_function(lines),
                "label": label,
            }
        )
    labels = {r["label"] for r in rows}
    if len(labels) < 2:
        raise InsufficientData(task, 2, len(labels))
    return rows


def _recovery_rows(functions: Sequence[FunctionCfg], min_cover: int = 5) -> list[dict]:
    """Marked-block rows: which instructions belong to the marked one's strand.

    Blocks whose instruction-disjoint strand cover is smaller than
    ``min_cover`` are rejected outright.
    """
    rows = []
    blocks_used = 0
    for fn in functions:
        per_block: dict[str, list[Strand]] = {}
        for strand in extract_function_strands(fn):
            per_block.setdefault(strand.block_id, []).append(strand)
        for block in fn.blocks:
            cover = disjoint_strand_cover(per_block.get(block.block_id, []))
            if len(cover) < min_cover:
                continue
            blocks_used += 1
            lines = [i.raw for i in block.instructions]
            for strand in cover:
                members = set(strand.indices)
                rows.append(
                    {
                        "block_id": f"{fn.function_id}:{block.block_id}",
                        "asm": lines,
                        "marked": strand.anchor,
                        "labels": [
                            1 if i in members else 0 for i in range(len(lines))
                        ],
                    }
                )
    if blocks_used == 0:
        raise InsufficientData("recovery", 1, 0)
    return rows


def build_task_datasets(
    task: str,
    seed: int = 0,
    *,
    strands: Sequence[Strand] | None = None,
    representative_sets: Sequence[RepresentativeSet | None] | None = None,
    functions: Sequence[FunctionCfg] | None = None,
    synth: SynthCorpus | None = None,
    n: int = 1000,
) -> dict[str, list[dict]]:
    """Train/val/test rows for one fine-tuning task.

    Which inputs are required depends on the task; a missing prerequisite
    raises InsufficientData rather than silently emitting nothing.
    """
    if task == "strand-similarity":
        if strands is None or representative_sets is None:
            raise InsufficientData(task, 1, 0)
        rows = strand_similarity_rows(strands, representative_sets, seed)
        key = lambda r: (tuple(r["a"]), tuple(r["b"]))
    elif task == "block-similarity":
        if synth is None:
            raise InsufficientData(task, 1, 0)
        rows = _synth_pair_rows(synth)
        key = lambda r: (tuple(r["a"]), tuple(r["b"]))
    elif task in ("compiler", "optimization"):
        if not functions:
            raise InsufficientData(task, 1, 0)
        picker = (
            (lambda fn: fn.compiler) if task == "compiler"
            else (lambda fn: fn.optimization)
        )
        rows = _provenance_rows(functions, picker, task)
        key = lambda r: tuple(r["asm"])
    elif task == "recovery":
        if not functions:
            raise InsufficientData(task, 1, 0)
        rows = _recovery_rows(functions)
        key = lambda r: (tuple(r["asm"]), r["marked"])
    elif task == "execution":
        if strands is None or representative_sets is None:
            raise InsufficientData(task, 1, 0)
        samples = build_exec_dataset(strands, representative_sets, n, seed=seed)
        if not samples:
            raise InsufficientData(task, 1, 0)
        rows = [s.to_row() for s in samples]
        key = lambda r: r["text"]
    else:
        raise ValueError(f"unknown task {task!r}")
    return split_rows(rows, seed=seed, key=key)


# ── output files ─────────────────────────────────────────────────────────


def write_results_csv(path: str, rows: Sequence[dict], seed: int) -> None:
    """(task, split, metric, k, value, seed) rows; k empty when not applicable."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task", "split", "metric", "k", "value", "seed"])
        for r in rows:
            writer.writerow(
                [
                    r["task"],
                    r.get("split", ""),
                    r["metric"],
                    r.get("k", ""),
                    f"{r['value']:.6f}",
                    seed,
                ]
            )


def write_embeddings_csv(
    path: str,
    ids: Sequence[str],
    groups: Sequence[str],
    embeddings: np.ndarray,
) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "group"] + [f"v{i}" for i in range(embeddings.shape[1])])
        for entry_id, group, vec in zip(ids, groups, embeddings):
            writer.writerow([entry_id, group] + [f"{x:.8f}" for x in vec])
