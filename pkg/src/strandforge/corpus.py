"""Dataset assembly for pretraining and downstream tasks.

Builds the four line-oriented corpora: masked-language samples over
strand text, strand/expression membership pairs (exact 50:50 balance),
concrete-execution samples labeled by evaluating the strand's own
expression, and a synthetic equivalence corpus whose similarity labels
come from comparing representative sets, never from assuming a rewrite
rule is sound.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Sequence

from strandforge.isa import Instruction, MemOp, mem_addr_expr, parse_instruction, render_operand
from strandforge.slicer import Strand
from strandforge.symx import (
    EvalEnv,
    EvalError,
    InputMem,
    InputReg,
    MemTarget,
    PredTarget,
    RegTarget,
    RepresentativeSet,
    SymAssign,
    assign_equal,
    assign_to_text,
    eval_expr,
    execute_instructions,
    to_text,
)
from strandforge.symx.expr import BinOp, Call, Cmp, Extract, UnOp
from strandforge.tokenizer import MASK_ID, SPECIALS, Sample, Vocab

__all__ = [
    "CorpusTooSmall", "IGNORE_INDEX",
    "SsmPair", "MaskedSample", "ExecSample", "ElmSample",
    "SynthStrand", "SynthPair", "SynthCorpus",
    "build_ssm_corpus", "mask_tokens", "build_exec_dataset",
    "build_elm_corpus", "synth_equivalence_corpus", "random_strands",
    "split_rows", "write_jsonl", "read_jsonl",
]

IGNORE_INDEX = -1


class CorpusTooSmall(ValueError):
    """Not enough distinct material to build the requested corpus."""


@dataclass(frozen=True)
class SsmPair:
    strand_id: str
    asm: tuple[str, ...]
    symexpr: str
    label: int  # 1 iff symexpr belongs to the strand's own set

    def to_row(self) -> dict:
        return {
            "strand_id": self.strand_id,
            "asm": list(self.asm),
            "symexpr": self.symexpr,
            "label": self.label,
        }


@dataclass(frozen=True)
class ElmSample:
    strand_id: str
    asm: tuple[str, ...]
    symexpr: str

    def to_row(self) -> dict:
        return {
            "strand_id": self.strand_id,
            "asm": list(self.asm),
            "symexpr": self.symexpr,
        }


@dataclass(frozen=True)
class MaskedSample:
    """Token ids after masking plus per-position recovery labels.

    ``labels[i]`` is the original id where position i was selected for
    prediction and IGNORE_INDEX everywhere else.
    """

    input_ids: tuple[int, ...]
    labels: tuple[int, ...]


@dataclass(frozen=True)
class ExecSample:
    strand_id: str
    asm: tuple[str, ...]
    assignments: tuple[str, ...]
    query: str | None  # register outputs only; predicates have no query
    label: int  # 0..200

    @property
    def text(self) -> str:
        parts = [" ".join(self.asm), " ; ".join(self.assignments)]
        if self.query is not None:
            parts.append(self.query)
        return " [SEP] ".join(parts)

    def to_row(self) -> dict:
        return {
            "strand_id": self.strand_id,
            "asm": list(self.asm),
            "assignments": list(self.assignments),
            "query": self.query,
            "label": self.label,
            "text": self.text,
        }


def _set_texts(reps: RepresentativeSet | None) -> frozenset[str]:
    if reps is None:
        return frozenset()
    return frozenset(assign_to_text(a) for a in reps.assigns)


def build_ssm_corpus(
    strands: Sequence[Strand],
    representative_sets: Sequence[RepresentativeSet | None],
    seed: int = 0,
) -> list[SsmPair]:
    """One positive and one negative membership pair per executable strand.

    The positive expression is drawn uniformly from the strand's own set;
    the negative uniformly from the whole corpus, resampled while it comes
    from this strand or matches any of its members. Exact duplicates are
    removed and the tail trimmed so labels stay exactly balanced.
    """
    if len(strands) != len(representative_sets):
        raise ValueError("strands and representative sets must align")
    usable = [
        (i, s, r)
        for i, (s, r) in enumerate(zip(strands, representative_sets))
        if r is not None and r.assigns
    ]
    if len({_set_texts(r) for _, _, r in usable}) < 2:
        raise CorpusTooSmall("need at least 2 distinct representative sets")

    pool: list[tuple[int, SymAssign]] = [
        (i, a) for i, _, r in usable for a in r.assigns
    ]
    pairs: list[SsmPair] = []
    for i, strand, reps in usable:
        if not strand.executable:
            continue
        rng = random.Random(seed ^ i)
        own = list(reps.assigns)
        positive = rng.choice(own)
        negative = None
        for _ in range(1000):
            owner, cand = rng.choice(pool)
            if owner == i:
                continue
            if any(assign_equal(cand, m) for m in own):
                continue
            negative = cand
            break
        if negative is None:  # fall back to a deterministic scan
            for owner, cand in pool:
                if owner != i and not any(assign_equal(cand, m) for m in own):
                    negative = cand
                    break
        if negative is None:
            continue
        pairs.append(SsmPair(strand.strand_id, strand.asm, assign_to_text(positive), 1))
        pairs.append(SsmPair(strand.strand_id, strand.asm, assign_to_text(negative), 0))

    seen: set[tuple] = set()
    unique: list[SsmPair] = []
    for p in pairs:
        key = (p.asm, p.symexpr, p.label)
        if key not in seen:
            seen.add(key)
            unique.append(p)

    # dedup can skew the balance; drop late-comers of the majority label
    pos = sum(1 for p in unique if p.label == 1)
    neg = len(unique) - pos
    balanced: list[SsmPair] = []
    excess = {1: pos - min(pos, neg), 0: neg - min(pos, neg)}
    for p in reversed(unique):
        if excess[p.label] > 0:
            excess[p.label] -= 1
        else:
            balanced.append(p)
    balanced.reverse()
    return balanced


def mask_tokens(
    sample: Sample,
    vocab: Vocab,
    mp: float = 0.3,
    seed: int = 0,
    rng: random.Random | None = None,
) -> MaskedSample:
    """Independently select non-special tokens with probability ``mp``.

    Selected positions become [MASK] / a random non-special token / stay
    unchanged with probability 0.8 / 0.1 / 0.1, and only those positions
    carry labels.
    """
    if rng is None:
        rng = random.Random(seed)
    n_special = len(SPECIALS)
    input_ids = list(sample.token_ids)
    labels = [IGNORE_INDEX] * len(input_ids)
    for pos, token in enumerate(sample.token_ids):
        if token < n_special:
            continue
        if rng.random() >= mp:
            continue
        labels[pos] = token
        branch = rng.random()
        if branch < 0.8:
            input_ids[pos] = MASK_ID
        elif branch < 0.9:
            input_ids[pos] = rng.randrange(n_special, len(vocab))
    return MaskedSample(tuple(input_ids), tuple(labels))


def _eval_leaves(expr) -> Iterator[InputReg | InputMem]:
    """Distinct leaves whose values evaluation needs, in first-seen order.

    Memory cells are opaque at evaluation time (their value is keyed by
    cell text), so the walk does not descend into addresses.
    """
    seen: set[tuple] = set()

    def walk(e) -> Iterator[InputReg | InputMem]:
        if isinstance(e, InputReg):
            key = ("reg", e.name)
            if key not in seen:
                seen.add(key)
                yield e
            return
        if isinstance(e, InputMem):
            key = ("mem", to_text(e), e.width)
            if key not in seen:
                seen.add(key)
                yield e
            return
        if isinstance(e, BinOp):
            yield from walk(e.lhs)
            yield from walk(e.rhs)
        elif isinstance(e, UnOp):
            yield from walk(e.operand)
        elif isinstance(e, Extract):
            yield from walk(e.operand)
        elif isinstance(e, Cmp):
            yield from walk(e.lhs)
            yield from walk(e.rhs)
        elif isinstance(e, Call):
            for a in e.args:
                yield from walk(a)

    yield from walk(expr)


def _operand_renderings(instructions: Sequence[Instruction]) -> dict[str, str]:
    """Map canonical address text to the assembly-style operand text."""
    out: dict[str, str] = {}
    for instr in instructions:
        for op in instr.operands:
            if isinstance(op, MemOp) and not op.disp_imm:
                try:
                    key = to_text(mem_addr_expr(op))
                except Exception:
                    continue
                out.setdefault(key, render_operand(op))
    return out


def _anchor_assign(strand: Strand, reps: RepresentativeSet) -> SymAssign | None:
    if strand.role == "predicate":
        for a in reps.assigns:
            if isinstance(a.target, PredTarget):
                return a
        return None
    output = strand.output
    for a in reps.assigns:
        if isinstance(a.target, RegTarget) and getattr(output, "family", None) == a.target.name:
            return a
        if isinstance(a.target, MemTarget) and getattr(output, "text", None) == f"*({to_text(a.target.addr)})":
            return a
    return None


def build_exec_dataset(
    strands: Sequence[Strand],
    representative_sets: Sequence[RepresentativeSet | None],
    n: int,
    seed: int = 0,
) -> list[ExecSample]:
    """Samples pairing a strand with concrete inputs and its evaluated output.

    Inputs are uniform in [0, 100]; a strand is dropped entirely if any of
    its sampled outputs exceeds 200 or fails to evaluate. Only register
    outputs carry a query; predicates are labeled {0, 1} in the same class
    space.
    """
    if len(strands) != len(representative_sets):
        raise ValueError("strands and representative sets must align")
    candidates = []
    for i, (s, r) in enumerate(zip(strands, representative_sets)):
        if r is None or not r.assigns or not s.executable:
            continue
        if s.role == "call":
            continue
        anchor = _anchor_assign(s, r)
        if anchor is None:
            continue
        if s.role == "value" and not isinstance(anchor.target, RegTarget):
            continue  # memory outputs have no query form
        candidates.append((i, s, anchor))
    if not candidates:
        return []

    per_strand = -(-n // len(candidates))  # ceil division
    collected: list[list[ExecSample]] = []
    for i, strand, anchor in candidates:
        rng = random.Random(seed ^ i)
        renderings = _operand_renderings(strand.instructions)
        samples: list[ExecSample] = []
        ok = True
        for _ in range(per_strand):
            assignments: list[str] = []
            env = EvalEnv()
            for leaf in _eval_leaves(anchor.expr):
                value = rng.randint(0, 100)
                if isinstance(leaf, InputReg):
                    env.regs[leaf.name] = value
                    assignments.append(f"{leaf.name} = {value}")
                else:
                    cell = to_text(leaf)
                    env.mem[cell] = value
                    shown = renderings.get(to_text(leaf.addr), cell)
                    assignments.append(f"{shown} = {value}")
            try:
                label = eval_expr(anchor.expr, env)
            except EvalError:
                ok = False
                break
            if label > 200:
                ok = False
                break
            query = anchor.target.name if isinstance(anchor.target, RegTarget) else None
            samples.append(
                ExecSample(strand.strand_id, strand.asm, tuple(assignments), query, label)
            )
        if ok:
            collected.append(samples)

    out: list[ExecSample] = []
    for round_idx in range(per_strand):
        for samples in collected:
            if round_idx < len(samples):
                out.append(samples[round_idx])
            if len(out) == n:
                return out
    return out


def build_elm_corpus(
    strands: Sequence[Strand],
    representative_sets: Sequence[RepresentativeSet | None],
) -> list[ElmSample]:
    """One sample per (strand, member expression), exact duplicates removed."""
    seen: set[tuple] = set()
    out: list[ElmSample] = []
    for strand, reps in zip(strands, representative_sets):
        if reps is None:
            continue
        for a in reps.assigns:
            text = assign_to_text(a)
            key = (strand.asm, text)
            if key not in seen:
                seen.add(key)
                out.append(ElmSample(strand.strand_id, strand.asm, text))
    return out


@dataclass(frozen=True)
class SynthStrand:
    strand_id: str
    asm: tuple[str, ...]
    reps: RepresentativeSet
    executable: bool = True


@dataclass(frozen=True)
class SynthPair:
    a: int  # index into SynthCorpus.strands
    b: int
    label: int  # +1 similar, -1 dissimilar


@dataclass(frozen=True)
class SynthCorpus:
    strands: tuple[SynthStrand, ...]
    pairs: tuple[SynthPair, ...]

    def pair_rows(self) -> list[dict]:
        return [
            {
                "a": list(self.strands[p.a].asm),
                "b": list(self.strands[p.b].asm),
                "label": p.label,
            }
            for p in self.pairs
        ]


_SYNTH_REGS = (
    "rax", "rbx", "rcx", "rdx", "rsi", "rdi",
    "r8", "r9", "r10", "r11", "r12", "r13", "r14", "r15",
)


_SYNTH_MASKS = (
    3, 7, 15, 31, 63, 127, 255, 511,
    1023, 2047, 4095, 8191, 16383, 32767, 65535, 131071,
)


def _synth_const(kind: int, idx: int) -> int:
    """Distinctive constant for a template group, disjoint across kinds."""
    return 16 + 2 * kind + 16 * (idx % 16)


def _synth_group(rng: random.Random, group: int) -> list[list[str]]:
    """Variant assembly listings that should share an output expression.

    Each group carries a distinctive small constant visible in both the
    assembly and the expression, so membership stays recognisable from the
    surface text once register choices collide between groups.  Constants
    come from 16-value pools cycled by group index; pool values are even
    and distinct mod 16 so no two kinds ever share one, and the and-mask
    kind uses odd all-ones masks that cannot collide with any pool.
    """
    dst, src1, src2, tmp = rng.sample(_SYNTH_REGS, 4)
    kind = group % 8
    idx = group // 8
    const = _synth_const(kind, idx)
    other = next(r for r in _SYNTH_REGS if r not in (dst, src1, src2, tmp))
    if kind == 0:  # address-form multiply-add vs explicit arithmetic
        scale = rng.choice((2, 4, 8))
        return [
            [f"lea {dst}, [{src1} + {src2}*{scale} + {const}]"],
            [f"imul {dst}, {src2}, {scale}", f"add {dst}, {src1}", f"add {dst}, {const}"],
            [
                f"mov {tmp}, {src2}",
                f"imul {dst}, {tmp}, {scale}",
                f"add {dst}, {src1}",
                f"add {dst}, {const}",
            ],
        ]
    if kind == 1:  # constant addition in either operand order
        return [
            [f"mov {dst}, {src1}", f"add {dst}, {const}"],
            [f"mov {dst}, {const}", f"add {dst}, {src1}"],
            [f"lea {dst}, [{src1} + {const}]"],
        ]
    if kind == 2:  # value threaded through a renamed intermediate
        return [
            [f"mov {dst}, {src1}", f"add {dst}, {src2}", f"add {dst}, {const}"],
            [
                f"mov {tmp}, {src1}",
                f"mov {dst}, {tmp}",
                f"add {dst}, {src2}",
                f"add {dst}, {const}",
            ],
        ]
    if kind == 3:  # dead temporary renamed around a bit mask
        mask = _SYNTH_MASKS[idx % len(_SYNTH_MASKS)]
        return [
            [f"mov {dst}, {src1}", f"and {dst}, {mask}"],
            [f"mov {tmp}, {src1}", f"and {tmp}, {mask}", f"mov {dst}, {tmp}"],
            [f"mov {other}, {src1}", f"and {other}, {mask}", f"mov {dst}, {other}"],
        ]
    if kind == 4:  # base-free scaled address vs multiply then add
        scale = rng.choice((2, 4, 8))
        return [
            [f"lea {dst}, [{src2}*{scale} + {const}]"],
            [f"imul {dst}, {src2}, {scale}", f"add {dst}, {const}"],
            [f"mov {tmp}, {src2}", f"imul {dst}, {tmp}, {scale}", f"add {dst}, {const}"],
        ]
    if kind == 5:  # two constants added in any order
        second = const + 1
        return [
            [f"mov {dst}, {src1}", f"add {dst}, {const}", f"add {dst}, {second}"],
            [f"mov {dst}, {const}", f"add {dst}, {src1}", f"add {dst}, {second}"],
            [f"lea {dst}, [{src1} + {const}]", f"add {dst}, {second}"],
        ]
    if kind == 6:  # two-hop rename of a single source
        return [
            [f"mov {tmp}, {src1}", f"mov {dst}, {tmp}", f"add {dst}, {const}"],
            [f"mov {other}, {src1}", f"mov {dst}, {other}", f"add {dst}, {const}"],
            [f"mov {dst}, {src1}", f"add {dst}, {const}"],
        ]
    return [  # dead temporary renamed around an xor
        [f"mov {dst}, {src1}", f"xor {dst}, {const}"],
        [f"mov {tmp}, {src1}", f"xor {tmp}, {const}", f"mov {dst}, {tmp}"],
        [f"mov {other}, {src1}", f"xor {other}, {const}", f"mov {dst}, {other}"],
    ]


def _sets_intersect(a: RepresentativeSet, b: RepresentativeSet) -> bool:
    return any(assign_equal(x, y) for x in a.assigns for y in b.assigns)


def synth_equivalence_corpus(
    n: int, seed: int = 0, min_strands: int | None = None
) -> SynthCorpus:
    """Generate ``n`` labeled strand pairs from rewrite templates.

    Labels are computed, not assumed: +1 iff the two strands'
    representative sets intersect under structural equality.  Groups keep
    coming until the catalogue holds ``min_strands`` strands (default
    ``4 * n``) so that small pair requests still produce enough distinct
    strands to train on; the requested pairs are then sampled across the
    whole catalogue.
    """
    strands: list[SynthStrand] = []
    group_members: list[list[int]] = []
    positives: list[SynthPair] = []
    rng = random.Random(seed)
    floor = 4 * n if min_strands is None else min_strands

    want_pos = -(-n // 2)
    group = 0
    while len(positives) < want_pos or len(strands) < floor:
        grp_rng = random.Random(seed ^ (0x5EED + group))
        members: list[int] = []
        for v, lines in enumerate(_synth_group(grp_rng, group)):
            instrs = [parse_instruction(t, index=i) for i, t in enumerate(lines)]
            reps = execute_instructions(instrs, strand_id=f"synth:{group}:{v}")
            members.append(len(strands))
            strands.append(SynthStrand(f"synth:{group}:{v}", tuple(lines), reps))
        group_members.append(members)
        for ai in range(len(members)):
            for bi in range(ai + 1, len(members)):
                a, b = members[ai], members[bi]
                if _sets_intersect(strands[a].reps, strands[b].reps):
                    positives.append(SynthPair(a, b, 1))
        group += 1

    if len(positives) > want_pos:
        positives = rng.sample(positives, want_pos)

    negatives: list[SynthPair] = []
    want_neg = n - min(len(positives), want_pos)
    attempts = 0
    while len(negatives) < want_neg and attempts < want_neg * 50:
        attempts += 1
        ga, gb = rng.sample(range(len(group_members)), 2)
        a = rng.choice(group_members[ga])
        b = rng.choice(group_members[gb])
        if _sets_intersect(strands[a].reps, strands[b].reps):
            continue
        negatives.append(SynthPair(a, b, -1))

    pairs = positives[:want_pos] + negatives
    return SynthCorpus(tuple(strands), tuple(pairs[:n]))


_RANDOM_DISPS = tuple(range(-128, 0, 8))
_WIDTH_NAMES = {1: "byte", 2: "word", 4: "dword", 8: "qword"}
_SUB_NAMES = {
    "rax": {8: "rax", 4: "eax", 2: "ax", 1: "al"},
    "rbx": {8: "rbx", 4: "ebx", 2: "bx", 1: "bl"},
    "rcx": {8: "rcx", 4: "ecx", 2: "cx", 1: "cl"},
    "rdx": {8: "rdx", 4: "edx", 2: "dx", 1: "dl"},
    "rsi": {8: "rsi", 4: "esi", 2: "si", 1: "sil"},
    "rdi": {8: "rdi", 4: "edi", 2: "di", 1: "dil"},
    "r8": {8: "r8", 4: "r8d", 2: "r8w", 1: "r8b"},
    "r9": {8: "r9", 4: "r9d", 2: "r9w", 1: "r9b"},
}
_CC_AFTER = {
    "cmp": ("e", "ne", "l", "le", "g", "ge", "b", "be", "a", "ae", "s", "ns"),
    "test": ("e", "ne", "s", "ns", "l", "ge", "le", "g"),
    "add": ("e", "ne", "s", "ns", "b", "ae"),
    "sub": ("e", "ne", "l", "le", "g", "ge", "b", "be", "a", "ae", "s", "ns"),
    "inc": ("e", "ne", "s", "ns"),
    "dec": ("e", "ne", "s", "ns"),
    "shl": ("e", "ne", "s", "ns"),
    "shr": ("e", "ne", "s", "ns"),
}


def random_strands(n: int, seed: int = 0) -> list[list[Instruction]]:
    """Random short executable strands for differential stress testing.

    Memory stays rbp-relative at distinct 8-aligned displacements, each
    displacement keeps one access width for the whole strand, and rbp/rsp
    are never overwritten, so symbolic and concrete memory keying agree.
    """
    out: list[list[Instruction]] = []
    for idx in range(n):
        rng = random.Random(seed ^ idx)
        families = list(_SUB_NAMES)
        rng.shuffle(families)
        disp_width: dict[int, int] = {}

        def mem_operand(width: int) -> tuple[str, int]:
            disp = rng.choice(_RANDOM_DISPS)
            width = disp_width.setdefault(disp, width)
            return f"{_WIDTH_NAMES[width]} ptr [rbp - {-disp}]", width

        def reg(width: int) -> str:
            return _SUB_NAMES[rng.choice(families)][width]

        lines: list[str] = []
        body = rng.randrange(2, 6)
        for _ in range(body):
            width = rng.choice((8, 8, 4, 4, 2, 1))
            roll = rng.random()
            if roll < 0.22:
                mem, w = mem_operand(width)
                lines.append(f"mov {reg(w)}, {mem}")
            elif roll < 0.34:
                mem, w = mem_operand(width)
                lines.append(f"mov {mem}, {reg(w)}")
            elif roll < 0.46:
                op = rng.choice(("add", "sub", "and", "or", "xor"))
                if rng.random() < 0.5:
                    lines.append(f"{op} {reg(width)}, {reg(width)}")
                else:
                    lines.append(f"{op} {reg(width)}, {rng.randrange(0, 1 << 7)}")
            elif roll < 0.56:
                lines.append(f"mov {reg(width)}, {rng.randrange(0, 1 << 16)}")
            elif roll < 0.64:
                lines.append(f"{rng.choice(('inc', 'dec', 'neg', 'not'))} {reg(width)}")
            elif roll < 0.72:
                w = max(width, 2)
                count = rng.randrange(1, w * 8)
                lines.append(f"{rng.choice(('shl', 'shr', 'sar'))} {_SUB_NAMES[rng.choice(families)][w]}, {count}")
            elif roll < 0.80:
                wide = rng.choice((8, 4))
                narrow = rng.choice((1, 2)) if wide == 4 else rng.choice((1, 2, 4))
                mn = "movzx" if rng.random() < 0.5 else "movsx"
                if wide == 8 and narrow == 4:
                    lines.append(f"movsxd {reg(8)}, {reg(4)}")
                else:
                    lines.append(f"{mn} {reg(wide)}, {reg(narrow)}")
            elif roll < 0.88:
                w = max(width, 2)
                if rng.random() < 0.5:
                    lines.append(f"imul {_SUB_NAMES[rng.choice(families)][w]}, {_SUB_NAMES[rng.choice(families)][w]}")
                else:
                    lines.append(f"imul {_SUB_NAMES[rng.choice(families)][w]}, {_SUB_NAMES[rng.choice(families)][w]}, {rng.randrange(2, 64)}")
            elif roll < 0.94:
                scale = rng.choice((1, 2, 4, 8))
                w = rng.choice((8, 4))
                lines.append(
                    f"lea {reg(w)}, [{_SUB_NAMES[rng.choice(families)][w]}"
                    f" + {_SUB_NAMES[rng.choice(families)][w]}*{scale}"
                    f" + {rng.randrange(0, 64)}]"
                )
            else:
                lines.append(f"xchg {reg(width)}, {reg(width)}")

        if rng.random() < 0.35:  # end some strands on a conditional jump
            width = rng.choice((8, 4))
            setter = rng.choice(("cmp", "test", "add", "sub"))
            if setter in ("cmp", "test"):
                lines.append(f"{setter} {reg(width)}, {reg(width)}")
            else:
                lines.append(f"{setter} {reg(width)}, {rng.randrange(1, 128)}")
            cc = rng.choice(_CC_AFTER[setter])
            lines.append(f"j{cc} MEM")

        out.append([parse_instruction(t, index=i) for i, t in enumerate(lines)])
    return out


def split_rows(
    rows: Sequence[dict],
    seed: int = 0,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    key: Callable[[dict], str] | None = None,
) -> dict[str, list[dict]]:
    """Deterministic train/val/test split keeping duplicate texts together.

    Rows sharing a key always land in the same split, so no sample text
    can appear in both fine-tune and test data.
    """
    if key is None:
        def key(row: dict) -> str:
            payload = {k: v for k, v in row.items() if k != "strand_id"}
            return json.dumps(payload, sort_keys=True)

    groups: dict[str, list[int]] = {}
    for i, row in enumerate(rows):
        groups.setdefault(key(row), []).append(i)
    names = list(groups)
    random.Random(seed).shuffle(names)

    total = len(rows)
    splits = {"train": [], "val": [], "test": []}
    targets = dict(zip(splits, ratios))
    for name in names:
        counts = {s: len(v) for s, v in splits.items()}
        deficit = {
            s: targets[s] * total - counts[s] for s in splits
        }
        best = max(splits, key=lambda s: (deficit[s], s == "train", s == "val"))
        splits[best].extend(groups[name])
    return {
        s: [rows[i] for i in sorted(indices)] for s, indices in splits.items()
    }


def write_jsonl(path: str, rows: Iterable[dict]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
            count += 1
    return count


def read_jsonl(path: str) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
