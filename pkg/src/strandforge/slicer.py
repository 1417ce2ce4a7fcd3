"""Backward def-use slicing of basic blocks into strands.

A block output is a register or memory location whose final access in the
block is a write; flags never count (the jump condition consumes them).
Every output anchors a Value strand at its last writer; a conditional jump
anchors a Predicate strand; a call anchors a Call strand whose slice seeds
are the argument registers. Each strand is the backward transitive closure
of def-use dependencies from its anchor, preserving instruction order.
"""
from __future__ import annotations

from dataclasses import dataclass

from strandforge.cfg import BasicBlock, FunctionCfg
from strandforge.isa import FlagLoc, Instruction, Location, MemLoc, RegLoc, locations_overlap

__all__ = [
    "Strand", "block_outputs", "extract_strands", "extract_function_strands",
    "disjoint_strand_cover", "trace_outputs",
]


@dataclass(frozen=True, slots=True)
class Strand:
    """An ordered subsequence of one block plus its reason for existing."""

    strand_id: str
    function_id: str
    block_id: str
    role: str  # "value" | "predicate" | "call"
    anchor: int  # block-local index of the anchoring instruction
    output: Location | None
    instructions: tuple[Instruction, ...]
    indices: tuple[int, ...]
    executable: bool

    @property
    def asm(self) -> tuple[str, ...]:
        return tuple(i.raw for i in self.instructions)

    def __len__(self) -> int:
        return len(self.instructions)


def trace_outputs(instructions: list[Instruction]) -> list[tuple[Location, int]]:
    """Locations whose final access in the sequence is a write.

    Returns (location, position-of-last-writer) pairs in a deterministic
    order: registers alphabetically, then memory by address text.
    """
    tracked: dict[Location, tuple[str, int]] = {}
    for pos, instr in enumerate(instructions):
        for use in instr.uses:
            for loc in tracked:
                if locations_overlap(loc, use):
                    tracked[loc] = ("read", tracked[loc][1])
        for d in instr.defs:
            if isinstance(d, FlagLoc):
                continue
            for loc in [k for k in tracked if locations_overlap(k, d)]:
                del tracked[loc]
            tracked[d] = ("write", pos)
    outs = [(loc, pos) for loc, (kind, pos) in tracked.items() if kind == "write"]
    return sorted(outs, key=_output_order)


def _output_order(item: tuple[Location, int]) -> tuple:
    loc = item[0]
    if isinstance(loc, RegLoc):
        return (0, loc.family, loc.lo)
    assert isinstance(loc, MemLoc)
    return (1, loc.text)


def block_outputs(block: BasicBlock) -> list[tuple[Location, int]]:
    return trace_outputs(block.instructions)


def _backward_slice(
    instructions: list[Instruction], anchor: int, pending: set[Location]
) -> list[int]:
    selected = {anchor}
    live = set(pending)
    for i in range(anchor - 1, -1, -1):
        defs = instructions[i].defs
        hit = {p for p in live for d in defs if locations_overlap(d, p)}
        if not hit:
            continue
        selected.add(i)
        live -= hit
        live |= set(instructions[i].uses)
    return sorted(selected)


def _loc_tag(loc: Location) -> str:
    if isinstance(loc, RegLoc):
        return loc.name
    if isinstance(loc, MemLoc):
        return loc.text.replace(" ", "")
    return loc.flag.value


def extract_strands(block: BasicBlock, function_id: str = "") -> list[Strand]:
    """All strands of one block: value strands first, then predicate/call."""
    instrs = block.instructions
    strands: list[Strand] = []

    def build(role: str, anchor: int, seeds: set[Location], output: Location | None) -> Strand:
        indices = _backward_slice(instrs, anchor, seeds)
        chosen = tuple(instrs[i] for i in indices)
        tag = f":{_loc_tag(output)}" if output is not None else ""
        return Strand(
            strand_id=f"{function_id}:{block.block_id}:{role}:{anchor}{tag}",
            function_id=function_id,
            block_id=block.block_id,
            role=role,
            anchor=anchor,
            output=output,
            instructions=chosen,
            indices=tuple(indices),
            executable=all(i.exec_ok for i in chosen),
        )

    for loc, writer in block_outputs(block):
        strands.append(build("value", writer, set(instrs[writer].uses), loc))
    if instrs:
        last = len(instrs) - 1
        terminator = instrs[last]
        if terminator.is_jcc:
            strands.append(build("predicate", last, set(terminator.uses), None))
        elif terminator.is_call:
            strands.append(build("call", last, set(terminator.uses), None))
    return strands


def extract_function_strands(fn: FunctionCfg) -> list[Strand]:
    out: list[Strand] = []
    for block in fn.blocks:
        out.extend(extract_strands(block, fn.function_id))
    return out


def disjoint_strand_cover(strands: list[Strand]) -> list[Strand]:
    """Greedy instruction-disjoint subset: larger strands first, then by
    anchor position, then id; a strand is kept when it shares no
    instruction index with anything already kept."""
    ordered = sorted(strands, key=lambda s: (-len(s.indices), s.anchor, s.strand_id))
    taken: set[int] = set()
    cover: list[Strand] = []
    for strand in ordered:
        if taken.isdisjoint(strand.indices):
            cover.append(strand)
            taken.update(strand.indices)
    return cover
