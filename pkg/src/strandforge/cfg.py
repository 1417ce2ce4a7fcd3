"""Control-flow-graph ingestion.

Functions arrive as JSON lines, one function per line::

    {"function_id": "f", "binary_id": "b", "compiler": "gcc",
     "optimization": "O2", "libc_symbols": {"0x400520": "fprintf"},
     "blocks": [{"block_id": "b0", "successors": [],
                 "instructions": [{"addr": "0x400400", "text": "mov eax, 5"}]}]}

Blocks hold straight-line code: at most one control transfer, always last.
Successor ids must name blocks of the same function. Call targets resolve
against the function's libc symbol map; unresolved direct targets are user
functions and register/memory targets are indirect.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from strandforge.isa import (
    AsmSyntaxError,
    ImmOp,
    Instruction,
    LabelOp,
    MemOp,
    RegOp,
    parse_instruction,
)

__all__ = [
    "BasicBlock", "FunctionCfg", "CallKind", "ValidationError",
    "load_functions", "dump_functions", "resolve_call_target",
]


class ValidationError(ValueError):
    """Structurally invalid function record."""


@dataclass(frozen=True, slots=True)
class CallKind:
    """Resolution of a call target: libc, user function, or indirect."""

    kind: str  # "libc" | "user" | "indirect"
    name: str | None = None


@dataclass(slots=True)
class BasicBlock:
    block_id: str
    instructions: list[Instruction]
    successors: list[str] = field(default_factory=list)

    @property
    def terminator_kind(self) -> str:
        if not self.instructions:
            return "fallthrough"
        return self.instructions[-1].terminator_kind or "fallthrough"


@dataclass(slots=True)
class FunctionCfg:
    function_id: str
    binary_id: str
    blocks: list[BasicBlock]
    compiler: str | None = None
    optimization: str | None = None
    libc_symbols: dict[int, str] = field(default_factory=dict)

    def block(self, block_id: str) -> BasicBlock:
        for b in self.blocks:
            if b.block_id == block_id:
                return b
        raise KeyError(block_id)

    def instruction_count(self) -> int:
        return sum(len(b.instructions) for b in self.blocks)


def _parse_block(raw: dict, where: str) -> BasicBlock:
    instructions: list[Instruction] = []
    for i, entry in enumerate(raw.get("instructions", ())):
        addr = entry.get("addr")
        try:
            instr = parse_instruction(
                entry["text"],
                index=i,
                addr=int(addr, 16) if isinstance(addr, str) else addr,
            )
        except (AsmSyntaxError, KeyError, ValueError) as err:
            raise ValidationError(f"{where}: instruction {i}: {err}") from err
        instructions.append(instr)
    for i, instr in enumerate(instructions[:-1]):
        if instr.terminator_kind is not None:
            raise ValidationError(
                f"{where}: control transfer {instr.mnemonic!r} at position "
                f"{i} is not last in its block"
            )
    return BasicBlock(
        block_id=str(raw["block_id"]),
        instructions=instructions,
        successors=[str(s) for s in raw.get("successors", ())],
    )


def parse_function(raw: dict) -> FunctionCfg:
    fid = str(raw.get("function_id", "?"))
    blocks = [
        _parse_block(b, f"function {fid}, block {b.get('block_id', i)}")
        for i, b in enumerate(raw.get("blocks", ()))
    ]
    ids = {b.block_id for b in blocks}
    if len(ids) != len(blocks):
        raise ValidationError(f"function {fid}: duplicate block ids")
    for b in blocks:
        for succ in b.successors:
            if succ not in ids:
                raise ValidationError(
                    f"function {fid}: block {b.block_id} names unknown "
                    f"successor {succ!r}"
                )
    symbols: dict[int, str] = {}
    for key, name in (raw.get("libc_symbols") or {}).items():
        try:
            symbols[int(str(key), 16)] = str(name)
        except ValueError as err:
            raise ValidationError(
                f"function {fid}: bad libc symbol address {key!r}"
            ) from err
    return FunctionCfg(
        function_id=fid,
        binary_id=str(raw.get("binary_id", "")),
        blocks=blocks,
        compiler=raw.get("compiler"),
        optimization=raw.get("optimization"),
        libc_symbols=symbols,
    )


def load_functions(path: str) -> Iterator[FunctionCfg]:
    """Stream functions from a JSONL file, validating each record."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as err:
                raise ValidationError(f"{path}:{lineno}: bad JSON: {err}") from err
            yield parse_function(raw)


def function_to_json(fn: FunctionCfg) -> dict:
    return {
        "function_id": fn.function_id,
        "binary_id": fn.binary_id,
        **({"compiler": fn.compiler} if fn.compiler else {}),
        **({"optimization": fn.optimization} if fn.optimization else {}),
        "libc_symbols": {hex(a): n for a, n in sorted(fn.libc_symbols.items())},
        "blocks": [
            {
                "block_id": b.block_id,
                "successors": list(b.successors),
                "instructions": [
                    {
                        **({"addr": hex(i.addr)} if i.addr is not None else {}),
                        "text": i.raw,
                    }
                    for i in b.instructions
                ],
            }
            for b in fn.blocks
        ],
    }


def dump_functions(functions: Iterable[FunctionCfg], path: str) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for fn in functions:
            fh.write(json.dumps(function_to_json(fn), sort_keys=True) + "\n")
            count += 1
    return count


def resolve_call_target(instr: Instruction, fn: FunctionCfg) -> CallKind:
    """Classify a call's target against the function's libc symbol map."""
    if not instr.is_call or not instr.operands:
        return CallKind("indirect")
    op = instr.operands[0]
    if isinstance(op, (RegOp, MemOp)):
        return CallKind("indirect")
    if isinstance(op, ImmOp):
        addr = op.value
    elif isinstance(op, LabelOp):
        if op.target is None:
            # Already-symbolic target: a name survives as a libc-style callee.
            return CallKind("libc", op.name)
        addr = op.target
    else:
        return CallKind("indirect")
    if addr in fn.libc_symbols:
        return CallKind("libc", fn.libc_symbols[addr])
    return CallKind("user")
