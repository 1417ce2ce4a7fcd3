"""Text preprocessing for assembly and symbolic-expression text.

Both passes run before tokenization and are idempotent. Instruction
normalization works structurally on parsed instructions: large immediates
and displacements collapse to ``IMM``, jump targets collapse to ``MEM``,
direct calls get their resolved name (libc) or the generic ``func``
(user code), and everything renders in decimal. Register names are left
alone here; assembly keeps its narrow names.

Symbolic-expression normalization is a token-level text pass: every
register name widens to its 64-bit family form, large integer literals
collapse to ``IMM``, hex literals become decimal first, and float
literals lose digits past two decimals.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, replace

from strandforge.cfg import CallKind
from strandforge.isa import (
    ImmOp,
    Instruction,
    LabelOp,
    MemOp,
    Operand,
    parse_instruction,
    render_instruction,
)
from strandforge.regs import register_by_name

__all__ = [
    "NormRules", "DEFAULT_RULES",
    "normalize_instruction", "normalize_asm", "normalize_symexpr",
]


@dataclass(frozen=True, slots=True)
class NormRules:
    """Thresholds and replacement tokens for both normalization passes."""

    imm_threshold: int = 5000
    jump_token: str = "MEM"
    imm_token: str = "IMM"
    user_call_token: str = "func"
    float_decimals: int = 2

    def __post_init__(self) -> None:
        if self.imm_threshold <= 0:
            raise ValueError("imm_threshold must be positive")
        for token in (self.jump_token, self.imm_token, self.user_call_token):
            if not token:
                raise ValueError("replacement tokens must be non-empty")


DEFAULT_RULES = NormRules()


def _norm_operand(op: Operand, rules: NormRules) -> Operand:
    if isinstance(op, ImmOp):
        if op.value is not None and abs(op.value) > rules.imm_threshold:
            return ImmOp(None)
        return op
    if isinstance(op, MemOp):
        if not op.disp_imm and abs(op.disp) > rules.imm_threshold:
            return replace(op, disp=0, disp_imm=True)
        return op
    return op


def normalize_instruction(
    instr: Instruction,
    call_kind: CallKind | None = None,
    rules: NormRules = DEFAULT_RULES,
) -> str:
    """Preprocessed text of one instruction.

    ``call_kind`` drives call-target substitution; without it, an
    already-symbolic target is kept as written (which makes the pass
    idempotent on its own output).
    """
    if instr.terminator_kind in ("jmp", "jcc"):
        return f"{instr.mnemonic} {rules.jump_token}"
    if instr.is_call and instr.operands:
        target = instr.operands[0]
        if call_kind is not None:
            if call_kind.kind == "libc" and call_kind.name:
                return f"call {call_kind.name}"
            if call_kind.kind == "user":
                return f"call {rules.user_call_token}"
        elif isinstance(target, LabelOp):
            name = target.name
            if target.target is not None or name.startswith("0x"):
                name = rules.user_call_token
            return f"call {name}"
        # indirect: the operand renders like any other, thresholded
        normed = tuple(_norm_operand(op, rules) for op in instr.operands)
        return render_instruction(replace(instr, operands=normed))
    normed = tuple(_norm_operand(op, rules) for op in instr.operands)
    return render_instruction(replace(instr, operands=normed))


def normalize_asm(
    text: str,
    call_kind: CallKind | None = None,
    rules: NormRules = DEFAULT_RULES,
) -> str:
    """Parse one assembly line and normalize it."""
    return normalize_instruction(parse_instruction(text), call_kind, rules)


_SYM_TOKEN = re.compile(
    r"(?P<hex>-?0x[0-9a-fA-F]+)"
    r"|(?P<float>-?\d+\.\d+)"
    r"|(?P<int>-?\d+)"
    r"|(?P<word>[A-Za-z_.@][A-Za-z0-9_.@]*)"
)


def normalize_symexpr(text: str, rules: NormRules = DEFAULT_RULES) -> str:
    """Preprocessed text of one symbolic expression or assignment."""

    def fix(match: re.Match) -> str:
        kind = match.lastgroup
        token = match.group()
        if kind == "hex":
            value = int(token, 16)
            return rules.imm_token if abs(value) > rules.imm_threshold else str(value)
        if kind == "float":
            whole, frac = token.split(".")
            return f"{whole}.{frac[:rules.float_decimals]}"
        if kind == "int":
            return (
                rules.imm_token
                if abs(int(token)) > rules.imm_threshold
                else token
            )
        reg = register_by_name(token)
        if reg is not None:
            return reg.widen().name
        return token

    return _SYM_TOKEN.sub(fix, text)
