"""Instruction model for the supported x86-64 subset.

Parses Intel-syntax instruction text into operands, classifies mnemonics
into the opcode/operand taxonomies used by the outlier benchmark, and
derives per-instruction def/use location sets (including implicit flag,
stack and string-op effects) for the slicer.

Memory locations are identified syntactically: the location of a memory
operand is the canonical printed text of its address expression, so
``[rbp - 8]`` and ``[rbp - 16]`` never alias and ``[eax + 4]`` is distinct
from ``[rax + 4]``. This mirrors the data-flow model of the rest of the
pipeline and is deliberately unsound for genuinely overlapping addresses.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from strandforge.regs import (
    ARG_REGISTERS,
    COND_ALIASES,
    COND_FLAGS,
    Cond,
    Flag,
    RegisterId,
    register_by_name,
)
from strandforge.symx.expr import (
    BinOp,
    Const,
    Extract,
    Imm,
    InputReg,
    SymExpr,
    simplify,
    to_text,
)

__all__ = [
    "OpcodeClass", "OperandClass", "RegLoc", "FlagLoc", "MemLoc", "Location",
    "RegOp", "ImmOp", "MemOp", "LabelOp", "Operand", "Instruction",
    "parse_instruction", "render_operand", "render_instruction",
    "mem_addr_expr", "locations_overlap", "classify_opcode",
    "classify_operands", "AsmSyntaxError",
]


class AsmSyntaxError(ValueError):
    """Instruction text that cannot be parsed at all."""


# ── classification taxonomies ────────────────────────────────────────────


class OpcodeClass(Enum):
    DATA_MOVEMENT = "data-movement"
    UNARY = "unary"
    BINARY = "binary"
    SHIFT = "shift"
    SPECIAL_ARITHMETIC = "special-arithmetic"
    COMPARISON = "comparison"
    CONDITIONAL_SET = "conditional-set"
    JUMP = "jump"
    CONDITIONAL_MOVE = "conditional-move"
    PROCEDURE_CALL = "procedure-call"
    FLOATING_POINT = "floating-point"
    OTHER = "other"


class OperandClass(Enum):
    NONE = "none"
    CNST = "cnst"
    REG = "reg"
    REF = "ref"
    REG_REG = "reg-reg"
    REG_CNST = "reg-cnst"
    REG_REF = "reg-ref"
    REF_REG = "ref-reg"
    REF_CNST = "ref-cnst"
    TRI = "tri"


_CLASS_TABLE: dict[str, OpcodeClass] = {}
for _mn in ("mov", "push", "pop", "cwtl", "cltq", "cqto", "cqtd",
            "cwde", "cdqe", "cqo", "cdq", "cltd"):
    _CLASS_TABLE[_mn] = OpcodeClass.DATA_MOVEMENT
for _mn in ("inc", "dec", "neg", "not"):
    _CLASS_TABLE[_mn] = OpcodeClass.UNARY
for _mn in ("add", "sub", "imul", "xor", "or", "and", "lea", "leaq"):
    _CLASS_TABLE[_mn] = OpcodeClass.BINARY
for _mn in ("sal", "sar", "shr", "shl"):
    _CLASS_TABLE[_mn] = OpcodeClass.SHIFT
for _mn in ("imulq", "mulq", "idivq", "divq", "mul", "idiv", "div"):
    _CLASS_TABLE[_mn] = OpcodeClass.SPECIAL_ARITHMETIC
for _mn in ("cmp", "test"):
    _CLASS_TABLE[_mn] = OpcodeClass.COMPARISON
for _mn in ("call", "leave", "ret", "retn"):
    _CLASS_TABLE[_mn] = OpcodeClass.PROCEDURE_CALL
for _mn in ("fabs", "fadd", "faddp", "fchs", "fdiv", "fdivp", "fdivr",
            "fdivrp", "fiadd", "fidivr", "fimul", "fisub", "fisubr", "fmul",
            "fmulp", "fprem", "fpreml", "frndint", "fscale", "fsqrt", "fsub",
            "fsubp", "fsubr", "fsubrp", "fxtract"):
    _CLASS_TABLE[_mn] = OpcodeClass.FLOATING_POINT
del _mn


def _cc_suffix(mnemonic: str, prefix: str) -> Cond | None:
    if not mnemonic.startswith(prefix):
        return None
    return COND_ALIASES.get(mnemonic[len(prefix):])


def classify_opcode(mnemonic: str, n_operands: int = 2) -> OpcodeClass:
    """Opcode class of a mnemonic; unknown mnemonics land in Other."""
    mnemonic = mnemonic.lower()
    if mnemonic in ("imul", "mul", "idiv", "div"):
        if mnemonic == "imul" and n_operands >= 2:
            return OpcodeClass.BINARY
        return OpcodeClass.SPECIAL_ARITHMETIC
    got = _CLASS_TABLE.get(mnemonic)
    if got is not None:
        return got
    if mnemonic == "jmp" or _cc_suffix(mnemonic, "j") is not None:
        return OpcodeClass.JUMP
    if _cc_suffix(mnemonic, "set") is not None:
        return OpcodeClass.CONDITIONAL_SET
    if _cc_suffix(mnemonic, "cmov") is not None:
        return OpcodeClass.CONDITIONAL_MOVE
    return OpcodeClass.OTHER


# ── operands ─────────────────────────────────────────────────────────────


@dataclass(frozen=True, slots=True)
class RegOp:
    reg: RegisterId

    @property
    def name(self) -> str:
        return self.reg.name


@dataclass(frozen=True, slots=True)
class ImmOp:
    """Immediate; value None is the normalized opaque ``IMM`` token."""

    value: int | None


@dataclass(frozen=True, slots=True)
class MemOp:
    base: RegisterId | None = None
    index: RegisterId | None = None
    scale: int = 1
    scale_reg: RegisterId | None = None  # register-scaled form used by lea
    disp: int = 0
    disp_imm: bool = False  # displacement normalized away to IMM
    size: int | None = None  # access width in bytes; None for lea


@dataclass(frozen=True, slots=True)
class LabelOp:
    """Branch/call target: a symbol, the ``MEM`` token, or an address."""

    name: str
    target: int | None = None


Operand = RegOp | ImmOp | MemOp | LabelOp


# ── locations ────────────────────────────────────────────────────────────


@dataclass(frozen=True, slots=True)
class RegLoc:
    family: str
    lo: int
    hi: int

    @property
    def name(self) -> str:
        return RegisterId(self.family, self.lo, self.hi).name


@dataclass(frozen=True, slots=True)
class FlagLoc:
    flag: Flag


@dataclass(frozen=True, slots=True)
class MemLoc:
    text: str
    size: int


Location = RegLoc | FlagLoc | MemLoc


def locations_overlap(a: Location, b: Location) -> bool:
    if isinstance(a, RegLoc) and isinstance(b, RegLoc):
        return a.family == b.family and a.lo < b.hi and b.lo < a.hi
    if isinstance(a, FlagLoc) and isinstance(b, FlagLoc):
        return a.flag == b.flag
    if isinstance(a, MemLoc) and isinstance(b, MemLoc):
        return a.text == b.text
    return False


def _reg_loc(reg: RegisterId) -> RegLoc:
    return RegLoc(reg.family, reg.lo, reg.hi)


def _part(family: str, size: int) -> RegLoc:
    return RegLoc(family, 0, size)


_ALL_FLAGS = frozenset(FlagLoc(f) for f in Flag)
_INCDEC_FLAGS = frozenset(FlagLoc(f) for f in (Flag.ZF, Flag.SF, Flag.OF, Flag.PF))


# ── address expressions ──────────────────────────────────────────────────


def _input_read(reg: RegisterId) -> SymExpr:
    wide = InputReg(reg.widen().name)
    if reg.size >= 8:
        return wide
    return Extract(reg.hi * 8 - 1, reg.lo * 8, wide)


def mem_addr_expr(mem: MemOp, read=_input_read) -> SymExpr:
    """Address expression of a memory operand.

    ``read`` maps a RegisterId to its current symbolic value; the default
    reads fresh input leaves, which is what location identity uses.
    """
    width = 64
    for reg in (mem.base, mem.index, mem.scale_reg):
        if reg is not None:
            width = reg.bits
            break
    expr: SymExpr | None = None
    if mem.base is not None:
        expr = read(mem.base)
        width = expr.width
    if mem.index is not None:
        idx = read(mem.index)
        width = idx.width
        if mem.scale_reg is not None:
            idx = BinOp("mul", idx, read(mem.scale_reg), width)
        elif mem.scale != 1:
            idx = BinOp("mul", Const(mem.scale, width), idx, width)
        expr = idx if expr is None else BinOp("add", expr, idx, width)
    if mem.disp_imm:
        d: SymExpr = Imm(width)
        expr = d if expr is None else BinOp("add", expr, d, width)
    elif mem.disp != 0 or expr is None:
        d = Const(mem.disp, width)
        expr = d if expr is None else BinOp("add", expr, d, width)
    return simplify(expr)


def _mem_loc(mem: MemOp) -> MemLoc:
    return MemLoc(f"*({to_text(mem_addr_expr(mem))})", mem.size or 8)


def _mem_reg_uses(mem: MemOp) -> set[Location]:
    return {
        _reg_loc(r)
        for r in (mem.base, mem.index, mem.scale_reg)
        if r is not None
    }


# ── instruction ──────────────────────────────────────────────────────────


@dataclass(frozen=True, slots=True)
class Instruction:
    mnemonic: str
    operands: tuple[Operand, ...]
    rep: bool = False
    index: int = -1
    addr: int | None = None
    raw: str = ""
    defs: frozenset[Location] = field(default=frozenset())
    uses: frozenset[Location] = field(default=frozenset())
    opcode_class: OpcodeClass = OpcodeClass.OTHER
    operand_class: OperandClass = OperandClass.NONE
    cond: Cond | None = None
    exec_ok: bool = False

    @property
    def text(self) -> str:
        return render_instruction(self)

    @property
    def is_jcc(self) -> bool:
        return self.cond is not None and self.mnemonic.startswith("j")

    @property
    def is_call(self) -> bool:
        return self.mnemonic == "call"

    @property
    def terminator_kind(self) -> str | None:
        if self.mnemonic == "jmp":
            return "jmp"
        if self.is_jcc:
            return "jcc"
        if self.is_call:
            return "call"
        if self.mnemonic in ("ret", "retn"):
            return "ret"
        return None


# ── parsing ──────────────────────────────────────────────────────────────

_SIZES = {"byte": 1, "word": 2, "dword": 4, "qword": 8, "tbyte": 10,
          "xmmword": 16}
_PREFIXES = {"rep", "repe", "repz", "repne", "repnz"}
_INT_RE = re.compile(r"-?(?:0x[0-9a-fA-F]+|\d+)$")


def _parse_int(tok: str) -> int:
    return int(tok, 16) if "0x" in tok.lower() else int(tok)


def _split_operands(text: str) -> list[str]:
    parts: list[str] = []
    depth = 0
    cur = ""
    for ch in text:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append(cur.strip())
            cur = ""
        else:
            cur += ch
    if cur.strip():
        parts.append(cur.strip())
    return parts


def _parse_mem(inner: str, size: int | None) -> MemOp:
    base = index = scale_reg = None
    scale = 1
    disp = 0
    disp_imm = False
    for sign, term in re.findall(r"([+-]?)\s*([^+-]+)", inner):
        term = term.strip()
        if not term:
            continue
        negate = sign == "-"
        if "*" in term:
            left, right = (t.strip() for t in term.split("*", 1))
            lreg, rreg = register_by_name(left), register_by_name(right)
            if lreg is not None and rreg is not None:
                index, scale_reg = lreg, rreg
            elif lreg is not None:
                index, scale = lreg, _parse_int(right)
            elif rreg is not None:
                index, scale = rreg, _parse_int(left)
            else:
                raise AsmSyntaxError(f"bad scaled term {term!r}")
            if negate:
                raise AsmSyntaxError("negative scaled index")
            continue
        reg = register_by_name(term)
        if reg is not None:
            if negate:
                raise AsmSyntaxError("subtracted register in address")
            if base is None:
                base = reg
            elif index is None:
                index = reg
            else:
                raise AsmSyntaxError(f"too many registers in [{inner}]")
            continue
        if term == "IMM":
            disp_imm = True
            continue
        value = _parse_int(term)
        disp += -value if negate else value
    return MemOp(base, index, scale, scale_reg, disp, disp_imm, size)


def _parse_operand(text: str) -> Operand:
    text = text.strip()
    m = re.match(r"(?:(\w+)\s+ptr\s+)?\[(.*)\]$", text, re.IGNORECASE)
    if m:
        size = _SIZES.get(m.group(1).lower()) if m.group(1) else None
        return _parse_mem(m.group(2), size)
    reg = register_by_name(text)
    if reg is not None:
        return RegOp(reg)
    if text == "IMM":
        return ImmOp(None)
    if _INT_RE.match(text):
        return ImmOp(_parse_int(text))
    if re.match(r"[A-Za-z_.@][\w.@]*$", text):
        return LabelOp(text)
    raise AsmSyntaxError(f"cannot parse operand {text!r}")


def parse_instruction(text: str, index: int = -1, addr: int | None = None) -> Instruction:
    """Parse one Intel-syntax instruction and derive its def/use sets."""
    raw = text.strip()
    if not raw:
        raise AsmSyntaxError("empty instruction")
    head, _, rest = raw.partition(" ")
    mnemonic = head.lower()
    rep = False
    while mnemonic in _PREFIXES or mnemonic == "lock":
        rep = rep or mnemonic in _PREFIXES
        head, _, rest = rest.strip().partition(" ")
        mnemonic = head.lower()
        if not mnemonic:
            raise AsmSyntaxError(f"prefix without mnemonic in {raw!r}")
    operands = tuple(_parse_operand(p) for p in _split_operands(rest.strip()))
    operands = _fixups(mnemonic, operands)
    cond = (
        _cc_suffix(mnemonic, "j")
        or _cc_suffix(mnemonic, "set")
        or _cc_suffix(mnemonic, "cmov")
    )
    defs, uses, exec_ok = _def_use(mnemonic, rep, operands, cond)
    return Instruction(
        mnemonic=mnemonic,
        operands=operands,
        rep=rep,
        index=index,
        addr=addr,
        raw=raw,
        defs=frozenset(defs),
        uses=frozenset(uses),
        opcode_class=classify_opcode(mnemonic, len(operands)),
        operand_class=classify_operands(operands),
        cond=cond,
        exec_ok=exec_ok,
    )


def _fixups(mnemonic: str, operands: tuple[Operand, ...]) -> tuple[Operand, ...]:
    """Context-dependent operand repairs (jump targets, access sizes)."""
    fixed = list(operands)
    if mnemonic == "jmp" or mnemonic == "call" or _cc_suffix(mnemonic, "j"):
        if fixed and isinstance(fixed[0], ImmOp) and fixed[0].value is not None:
            fixed[0] = LabelOp(hex(fixed[0].value), fixed[0].value)
        elif fixed and isinstance(fixed[0], LabelOp):
            lab = fixed[0]
            if _INT_RE.match(lab.name):
                fixed[0] = LabelOp(lab.name, _parse_int(lab.name))
    if mnemonic != "lea":
        reg_size = next(
            (op.reg.size for op in fixed if isinstance(op, RegOp)), None
        )
        for i, op in enumerate(fixed):
            if isinstance(op, MemOp) and op.size is None:
                size = 8 if mnemonic in ("push", "pop", "call", "jmp") else reg_size
                fixed[i] = MemOp(op.base, op.index, op.scale, op.scale_reg,
                                 op.disp, op.disp_imm, size or 8)
    return tuple(fixed)


def classify_operands(operands: tuple[Operand, ...]) -> OperandClass:
    if len(operands) == 0:
        return OperandClass.NONE
    if len(operands) >= 3:
        return OperandClass.TRI
    kinds = []
    for op in operands:
        if isinstance(op, RegOp):
            kinds.append("reg")
        elif isinstance(op, MemOp):
            kinds.append("ref")
        else:
            kinds.append("cnst")
    if len(kinds) == 1:
        return {
            "reg": OperandClass.REG,
            "ref": OperandClass.REF,
            "cnst": OperandClass.CNST,
        }[kinds[0]]
    pair = "-".join(kinds)
    table = {
        "reg-reg": OperandClass.REG_REG,
        "reg-cnst": OperandClass.REG_CNST,
        "reg-ref": OperandClass.REG_REF,
        "ref-reg": OperandClass.REF_REG,
        "ref-cnst": OperandClass.REF_CNST,
    }
    return table.get(pair, OperandClass.TRI)


# ── def/use derivation ───────────────────────────────────────────────────

_STRING_WIDTHS = {"b": 1, "w": 2, "d": 4, "q": 8}

_EXEC_MNEMONICS = frozenset({
    "mov", "movabs", "movzx", "movsx", "movsxd", "lea", "xchg",
    "add", "sub", "and", "or", "xor", "inc", "dec", "neg", "not",
    "shl", "sal", "shr", "sar", "imul", "mul", "idiv", "div",
    "cwde", "cwtl", "cdqe", "cltq", "cqo", "cqto", "cdq", "cltd",
    "cmp", "test", "push", "pop", "leave", "nop",
    "jmp", "call", "ret", "retn",
    "stosb", "stosw", "stosd", "stosq",
    "movsb", "movsw", "movsq",
    "lodsb", "lodsw", "lodsd", "lodsq",
})


def _op_locs(op: Operand) -> set[Location]:
    if isinstance(op, RegOp):
        return {_reg_loc(op.reg)}
    if isinstance(op, MemOp):
        return {_mem_loc(op)} | _mem_reg_uses(op)
    return set()


def _def_use(
    mnemonic: str,
    rep: bool,
    ops: tuple[Operand, ...],
    cond: Cond | None,
) -> tuple[set[Location], set[Location], bool]:
    defs: set[Location] = set()
    uses: set[Location] = set()

    def def_op(op: Operand) -> None:
        if isinstance(op, RegOp):
            defs.add(_reg_loc(op.reg))
        elif isinstance(op, MemOp):
            defs.add(_mem_loc(op))
            uses.update(_mem_reg_uses(op))

    def use_op(op: Operand) -> None:
        uses.update(_op_locs(op))

    exec_ok = mnemonic in _EXEC_MNEMONICS or (
        cond is not None and mnemonic.startswith(("j", "set"))
    )
    if any(
        isinstance(op, RegOp) and not op.reg.is_gpr() and op.reg.family != "rip"
        for op in ops
    ):
        exec_ok = False

    if mnemonic in ("mov", "movabs", "movzx", "movsx", "movsxd"):
        def_op(ops[0])
        use_op(ops[1])
    elif mnemonic == "lea":
        def_op(ops[0])
        if isinstance(ops[1], MemOp):
            uses.update(_mem_reg_uses(ops[1]))
    elif mnemonic == "xchg":
        for op in ops:
            def_op(op)
            use_op(op)
    elif mnemonic in ("add", "sub", "and", "or", "xor"):
        def_op(ops[0])
        use_op(ops[0])
        use_op(ops[1])
        defs.update(_ALL_FLAGS)
    elif mnemonic in ("inc", "dec"):
        def_op(ops[0])
        use_op(ops[0])
        defs.update(_INCDEC_FLAGS)
    elif mnemonic in ("neg",):
        def_op(ops[0])
        use_op(ops[0])
        defs.update(_ALL_FLAGS)
    elif mnemonic == "not":
        def_op(ops[0])
        use_op(ops[0])
    elif mnemonic in ("shl", "sal", "shr", "sar"):
        def_op(ops[0])
        use_op(ops[0])
        if len(ops) > 1:
            use_op(ops[1])
        defs.update(_ALL_FLAGS)
    elif mnemonic in ("imul", "mul", "idiv", "div"):
        if mnemonic == "imul" and len(ops) == 2:
            def_op(ops[0])
            use_op(ops[0])
            use_op(ops[1])
        elif mnemonic == "imul" and len(ops) == 3:
            def_op(ops[0])
            use_op(ops[1])
        else:
            width = _one_op_width(ops[0])
            defs.update({_part("rax", width), _part("rdx", width)})
            uses.add(_part("rax", width))
            if mnemonic in ("idiv", "div"):
                uses.add(_part("rdx", width))
            use_op(ops[0])
        defs.update(_ALL_FLAGS)
    elif mnemonic in ("cwde", "cwtl"):
        defs.add(_part("rax", 4))
        uses.add(_part("rax", 2))
    elif mnemonic in ("cdqe", "cltq"):
        defs.add(_part("rax", 8))
        uses.add(_part("rax", 4))
    elif mnemonic in ("cqo", "cqto"):
        defs.add(_part("rdx", 8))
        uses.add(_part("rax", 8))
    elif mnemonic in ("cdq", "cltd"):
        defs.add(_part("rdx", 4))
        uses.add(_part("rax", 4))
    elif mnemonic in ("cmp", "test"):
        use_op(ops[0])
        use_op(ops[1])
        defs.update(_ALL_FLAGS)
    elif mnemonic == "push":
        use_op(ops[0])
        uses.add(_part("rsp", 8))
        defs.add(_part("rsp", 8))
        defs.add(MemLoc("*(-8 add rsp)", 8))
    elif mnemonic == "pop":
        def_op(ops[0])
        uses.add(_part("rsp", 8))
        defs.add(_part("rsp", 8))
        uses.add(MemLoc("*(rsp)", 8))
    elif mnemonic == "leave":
        defs.update({_part("rsp", 8), _part("rbp", 8)})
        uses.add(_part("rbp", 8))
        uses.add(MemLoc("*(rbp)", 8))
    elif mnemonic == "call":
        uses.update(_part(r, 8) for r in ARG_REGISTERS)
        if ops and not isinstance(ops[0], LabelOp):
            use_op(ops[0])
    elif mnemonic in ("ret", "retn", "jmp", "nop"):
        pass
    elif cond is not None and mnemonic.startswith("j"):
        uses.update(FlagLoc(f) for f in COND_FLAGS[cond])
    elif cond is not None and mnemonic.startswith("set"):
        def_op(ops[0])
        uses.update(FlagLoc(f) for f in COND_FLAGS[cond])
    elif cond is not None and mnemonic.startswith("cmov"):
        def_op(ops[0])
        use_op(ops[0])
        use_op(ops[1])
        uses.update(FlagLoc(f) for f in COND_FLAGS[cond])
        exec_ok = False  # conditional state is outside the expression grammar
    elif mnemonic[:-1] in ("stos", "movs", "lods") and mnemonic[-1] in _STRING_WIDTHS:
        width = _STRING_WIDTHS[mnemonic[-1]]
        kind = mnemonic[:-1]
        if kind == "stos":
            defs.update({_part("rdi", 8), MemLoc("*(rdi)", width)})
            uses.update({_part("rax", width), _part("rdi", 8)})
        elif kind == "movs":
            defs.update({_part("rdi", 8), _part("rsi", 8), MemLoc("*(rdi)", width)})
            uses.update({_part("rsi", 8), _part("rdi", 8), MemLoc("*(rsi)", width)})
        else:
            defs.update({_part("rax", width), _part("rsi", 8)})
            uses.update({_part("rsi", 8), MemLoc("*(rsi)", width)})
        if rep:
            defs.add(_part("rcx", 8))
            uses.add(_part("rcx", 8))
    else:
        # Conservative fallback: first operand written and read, the rest read.
        exec_ok = False
        if ops:
            def_op(ops[0])
        for op in ops:
            use_op(op)
    return defs, uses, exec_ok


def _one_op_width(op: Operand) -> int:
    if isinstance(op, RegOp):
        return op.reg.size
    if isinstance(op, MemOp) and op.size:
        return op.size
    return 8


# ── rendering ────────────────────────────────────────────────────────────

_SIZE_NAMES = {1: "byte", 2: "word", 4: "dword", 8: "qword", 10: "tbyte",
               16: "xmmword"}


def render_operand(op: Operand, with_size: bool = True) -> str:
    if isinstance(op, RegOp):
        return op.name
    if isinstance(op, ImmOp):
        return "IMM" if op.value is None else str(op.value)
    if isinstance(op, LabelOp):
        return op.name
    parts: list[str] = []
    if op.base is not None:
        parts.append(op.base.name)
    if op.index is not None:
        if op.scale_reg is not None:
            term = f"{op.index.name} * {op.scale_reg.name}"
        elif op.scale != 1:
            term = f"{op.index.name} * {op.scale}"
        else:
            term = op.index.name
        parts.append(("+ " if parts else "") + term)
    if op.disp_imm:
        parts.append(("+ " if parts else "") + "IMM")
    elif op.disp != 0 or not parts:
        if parts:
            sign = "-" if op.disp < 0 else "+"
            parts.append(f"{sign} {abs(op.disp)}")
        else:
            parts.append(str(op.disp))
    body = f"[{' '.join(parts)}]"
    if with_size and op.size is not None:
        return f"{_SIZE_NAMES[op.size]} ptr {body}"
    return body


def render_instruction(instr: Instruction) -> str:
    head = ("rep " if instr.rep else "") + instr.mnemonic
    if not instr.operands:
        return head
    with_size = instr.mnemonic != "lea"
    ops = ", ".join(render_operand(op, with_size) for op in instr.operands)
    return f"{head} {ops}"
