import pytest
from hypothesis import given, strategies as st

from strandforge.isa import (
    AsmSyntaxError,
    ImmOp,
    Instruction,
    MemOp,
    OpcodeClass,
    OperandClass,
    RegLoc,
    RegOp,
    classify_opcode,
    classify_operands,
    parse_instruction,
    render_instruction,
)


def test_parse_simple_mov():
    instr = parse_instruction("mov rax, rbx")
    assert instr.mnemonic == "mov"
    assert isinstance(instr.operands[0], RegOp)
    assert isinstance(instr.operands[1], RegOp)


def test_parse_memory_operand_with_scale():
    instr = parse_instruction("lea rax, [rbx + rcx*4 + 16]")
    mem = instr.operands[1]
    assert isinstance(mem, MemOp)
    assert mem.base.family == "rbx"
    assert mem.index.family == "rcx"
    assert mem.scale == 4
    assert mem.disp == 16


def test_parse_negative_displacement_forms():
    spaced = parse_instruction("mov rax, qword ptr [rbp + -8]")
    dashed = parse_instruction("mov rax, qword ptr [rbp - 8]")
    assert spaced.operands[1].disp == dashed.operands[1].disp == -8


def test_parse_rep_prefix():
    instr = parse_instruction("rep stosb byte ptr [rdi], al")
    assert instr.rep
    assert instr.mnemonic == "stosb"


def test_parse_rejects_empty():
    with pytest.raises(AsmSyntaxError):
        parse_instruction("")
    with pytest.raises(AsmSyntaxError):
        parse_instruction("   ")


def test_unknown_mnemonic_is_opaque_not_error():
    # unknown instructions stay in the stream with empty def/use so the
    # slicer can step over them; they are never executable
    instr = parse_instruction("vfmadd231pd zmm0, zmm1, zmm2")
    assert instr.opcode_class == OpcodeClass.OTHER
    assert not instr.exec_ok
    assert instr.defs == frozenset() and instr.uses == frozenset()


def test_defs_and_uses_add():
    instr = parse_instruction("add rax, rbx")
    def_fams = {loc.family for loc in instr.defs if isinstance(loc, RegLoc)}
    use_fams = {loc.family for loc in instr.uses if isinstance(loc, RegLoc)}
    assert "rax" in def_fams
    assert {"rax", "rbx"} <= use_fams


def test_mov_does_not_use_destination():
    instr = parse_instruction("mov rax, rbx")
    use_fams = {loc.family for loc in instr.uses if isinstance(loc, RegLoc)}
    assert "rax" not in use_fams


def test_sub_register_width():
    instr = parse_instruction("mov al, 1")
    (dst,) = [loc for loc in instr.defs if isinstance(loc, RegLoc)]
    assert (dst.family, dst.lo, dst.hi) == ("rax", 0, 1)


# opcode taxonomy: one spot check per class
@pytest.mark.parametrize("mnemonic,n,expected", [
    ("mov", 2, OpcodeClass.DATA_MOVEMENT),
    ("push", 1, OpcodeClass.DATA_MOVEMENT),
    ("cltq", 0, OpcodeClass.DATA_MOVEMENT),
    ("inc", 1, OpcodeClass.UNARY),
    ("neg", 1, OpcodeClass.UNARY),
    ("add", 2, OpcodeClass.BINARY),
    ("lea", 2, OpcodeClass.BINARY),
    ("imul", 2, OpcodeClass.BINARY),
    ("imul", 3, OpcodeClass.BINARY),
    ("sar", 2, OpcodeClass.SHIFT),
    ("shl", 2, OpcodeClass.SHIFT),
    ("imulq", 1, OpcodeClass.SPECIAL_ARITHMETIC),
    ("divq", 1, OpcodeClass.SPECIAL_ARITHMETIC),
    ("cmp", 2, OpcodeClass.COMPARISON),
    ("test", 2, OpcodeClass.COMPARISON),
    ("sete", 1, OpcodeClass.CONDITIONAL_SET),
    ("jmp", 1, OpcodeClass.JUMP),
    ("jle", 1, OpcodeClass.JUMP),
    ("cmovz", 2, OpcodeClass.CONDITIONAL_MOVE),
    ("call", 1, OpcodeClass.PROCEDURE_CALL),
    ("ret", 0, OpcodeClass.PROCEDURE_CALL),
    ("fmul", 2, OpcodeClass.FLOATING_POINT),
    ("frobnicate", 2, OpcodeClass.OTHER),
])
def test_opcode_classes(mnemonic, n, expected):
    assert classify_opcode(mnemonic, n) == expected


def test_single_operand_imul_is_special_arithmetic():
    assert classify_opcode("imul", 1) == OpcodeClass.SPECIAL_ARITHMETIC


@pytest.mark.parametrize("text,expected", [
    ("ret", OperandClass.NONE),
    ("push 5", OperandClass.CNST),
    ("inc rax", OperandClass.REG),
    ("push qword ptr [rax]", OperandClass.REF),
    ("mov rax, rbx", OperandClass.REG_REG),
    ("mov rax, 7", OperandClass.REG_CNST),
    ("mov rax, qword ptr [rbx]", OperandClass.REG_REF),
    ("mov qword ptr [rbx], rax", OperandClass.REF_REG),
    ("mov qword ptr [rbx], 7", OperandClass.REF_CNST),
    ("imul rax, rbx, 4", OperandClass.TRI),
])
def test_operand_classes(text, expected):
    instr = parse_instruction(text)
    assert classify_operands(instr.operands) == expected
    assert instr.operand_class == expected


_REGS = st.sampled_from(["rax", "rbx", "rcx", "rdx", "rsi", "rdi", "r8", "r9"])
_IMMS = st.integers(min_value=-4096, max_value=4096)


@given(_REGS, _REGS, _IMMS)
def test_render_parse_round_trip(dst, src, imm):
    for text in (f"mov {dst}, {src}", f"add {dst}, {imm}",
                 f"lea {dst}, [{src} + {imm}]"):
        instr = parse_instruction(text)
        again = parse_instruction(render_instruction(instr))
        assert again.mnemonic == instr.mnemonic
        assert again.operands == instr.operands


@given(_REGS, st.integers(min_value=0, max_value=255))
def test_immediates_render_in_decimal(reg, imm):
    instr = parse_instruction(f"mov {reg}, {hex(imm)}")
    assert isinstance(instr.operands[1], ImmOp)
    assert instr.operands[1].value == imm
    assert str(imm) in render_instruction(instr)


def test_instruction_is_frozen():
    instr = parse_instruction("mov rax, rbx")
    with pytest.raises(AttributeError):
        instr.mnemonic = "add"
