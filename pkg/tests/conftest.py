import pytest

from strandforge.cfg import BasicBlock, FunctionCfg
from strandforge.isa import parse_instruction


def block(block_id, texts, successors=()):
    instrs = [parse_instruction(t, index=i) for i, t in enumerate(texts)]
    return BasicBlock(block_id=block_id, instructions=instrs, successors=list(successors))


def function(function_id="f", blocks=(), compiler=None, optimization=None, libc=None):
    return FunctionCfg(
        function_id=function_id,
        binary_id="bin",
        blocks=list(blocks),
        compiler=compiler,
        optimization=optimization,
        libc_symbols=dict(libc or {}),
    )


@pytest.fixture
def fig2_block():
    # two interleaved slices: a predicate over eax/ebx and a value into ecx
    return block("b0", [
        "mov eax, dword ptr [rbp - 8]",
        "mov ebx, dword ptr [rbp - 16]",
        "lea ecx, [eax + 4]",
        "cmp eax, ebx",
        "jne 0x400",
    ], successors=["b1", "b2"])


TABLE1_STRANDS = [
    ["mov ecx, esi", "and ecx, 3", "rep stosb byte ptr [rdi], al"],
    ["mov rax, qword ptr [rbp - 168]", "mov eax, dword ptr [rax + 24]",
     "test al, 2", "jne MEM"],
    ["mov esi, IMM", "mov rdi, qword ptr [rbp]", "call fprintf"],
]

TABLE1_EXPECTED = [
    {"rcx = -1 add ( 0 Concat rsi[1:0] )", "rdi = 1 add rdi", "*(rdi) = al"},
    {"0 Concat *(24 add *(-168 add rbp))[1:1] ne 0"},
    {"fprintf(*(rbp), IMM)"},
]
