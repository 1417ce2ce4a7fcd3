from hypothesis import given, strategies as st

from strandforge.slicer import (
    block_outputs,
    disjoint_strand_cover,
    extract_function_strands,
    extract_strands,
)

from conftest import block, function


def _indices(strands):
    return {tuple(s.indices) for s in strands}


def test_interleaved_predicate_and_value_strands(fig2_block):
    strands = extract_strands(fig2_block, "f")
    assert _indices(strands) == {(0, 1, 3, 4), (0, 2)}
    by_role = {s.role: s for s in strands}
    assert by_role["predicate"].indices == (0, 1, 3, 4)
    assert by_role["value"].indices == (0, 2)
    assert by_role["value"].output.family == "rcx"


def test_single_instruction_block():
    strands = extract_strands(block("b", ["mov eax, 1"]))
    assert _indices(strands) == {(0,)}
    assert strands[0].role == "value"


def test_call_strand_absorbs_argument_setup():
    # A call terminates its block; the strand pulls in the argument setup.
    b = block("b", ["mov esi, 7", "mov rdi, rbx", "call 0x100"])
    strands = extract_strands(b, "f")
    call = next(s for s in strands if s.role == "call")
    assert call.indices == (0, 1, 2)


def test_mid_block_call_is_not_a_call_strand():
    # Only the terminator spawns a call strand, and the trailing write
    # to eax clobbers the call's return register in the output trace.
    b = block("b", ["mov esi, 7", "mov rdi, rbx", "call 0x100", "mov eax, 0"])
    strands = extract_strands(b, "f")
    assert all(s.role == "value" for s in strands)
    assert _indices(strands) == {(3,)}


def test_strand_asm_matches_indices(fig2_block):
    for s in extract_strands(fig2_block, "f"):
        assert list(s.asm) == [fig2_block.instructions[i].raw for i in s.indices]


def test_unsupported_instruction_never_joins_a_strand():
    b = block("b", ["vfmadd231pd zmm0, zmm1, zmm2", "mov eax, 1", "add eax, 2"])
    strands = extract_strands(b)
    assert _indices(strands) == {(1, 2)}
    assert all(s.executable for s in strands)


def test_partially_supported_strand_marked_non_executable():
    # fsqrt writes st0 which nothing here reads, so it forms its own strand
    b = block("b", ["fld dword ptr [rax]", "fsqrt"])
    strands = extract_strands(b)
    assert any(not s.executable for s in strands) or strands == []


def test_block_outputs_order_is_deterministic(fig2_block):
    outs = block_outputs(fig2_block)
    assert outs == block_outputs(fig2_block)


def test_extract_function_strands_covers_all_blocks():
    fn = function(blocks=[
        block("b0", ["mov eax, 1"], ["b1"]),
        block("b1", ["add ebx, 2"]),
    ])
    strands = extract_function_strands(fn)
    assert {s.block_id for s in strands} == {"b0", "b1"}
    assert all(s.function_id == "f" for s in strands)


def test_strand_ids_unique_within_function():
    fn = function(blocks=[
        block("b0", ["mov eax, 1", "mov ebx, 2", "cmp eax, ebx", "jne 0x10"], ["b1"]),
        block("b1", ["mov eax, 3"]),
    ])
    ids = [s.strand_id for s in extract_function_strands(fn)]
    assert len(ids) == len(set(ids))


def test_disjoint_cover_no_overlap(fig2_block):
    strands = extract_strands(fig2_block, "f")
    cover = disjoint_strand_cover(strands)
    seen: set[int] = set()
    for s in cover:
        assert not (seen & set(s.indices))
        seen |= set(s.indices)
    # the larger strand wins the shared instruction i0
    assert (0, 1, 3, 4) in _indices(cover)


def test_disjoint_cover_is_deterministic(fig2_block):
    strands = extract_strands(fig2_block, "f")
    assert [s.strand_id for s in disjoint_strand_cover(strands)] == [
        s.strand_id for s in disjoint_strand_cover(list(reversed(strands)))
    ]


_LINES = st.lists(
    st.sampled_from([
        "mov eax, ebx", "mov ebx, ecx", "add eax, 1", "sub ebx, eax",
        "xor ecx, ecx", "lea edx, [eax + 8]", "cmp eax, ebx",
        "mov dword ptr [rbp - 8], eax", "mov ecx, dword ptr [rbp - 8]",
    ]),
    min_size=1, max_size=8,
)


@given(_LINES)
def test_strand_indices_sorted_and_in_range(lines):
    strands = extract_strands(block("b", lines))
    for s in strands:
        assert list(s.indices) == sorted(s.indices)
        assert all(0 <= i < len(lines) for i in s.indices)
        assert s.anchor == s.indices[-1]


@given(_LINES)
def test_slices_are_closed_under_def_use(lines):
    # every register a strand reads is either written earlier inside the
    # strand or is a genuine input (never defined earlier in the block)
    b = block("b", lines)
    for s in extract_strands(b):
        chosen = set(s.indices)
        for i in s.indices:
            for use in b.instructions[i].uses:
                writers = [
                    j for j in range(i)
                    if any(_overlap(use, d) for d in b.instructions[j].defs)
                ]
                if writers:
                    assert max(writers) in chosen


def _overlap(a, b):
    from strandforge.isa import locations_overlap

    return locations_overlap(a, b)
