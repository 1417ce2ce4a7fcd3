import json

import pytest

from strandforge.cfg import (
    CallKind,
    ValidationError,
    dump_functions,
    load_functions,
    parse_function,
    resolve_call_target,
)
from strandforge.isa import parse_instruction

from conftest import block, function


def _raw(fid="f1", **overrides):
    raw = {
        "function_id": fid,
        "binary_id": "binA",
        "compiler": "gcc",
        "optimization": "O2",
        "blocks": [
            {
                "block_id": "b0",
                "instructions": [
                    {"text": "mov eax, 1", "addr": "0x1000"},
                    {"text": "jmp 0x1010", "addr": "0x1004"},
                ],
                "successors": ["b1"],
            },
            {"block_id": "b1", "instructions": [{"text": "ret"}], "successors": []},
        ],
    }
    raw.update(overrides)
    return raw


def test_parse_function_round_trip(tmp_path):
    fn = parse_function(_raw())
    assert fn.function_id == "f1"
    assert [b.block_id for b in fn.blocks] == ["b0", "b1"]
    assert fn.blocks[0].instructions[0].addr == 0x1000

    path = tmp_path / "fns.jsonl"
    dump_functions([fn], str(path))
    (again,) = list(load_functions(str(path)))
    assert again.function_id == fn.function_id
    assert [b.block_id for b in again.blocks] == [b.block_id for b in fn.blocks]
    texts = lambda f: [i.raw for b in f.blocks for i in b.instructions]
    assert texts(again) == texts(fn)


def test_unknown_successor_rejected():
    raw = _raw()
    raw["blocks"][0]["successors"] = ["nope"]
    with pytest.raises(ValidationError, match="unknown successor"):
        parse_function(raw)


def test_duplicate_block_ids_rejected():
    raw = _raw()
    raw["blocks"][1]["block_id"] = "b0"
    with pytest.raises(ValidationError, match="duplicate"):
        parse_function(raw)


def test_jump_must_be_last_in_block():
    raw = _raw()
    raw["blocks"][0]["instructions"] = [
        {"text": "jmp 0x1010"},
        {"text": "mov eax, 1"},
    ]
    with pytest.raises(ValidationError, match="not last"):
        parse_function(raw)


def test_bad_instruction_reports_location():
    raw = _raw()
    raw["blocks"][1]["instructions"] = [{"text": ""}]
    with pytest.raises(ValidationError, match="block b1"):
        parse_function(raw)


def test_bad_json_line_reports_lineno(tmp_path):
    path = tmp_path / "broken.jsonl"
    path.write_text(json.dumps(_raw()) + "\n{oops\n")
    with pytest.raises(ValidationError, match=":2"):
        list(load_functions(str(path)))


def test_libc_symbols_parse_hex_addresses():
    fn = parse_function(_raw(libc_symbols={"0x2000": "printf"}))
    assert fn.libc_symbols == {0x2000: "printf"}
    with pytest.raises(ValidationError):
        parse_function(_raw(libc_symbols={"zzz": "printf"}))


def test_resolve_call_targets():
    fn = function(blocks=[block("b0", ["call 0x2000", "call 0x3000"])],
                  libc={0x2000: "fprintf"})
    libc_call, user_call = fn.blocks[0].instructions
    kind = resolve_call_target(libc_call, fn)
    assert kind.kind == "libc" and kind.name == "fprintf"
    kind = resolve_call_target(user_call, fn)
    assert kind.kind == "user"


def test_resolve_indirect_call():
    fn = function(blocks=[block("b0", ["call rax"])])
    kind = resolve_call_target(fn.blocks[0].instructions[0], fn)
    assert kind.kind == "indirect"


def test_metadata_optional():
    fn = parse_function({"function_id": "g", "blocks": []})
    assert fn.compiler is None and fn.optimization is None


def test_call_kind_is_value_object():
    assert CallKind("libc", "printf") == CallKind("libc", "printf")
