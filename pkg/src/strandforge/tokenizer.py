"""Subword vocabulary and sequence encoding for assembly and expressions.

Training is byte-pair style: words are split to characters (continuations
carry the ``##`` prefix) and the highest-frequency adjacent pair merges
until the vocabulary budget is spent, ties broken toward the
lexicographically smallest pair. Encoding is greedy longest-match-first
with the same ``##`` convention, so a mnemonic family the corpus knows
well splits along its stem (``cmovz`` becomes ``cmov`` + ``##z``).

Pre-tokenization splits on whitespace and isolates each punctuation
character in ``[](),+*-:=;`` as its own token. Special tokens can never
be produced by training because the bracket characters split any
bracketed name apart.
"""
from __future__ import annotations

import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

__all__ = [
    "PUNCTUATION", "SPECIALS",
    "PAD_ID", "UNK_ID", "CLS_ID", "SEP_ID", "MASK_ID", "MARK_ID",
    "EmptyCorpus", "VocabFormatError", "Vocab", "Sample",
    "pretokenize", "train_vocab", "encode", "encode_sections",
    "encode_marked_block", "decode", "pad_batch",
]

PUNCTUATION = "[](),+*-:=;"
_PUNCT_SET = frozenset(PUNCTUATION)

SPECIALS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "[MARK]")
PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID, MARK_ID = range(len(SPECIALS))

_HEADER_RE = re.compile(r"#strandforge-vocab v(\d+) max_seq=(\d+)\s*$")


class EmptyCorpus(ValueError):
    """No trainable text was supplied."""


class VocabFormatError(ValueError):
    """Vocabulary file is malformed or from an unknown version."""


def pretokenize(text: str) -> list[str]:
    """Whitespace split with punctuation isolated into single-char tokens."""
    out: list[str] = []
    for chunk in text.split():
        start = 0
        for i, ch in enumerate(chunk):
            if ch in _PUNCT_SET:
                if start < i:
                    out.append(chunk[start:i])
                out.append(ch)
                start = i + 1
        if start < len(chunk):
            out.append(chunk[start:])
    return out


@dataclass(frozen=True)
class Vocab:
    tokens: tuple[str, ...]
    max_seq: int = 512
    max_vocab: int = 4096
    ids: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        ids = {}
        for i, token in enumerate(self.tokens):
            if token in ids:
                raise VocabFormatError(f"duplicate token {token!r}")
            ids[token] = i
        for i, special in enumerate(SPECIALS):
            if ids.get(special) != i:
                raise VocabFormatError(
                    f"special {special} must have id {i}"
                )
        object.__setattr__(self, "ids", ids)

    def __len__(self) -> int:
        return len(self.tokens)

    def token(self, idx: int) -> str:
        return self.tokens[idx]

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"#strandforge-vocab v1 max_seq={self.max_seq}\n")
            for token in self.tokens:
                fh.write(token + "\n")

    @classmethod
    def load(cls, path: str) -> "Vocab":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n")
            match = _HEADER_RE.match(header)
            if match is None:
                raise VocabFormatError(f"bad vocab header: {header!r}")
            if match.group(1) != "1":
                raise VocabFormatError(f"unknown vocab version {match.group(1)}")
            tokens = tuple(line.rstrip("\n") for line in fh if line.rstrip("\n"))
        return cls(tokens=tokens, max_seq=int(match.group(2)))


def _word_symbols(word: str) -> list[str]:
    return [word[0]] + ["##" + ch for ch in word[1:]]


def train_vocab(
    lines: Iterable[str], max_vocab: int = 4096, max_seq: int = 512
) -> Vocab:
    """Learn a vocabulary by iterative pair merging.

    Deterministic given the corpus content and ``max_vocab``; corpus
    order only matters through frequencies.
    """
    word_freq: Counter[str] = Counter()
    for line in lines:
        for token in pretokenize(line):
            if len(token) == 1 and token in _PUNCT_SET:
                continue
            word_freq[token] += 1
    if not word_freq:
        raise EmptyCorpus("no words to train on")

    chars = sorted({ch for word in word_freq for ch in word})
    tokens: list[str] = list(SPECIALS) + list(PUNCTUATION) + chars + [
        "##" + ch for ch in chars
    ]
    known = set(tokens)

    words: list[list[str]] = []
    freqs: list[int] = []
    for word, freq in sorted(word_freq.items()):
        words.append(_word_symbols(word))
        freqs.append(freq)

    pair_count: Counter[tuple[str, str]] = Counter()
    pair_words: defaultdict[tuple[str, str], set[int]] = defaultdict(set)
    for idx, symbols in enumerate(words):
        for pair in zip(symbols, symbols[1:]):
            pair_count[pair] += freqs[idx]
            pair_words[pair].add(idx)

    def merge_text(pair: tuple[str, str]) -> str:
        return pair[0] + pair[1].removeprefix("##")

    while len(tokens) < max_vocab and pair_count:
        best_count = max(pair_count.values())
        best = min(p for p, c in pair_count.items() if c == best_count)
        merged = merge_text(best)
        for idx in sorted(pair_words[best]):
            symbols = words[idx]
            freq = freqs[idx]
            for pair in zip(symbols, symbols[1:]):
                pair_count[pair] -= freq
                if pair_count[pair] <= 0:
                    del pair_count[pair]
                pair_words[pair].discard(idx)
            rebuilt: list[str] = []
            i = 0
            while i < len(symbols):
                if (
                    i + 1 < len(symbols)
                    and (symbols[i], symbols[i + 1]) == best
                ):
                    rebuilt.append(merged)
                    i += 2
                else:
                    rebuilt.append(symbols[i])
                    i += 1
            words[idx] = rebuilt
            for pair in zip(rebuilt, rebuilt[1:]):
                pair_count[pair] += freq
                pair_words[pair].add(idx)
        if merged not in known:
            tokens.append(merged)
            known.add(merged)

    return Vocab(tokens=tuple(tokens), max_seq=max_seq, max_vocab=max_vocab)


def _encode_word(word: str, vocab: Vocab) -> list[int]:
    ids: list[int] = []
    i = 0
    while i < len(word):
        end = len(word)
        match_id = None
        while end > i:
            piece = word[i:end] if i == 0 else "##" + word[i:end]
            found = vocab.ids.get(piece)
            if found is not None:
                match_id = found
                break
            end -= 1
        if match_id is None:  # unknown character
            ids.append(UNK_ID)
            i += 1
        else:
            ids.append(match_id)
            i = end
    return ids


def _encode_text(text: str, vocab: Vocab) -> list[int]:
    ids: list[int] = []
    for token in pretokenize(text):
        ids.extend(_encode_word(token, vocab))
    return ids


@dataclass
class Sample:
    """One encoded input: ``[CLS] asm [SEP] (symexpr [SEP])``.

    ``language_ids`` are 0 over the assembly segment (its [SEP]
    included) and 1 over the expression segment; ``instr_starts`` point
    at the first token of each assembly instruction.
    """

    token_ids: list[int]
    language_ids: list[int]
    position_ids: list[int]
    attention_mask: list[int]
    instr_starts: list[int]

    def __len__(self) -> int:
        return len(self.token_ids)


def _finish_sample(
    token_ids: list[int],
    languages: list[int],
    instr_starts: list[int],
    limit: int,
) -> Sample:
    if len(token_ids) > limit:
        token_ids = token_ids[:limit]
        token_ids[-1] = SEP_ID
        languages = languages[:limit]
        instr_starts = [i for i in instr_starts if i < limit - 1]
    return Sample(
        token_ids=token_ids,
        language_ids=languages,
        position_ids=list(range(len(token_ids))),
        attention_mask=[1] * len(token_ids),
        instr_starts=instr_starts,
    )


def encode_sections(
    asm: Sequence[str],
    sections: Sequence[str],
    vocab: Vocab,
    max_seq: int | None = None,
) -> Sample:
    """``[CLS] asm [SEP] section [SEP] ...`` with language 1 after the asm."""
    limit = vocab.max_seq if max_seq is None else max_seq
    token_ids = [CLS_ID]
    instr_starts: list[int] = []
    for line in asm:
        instr_starts.append(len(token_ids))
        token_ids.extend(_encode_text(line, vocab))
    token_ids.append(SEP_ID)
    languages = [0] * len(token_ids)
    for section in sections:
        extra = _encode_text(section, vocab) + [SEP_ID]
        token_ids.extend(extra)
        languages.extend([1] * len(extra))
    return _finish_sample(token_ids, languages, instr_starts, limit)


def encode(
    asm: Sequence[str],
    symexpr: str | None,
    vocab: Vocab,
    max_seq: int | None = None,
) -> Sample:
    sections = [] if symexpr is None else [symexpr]
    return encode_sections(asm, sections, vocab, max_seq)


def encode_marked_block(
    asm: Sequence[str],
    marked: int,
    vocab: Vocab,
    max_seq: int | None = None,
) -> Sample:
    """A block sample whose ``marked``-th instruction sits between [MARK]s."""
    if not 0 <= marked < len(asm):
        raise ValueError(f"marked index {marked} out of range for {len(asm)} lines")
    limit = vocab.max_seq if max_seq is None else max_seq
    token_ids = [CLS_ID]
    instr_starts: list[int] = []
    for k, line in enumerate(asm):
        instr_starts.append(len(token_ids))
        if k == marked:
            token_ids.append(MARK_ID)
        token_ids.extend(_encode_text(line, vocab))
        if k == marked:
            token_ids.append(MARK_ID)
    token_ids.append(SEP_ID)
    languages = [0] * len(token_ids)
    return _finish_sample(token_ids, languages, instr_starts, limit)


def _join_pieces(tokens: list[str]) -> str:
    words: list[str] = []
    for token in tokens:
        if token.startswith("##") and words:
            words[-1] += token[2:]
        else:
            words.append(token)
    return " ".join(words)


def decode(sample: Sample, vocab: Vocab) -> tuple[list[str], str | None]:
    """Reconstruct (asm lines, symexpr text) from an encoded sample.

    Inverts :func:`encode` up to whitespace: each output line equals the
    space-joined pre-token stream of its input (exactly, when no [UNK]
    was produced).
    """
    ids = sample.token_ids
    langs = sample.language_ids
    asm_range = [
        i for i, (t, lang) in enumerate(zip(ids, langs))
        if lang == 0 and t not in (CLS_ID, SEP_ID, PAD_ID)
    ]
    expr_tokens = [
        vocab.token(t)
        for t, lang in zip(ids, langs)
        if lang == 1 and t not in (SEP_ID, PAD_ID)
    ]
    starts = [s for s in sample.instr_starts if s < len(ids)]
    lines: list[str] = []
    for pos, start in enumerate(starts):
        stop = starts[pos + 1] if pos + 1 < len(starts) else None
        chunk = [i for i in asm_range if i >= start and (stop is None or i < stop)]
        lines.append(_join_pieces([vocab.token(ids[i]) for i in chunk]))
    has_expr = any(lang == 1 for lang in langs)
    return lines, _join_pieces(expr_tokens) if has_expr else None


def pad_batch(samples: Sequence[Sample]) -> list[Sample]:
    """Dynamic padding: every sample padded to the batch max length."""
    width = max((len(s) for s in samples), default=0)
    padded = []
    for s in samples:
        gap = width - len(s)
        padded.append(
            Sample(
                token_ids=s.token_ids + [PAD_ID] * gap,
                language_ids=s.language_ids + [0] * gap,
                position_ids=s.position_ids
                + list(range(len(s), width)),
                attention_mask=s.attention_mask + [0] * gap,
                instr_starts=list(s.instr_starts),
            )
        )
    return padded
