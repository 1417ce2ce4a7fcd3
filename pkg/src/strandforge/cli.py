"""Command line pipeline with a reproducibility manifest per subcommand.

Each stage reads files produced by earlier stages and writes its outputs
plus a ``<command>.manifest.json`` next to them recording the command
line, seed, input/output hashes, tool version, and wall time.  Reruns
with the same inputs and seed must reproduce the output hashes.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from multiprocessing import Pool

import numpy as np

from . import __version__
from .bench import (
    SimilarityDb,
    evaluate_db,
    make_outlier_sets,
    outlier_accuracy,
    roc_auc,
    truncate_function,
    write_results_csv,
)
from .cfg import ValidationError, dump_functions, load_functions, resolve_call_target
from .corpus import (
    build_elm_corpus,
    build_exec_dataset,
    build_ssm_corpus,
    read_jsonl,
    split_rows,
    synth_equivalence_corpus,
    write_jsonl,
)
from .isa import AsmSyntaxError, Flag, FlagLoc, MemLoc, RegLoc, parse_instruction
from .neural import (
    Encoder,
    TrainConfig,
    desk_config,
    embed_samples,
    evaluate_classifier,
    evaluate_ssm,
    finetune_classifier,
    finetune_siamese,
    finetune_token,
    load_checkpoint,
    paper_config,
    pretrain,
    save_checkpoint,
    write_metrics,
)
from .normalize import normalize_instruction, normalize_symexpr
from .slicer import extract_function_strands
from .symx import (
    RepresentativeSet,
    SymExecError,
    execute_instructions,
    parse_assign,
)
from .tokenizer import Vocab, encode, encode_marked_block, train_vocab

log = logging.getLogger("strandforge")

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class CliError(Exception):
    """A subcommand failed in an expected, reportable way."""


@dataclass
class RunManifest:
    """What produced a set of outputs, sufficient to reproduce them."""

    command: list[str]
    seed: int
    version: str = __version__
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    wall_time_s: float = 0.0

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _out(args: argparse.Namespace, name: str) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


def _write_manifest(
    args: argparse.Namespace,
    command: str,
    inputs: list[str],
    outputs: list[str],
    t0: float,
) -> None:
    manifest = RunManifest(
        command=list(sys.argv[1:]) or [command],
        seed=getattr(args, "seed", 0),
        inputs={p: _sha256(p) for p in inputs},
        outputs={p: _sha256(p) for p in outputs},
        wall_time_s=round(time.time() - t0, 3),
    )
    manifest.write(_out(args, f"{command}.manifest.json"))


def _output_to_json(output) -> dict | None:
    if output is None:
        return None
    if isinstance(output, RegLoc):
        return {"reg": output.family, "lo": output.lo, "hi": output.hi}
    if isinstance(output, MemLoc):
        return {"mem": output.text, "size": output.size}
    return {"flag": output.flag.value}


def _output_from_json(raw: dict | None):
    if raw is None:
        return None
    if "reg" in raw:
        return RegLoc(raw["reg"], raw["lo"], raw["hi"])
    if "mem" in raw:
        return MemLoc(raw["mem"], raw["size"])
    return FlagLoc(Flag(raw["flag"]))


def _strand_row(strand) -> dict:
    return {
        "strand_id": strand.strand_id,
        "function_id": strand.function_id,
        "block_id": strand.block_id,
        "role": strand.role,
        "anchor": strand.anchor,
        "output": _output_to_json(strand.output),
        "indices": list(strand.indices),
        "executable": strand.executable,
        "asm": list(strand.asm),
    }


def _parse_lines(lines: list[str]) -> list:
    return [parse_instruction(text, index=i) for i, text in enumerate(lines)]


def _load_rep_sets(path: str) -> dict[str, RepresentativeSet]:
    reps: dict[str, RepresentativeSet] = {}
    for row in read_jsonl(path):
        assigns = tuple(parse_assign(text) for text in row["assigns"])
        reps[row["strand_id"]] = RepresentativeSet(row["strand_id"], assigns)
    return reps


def _aligned_rep_sets(
    strand_rows: list[dict], reps: dict[str, RepresentativeSet]
) -> list[RepresentativeSet | None]:
    return [reps.get(row["strand_id"]) for row in strand_rows]


class _RowStrand:
    """Strand view over a strands.jsonl row, as corpus builders expect."""

    __slots__ = ("strand_id", "function_id", "block_id", "role", "anchor",
                 "output", "indices", "executable", "asm", "instructions")

    def __init__(self, row: dict):
        self.strand_id = row["strand_id"]
        self.function_id = row.get("function_id", "")
        self.block_id = row.get("block_id", "")
        self.role = row.get("role", "value")
        self.anchor = row.get("anchor", 0)
        self.output = _output_from_json(row.get("output"))
        self.indices = tuple(row.get("indices", ()))
        self.executable = bool(row.get("executable", True))
        self.asm = tuple(row["asm"])
        self.instructions = _parse_lines(list(row["asm"]))


# ── subcommands ──────────────────────────────────────────────────────────


def cmd_ingest(args: argparse.Namespace) -> list[str]:
    functions = list(load_functions(args.functions))
    out = _out(args, "functions.jsonl")
    count = dump_functions(functions, out)
    log.info("ingested %d functions from %s", count, args.functions)
    return [out]


def cmd_strands(args: argparse.Namespace) -> list[str]:
    rows = []
    for fn in load_functions(args.functions):
        for strand in extract_function_strands(fn):
            rows.append(_strand_row(strand))
    out = _out(args, "strands.jsonl")
    write_jsonl(out, rows)
    log.info("extracted %d strands", len(rows))
    return [out]


def _symexec_chunk(rows: list[dict]) -> tuple[list[dict], list[dict]]:
    done: list[dict] = []
    failed: list[dict] = []
    for row in rows:
        if not row.get("executable", True):
            failed.append(
                {
                    "strand_id": row["strand_id"],
                    "error": "UnsupportedForExec",
                    "message": "marked non-executable at slicing",
                }
            )
            continue
        try:
            reps = execute_instructions(
                _parse_lines(row["asm"]), strand_id=row["strand_id"]
            )
        except SymExecError as exc:
            failed.append(
                {
                    "strand_id": row["strand_id"],
                    "error": type(exc).__name__,
                    "message": str(exc),
                }
            )
            continue
        done.append(
            {"strand_id": row["strand_id"], "assigns": [str(a) for a in reps.assigns]}
        )
    return done, failed


def cmd_symexec(args: argparse.Namespace) -> list[str]:
    rows = read_jsonl(args.strands)
    if args.jobs > 1 and len(rows) > 1:
        chunks = [rows[i :: args.jobs] for i in range(args.jobs)]
        with Pool(args.jobs) as pool:
            parts = pool.map(_symexec_chunk, chunks)
        # chunks are round-robin; restitch by strand order of the input
        by_id: dict[str, dict] = {}
        bad_by_id: dict[str, dict] = {}
        for done, failed in parts:
            by_id.update((r["strand_id"], r) for r in done)
            bad_by_id.update((r["strand_id"], r) for r in failed)
        done = [by_id[r["strand_id"]] for r in rows if r["strand_id"] in by_id]
        failed = [bad_by_id[r["strand_id"]] for r in rows if r["strand_id"] in bad_by_id]
    else:
        done, failed = _symexec_chunk(rows)
    out = _out(args, "symexprs.jsonl")
    report = _out(args, "unexecutable.jsonl")
    write_jsonl(out, done)
    write_jsonl(report, failed)
    log.info("executed %d strands, %d unexecutable", len(done), len(failed))
    return [out, report]


def cmd_normalize(args: argparse.Namespace) -> list[str]:
    strand_rows = read_jsonl(args.strands)
    reps = _load_rep_sets(args.symexprs) if args.symexprs else {}
    functions = (
        {fn.function_id: fn for fn in load_functions(args.functions)}
        if args.functions
        else {}
    )
    rows = []
    for row in strand_rows:
        fn = functions.get(row.get("function_id", ""))
        normed = []
        for text in row["asm"]:
            instr = parse_instruction(text)
            kind = resolve_call_target(instr, fn) if fn is not None else None
            normed.append(normalize_instruction(instr, kind))
        rep = reps.get(row["strand_id"])
        exprs = [normalize_symexpr(str(a)) for a in rep.assigns] if rep else []
        rows.append({"strand_id": row["strand_id"], "asm": normed, "symexprs": exprs})
    out = _out(args, "normalized.jsonl")
    write_jsonl(out, rows)
    return [out]


def _row_lines(row: dict) -> list[str]:
    text = " ".join(row.get("asm", []))
    exprs = row.get("symexprs") or ([row["symexpr"]] if row.get("symexpr") else [])
    if exprs:
        return [f"{text} {expr}" if text else expr for expr in exprs]
    return [text] if text else []


def cmd_tok_train(args: argparse.Namespace) -> list[str]:
    lines: list[str] = []
    for path in args.inputs:
        if path.endswith(".jsonl"):
            for row in read_jsonl(path):
                lines.extend(_row_lines(row))
        else:
            with open(path, encoding="utf-8") as fh:
                lines.extend(line.rstrip("\n") for line in fh if line.strip())
    vocab = train_vocab(lines, max_vocab=args.max_vocab, max_seq=args.max_seq)
    out = _out(args, "vocab.txt")
    vocab.save(out)
    log.info("trained vocabulary of %d tokens from %d lines", len(vocab), len(lines))
    return [out]


def _synth_inputs(args: argparse.Namespace):
    corpus = synth_equivalence_corpus(
        args.n, seed=args.seed, min_strands=args.min_strands
    )
    strands = corpus.strands
    return corpus, list(strands), [s.reps for s in strands]


def _pipeline_inputs(args: argparse.Namespace):
    if args.synth:
        _, strands, reps = _synth_inputs(args)
        return strands, reps
    if not args.strands or not args.symexprs:
        raise CliError("need --strands and --symexprs (or --synth)")
    strand_rows = read_jsonl(args.strands)
    strands = [_RowStrand(r) for r in strand_rows]
    reps = _aligned_rep_sets(strand_rows, _load_rep_sets(args.symexprs))
    return strands, reps


def cmd_corpus(args: argparse.Namespace) -> list[str]:
    if args.task == "synth":
        corpus, strands, _ = _synth_inputs(args)
        strand_rows = [
            {
                "strand_id": s.strand_id,
                "asm": list(s.asm),
                "assigns": [str(a) for a in s.reps.assigns],
            }
            for s in strands
        ]
        out_strands = _out(args, "synth_strands.jsonl")
        out_pairs = _out(args, "synth_pairs.jsonl")
        write_jsonl(out_strands, strand_rows)
        write_jsonl(out_pairs, corpus.pair_rows())
        return [out_strands, out_pairs]

    strands, reps = _pipeline_inputs(args)
    if args.task == "ssm":
        rows = [p.to_row() for p in build_ssm_corpus(strands, reps, seed=args.seed)]
        out = _out(args, "ssm.jsonl")
    elif args.task == "elm":
        rows = [s.to_row() for s in build_elm_corpus(strands, reps)]
        out = _out(args, "elm.jsonl")
    elif args.task == "exec":
        rows = [
            s.to_row()
            for s in build_exec_dataset(strands, reps, args.n, seed=args.seed)
        ]
        out = _out(args, "exec.jsonl")
    else:  # pairs
        from .bench import strand_similarity_rows

        rows = strand_similarity_rows(strands, reps, args.seed)
        out = _out(args, "pairs.jsonl")
    write_jsonl(out, rows)
    log.info("%s corpus: %d rows", args.task, len(rows))
    return [out]


def _vocab_and_encoder(args: argparse.Namespace) -> tuple[Vocab, Encoder]:
    vocab = Vocab.load(args.vocab)
    if args.checkpoint:
        encoder, _ = load_checkpoint(args.checkpoint)
    else:
        config = (
            paper_config(len(vocab))
            if args.preset == "paper"
            else desk_config(len(vocab))
        )
        encoder = Encoder(config, seed=args.seed)
    return vocab, encoder


def _train_config(args: argparse.Namespace) -> TrainConfig:
    return TrainConfig(
        lr=args.lr,
        warmup_steps=args.warmup,
        batch=args.batch,
        epochs=args.epochs,
        seed=args.seed,
    )


def cmd_pretrain(args: argparse.Namespace) -> list[str]:
    vocab, encoder = _vocab_and_encoder(args)
    rows = read_jsonl(args.corpus)
    splits = split_rows(rows, seed=args.seed)
    history = pretrain(
        encoder, splits["train"], vocab, _train_config(args),
        mp=args.mask_prob, max_steps=args.steps,
    )
    out = _out(args, "checkpoint.npz")
    metrics = _out(args, "metrics.csv")
    save_checkpoint(encoder, out, vocab_hash=_sha256(args.vocab))
    write_metrics(metrics, history)
    for name in ("val", "test"):
        if splits[name]:
            log.info("%s SSM accuracy %.4f", name, evaluate_ssm(encoder, splits[name], vocab))
    return [out, metrics]


def _pair_samples(rows, vocab):
    return (
        [encode(r["a"], None, vocab) for r in rows],
        [encode(r["b"], None, vocab) for r in rows],
        np.array([int(r["label"]) for r in rows]),
    )


def _pair_scores(encoder, rows, vocab, mode="finetuned") -> np.ndarray:
    side_a, side_b, _ = _pair_samples(rows, vocab)
    emb_a = embed_samples(encoder, side_a, mode)
    emb_b = embed_samples(encoder, side_b, mode)
    num = (emb_a * emb_b).sum(axis=1)
    den = np.linalg.norm(emb_a, axis=1) * np.linalg.norm(emb_b, axis=1)
    return num / np.maximum(den, 1e-12)


_CLASS_TASKS = {"compiler": "label", "optimization": "label", "execution": "label"}


def _classifier_data(rows, vocab, task):
    if task == "execution":
        samples = [
            encode([r["text"]], None, vocab) if "text" in r else
            encode(r["asm"], " ; ".join(r["assignments"]), vocab)
            for r in rows
        ]
    else:
        samples = [encode(truncate_function(r["asm"]), None, vocab) for r in rows]
    labels = [int(r["label"]) for r in rows]
    return samples, labels


def cmd_finetune(args: argparse.Namespace) -> list[str]:
    vocab, encoder = _vocab_and_encoder(args)
    rows = read_jsonl(args.corpus)
    task = args.task
    config = _train_config(args)
    out = _out(args, "checkpoint.npz")
    metrics = _out(args, "metrics.csv")

    if task in ("strand-similarity", "block-similarity"):
        splits = split_rows(rows, seed=args.seed, key=lambda r: json.dumps(r["a"]))
        history: list[dict] = []
        best = (-1.0, None)
        for epoch in range(args.epochs):
            cfg = TrainConfig(
                lr=config.lr, warmup_steps=config.warmup_steps if epoch == 0 else 0,
                batch=config.batch, epochs=1, seed=config.seed + epoch,
            )
            history += finetune_siamese(encoder, splits["train"], vocab, cfg)
            _, _, labels = _pair_samples(splits["val"], vocab)
            auc = roc_auc(
                (labels > 0).astype(int), _pair_scores(encoder, splits["val"], vocab)
            )
            log.info("epoch %d val AUC %.4f", epoch, auc)
            if auc > best[0]:
                best = (auc, {k: v.data.copy() for k, v in encoder.params.items()})
        if best[1] is not None:
            for name, data in best[1].items():
                encoder.params[name].data[...] = data
    elif task in _CLASS_TASKS:
        samples_all, labels_all = _classifier_data(rows, vocab, task)
        keyed = [
            {"i": i, "key": " ".join(map(str, r.get("asm", r.get("text", ""))))}
            for i, r in enumerate(rows)
        ]
        splits = split_rows(keyed, seed=args.seed, key=lambda r: r["key"])
        n_classes = max(labels_all) + 1
        pick = lambda part: (
            [samples_all[r["i"]] for r in part],
            [labels_all[r["i"]] for r in part],
        )
        train_s, train_l = pick(splits["train"])
        val_s, val_l = pick(splits["val"])
        history = []
        best = (-1.0, None)
        for epoch in range(args.epochs):
            cfg = TrainConfig(
                lr=config.lr, warmup_steps=config.warmup_steps if epoch == 0 else 0,
                batch=config.batch, epochs=1, seed=config.seed + epoch,
            )
            history += finetune_classifier(encoder, train_s, train_l, n_classes, cfg)
            acc = evaluate_classifier(encoder, val_s, val_l)
            log.info("epoch %d val accuracy %.4f", epoch, acc)
            if acc > best[0]:
                best = (acc, {k: v.data.copy() for k, v in encoder.params.items()})
        if best[1] is not None:
            for name, data in best[1].items():
                encoder.params[name].data[...] = data
    elif task == "recovery":
        samples = [encode_marked_block(r["asm"], r["marked"], vocab) for r in rows]
        marked = [r["marked"] for r in rows]
        labels = [r["labels"] for r in rows]
        history = finetune_token(encoder, samples, marked, labels, config)
    else:
        raise CliError(f"unknown finetune task {task!r}")

    save_checkpoint(encoder, out, vocab_hash=_sha256(args.vocab))
    write_metrics(metrics, history)
    return [out, metrics]


def cmd_embed(args: argparse.Namespace) -> list[str]:
    vocab = Vocab.load(args.vocab)
    encoder, _ = load_checkpoint(args.checkpoint)
    rows = read_jsonl(args.input)
    ids = [r.get("strand_id") or r["id"] for r in rows]
    groups = [
        r.get("group") or (str(r.get("strand_id", ":")).split(":") + [""])[1]
        for r in rows
    ]
    samples = [encode(r["asm"], None, vocab) for r in rows]
    vectors = embed_samples(encoder, samples, args.mode)
    out = _out(args, "embeddings.csv")
    from .bench import write_embeddings_csv

    write_embeddings_csv(out, ids, groups, vectors)
    return [out]


def _read_embeddings_csv(path: str):
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        dim = len(header) - 2
        ids, groups, vectors = [], [], []
        for row in reader:
            ids.append(row[0])
            groups.append(row[1])
            vectors.append([float(x) for x in row[2 : 2 + dim]])
    return ids, groups, np.array(vectors, dtype=np.float64)


def cmd_bench(args: argparse.Namespace) -> list[str]:
    ks = [int(k) for k in args.k.split(",")] if args.k else [10]
    if args.task == "strand-sim":
        ids, groups, vectors = _read_embeddings_csv(args.embeddings)
        db = SimilarityDb(ids=ids, embeddings=vectors, groups=groups)
        rows = [dict(task=args.task, split="test", **r) for r in evaluate_db(db, ks)]
    elif args.task in ("outlier-opcode", "outlier-operand"):
        vocab = Vocab.load(args.vocab)
        encoder, _ = load_checkpoint(args.checkpoint)
        basis = args.task.split("-")[1]

        def embed_fn(text: str) -> np.ndarray:
            sample = encode([text], None, vocab)
            return embed_samples(encoder, [sample], args.mode)[0]

        values = []
        for run in range(args.runs):
            sets = make_outlier_sets(args.n_sets, basis, seed=args.seed + run)
            values.append(outlier_accuracy(embed_fn, sets))
        rows = [
            {"task": args.task, "split": "test", "metric": "outlier-mean",
             "k": "", "value": float(np.mean(values))},
            {"task": args.task, "split": "test", "metric": "outlier-std",
             "k": "", "value": float(np.std(values))},
        ]
    else:
        raise CliError(f"unknown bench task {args.task!r}")
    out = _out(args, "results.csv")
    write_results_csv(out, rows, args.seed)
    return [out]


# ── argument plumbing ────────────────────────────────────────────────────


class _Parser(argparse.ArgumentParser):
    def __init__(self, *a, **kw):
        kw.setdefault("allow_abbrev", False)
        super().__init__(*a, **kw)

    def error(self, message: str) -> None:  # type: ignore[override]
        json.dump({"error": "UsageError", "message": message}, sys.stderr)
        sys.stderr.write("\n")
        raise SystemExit(2)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--config", help="key=value file; explicit flags win")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--vocab", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", help="resume from an existing checkpoint")
    p.add_argument("--preset", choices=("desk", "paper"), default="desk")
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--warmup", type=int, default=0)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--steps", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="strandforge")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[], help="validate a function CFG file")
    p.add_argument("functions")
    _add_common(p)
    p.set_defaults(run=cmd_ingest)

    p = sub.add_parser("strands", help="slice blocks into strands")
    p.add_argument("--functions", required=True)
    _add_common(p)
    p.set_defaults(run=cmd_strands)

    p = sub.add_parser("symexec", help="symbolic execution of strands")
    p.add_argument("--strands", required=True)
    _add_common(p)
    p.set_defaults(run=cmd_symexec)

    p = sub.add_parser("normalize", help="normalize assembly and expressions")
    p.add_argument("--strands", required=True)
    p.add_argument("--symexprs")
    p.add_argument("--functions")
    _add_common(p)
    p.set_defaults(run=cmd_normalize)

    p = sub.add_parser("tok-train", help="learn a subword vocabulary")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--max-vocab", type=int, default=4096)
    p.add_argument("--max-seq", type=int, default=512)
    _add_common(p)
    p.set_defaults(run=cmd_tok_train)

    p = sub.add_parser("corpus", help="build a training corpus")
    p.add_argument("--task", required=True,
                   choices=("elm", "ssm", "exec", "pairs", "synth"))
    p.add_argument("--strands")
    p.add_argument("--symexprs")
    p.add_argument("--synth", action="store_true",
                   help="use a generated equivalence corpus as input")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--min-strands", type=int, default=None)
    _add_common(p)
    p.set_defaults(run=cmd_corpus)

    p = sub.add_parser("pretrain", help="joint masked-token and membership training")
    _add_train_flags(p)
    p.add_argument("--mask-prob", type=float, default=0.3)
    _add_common(p)
    p.set_defaults(run=cmd_pretrain)

    p = sub.add_parser("finetune", help="task-specific training from a checkpoint")
    p.add_argument("--task", required=True,
                   choices=("strand-similarity", "block-similarity", "compiler",
                            "optimization", "recovery", "execution"))
    _add_train_flags(p)
    _add_common(p)
    p.set_defaults(run=cmd_finetune)

    p = sub.add_parser("embed", help="write embeddings for a set of strands")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--mode", choices=("intrinsic", "finetuned"), default="intrinsic")
    _add_common(p)
    p.set_defaults(run=cmd_embed)

    p = sub.add_parser("bench", help="similarity and outlier benchmarks")
    p.add_argument("--task", required=True,
                   choices=("strand-sim", "outlier-opcode", "outlier-operand"))
    p.add_argument("-k", default="")
    p.add_argument("--embeddings")
    p.add_argument("--checkpoint")
    p.add_argument("--vocab")
    p.add_argument("--mode", choices=("intrinsic", "finetuned"), default="intrinsic")
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--n-sets", type=int, default=200)
    _add_common(p)
    p.set_defaults(run=cmd_bench)

    return parser


# config keys that may appear in a key=value file, with their types.
_CONFIG_TYPES: dict[str, type] = {
    "seed": int, "jobs": int, "out_dir": str, "preset": str,
    "lr": float, "warmup": int, "batch": int, "epochs": int, "steps": int,
    "mask_prob": float, "max_vocab": int, "max_seq": int,
    "n": int, "min_strands": int, "runs": int, "n_sets": int,
    "mode": str, "k": str, "task": str,
}


def _load_config(path: str) -> dict[str, object]:
    values: dict[str, object] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise CliError(f"bad config line: {line!r}")
            key, raw = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in _CONFIG_TYPES:
                raise CliError(f"unknown config key: {key}")
            values[key] = _CONFIG_TYPES[key](raw)
    return values


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    explicit = {
        token.lstrip("-").split("=", 1)[0].replace("-", "_")
        for token in argv
        if token.startswith("-") and not token.lstrip("-")[:1].isdigit()
    }
    for key, value in _load_config(args.config).items():
        if key not in explicit and hasattr(args, key):
            setattr(args, key, value)
    return args


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("STRANDFORGE_LOG", "info").lower()
    logging.basicConfig(
        level=_LOG_LEVELS.get(level, logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    parser = build_parser()
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    inputs = [
        value
        for name in ("functions", "strands", "symexprs", "corpus", "vocab",
                     "checkpoint", "input", "embeddings", "config")
        for value in [getattr(args, name, None)]
        if value and os.path.exists(value)
    ]
    inputs += [p for p in getattr(args, "inputs", []) if os.path.exists(p)]
    t0 = time.time()
    try:
        outputs = args.run(args)
    except (CliError, ValidationError, AsmSyntaxError, SymExecError,
            FileNotFoundError, ValueError) as exc:
        json.dump(
            {"error": type(exc).__name__, "message": str(exc)}, sys.stderr
        )
        sys.stderr.write("\n")
        return 1
    _write_manifest(args, args.command, inputs, outputs, t0)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
