"""Command-line entry point.

Exit codes: 0 success, 2 usage or configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .ids import (
    GRANULARITIES,
    Decomposer,
    IdsError,
    RadicalInventory,
    flatten,
    parse_ids,
    read_ids_file,
    reconstruct,
    serialize,
    stop_set,
    to_bor,
)
from .metrics import EvalReport, compare
from .models import ConfigError, DivergedLoss, PronunciationModel, TrainConfig, model_grad_check
from .unihan import TooFewEntries, ingest, load_dataset

log = logging.getLogger("hanpron")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3


class UsageError(Exception):
    """Bad arguments, config or inputs; maps to exit code 2."""


class UnknownLogograph(UsageError):
    pass


# --- subcommands ------------------------------------------------------------


def cmd_ingest(args) -> int:
    from .pipeline import raw_data_dir

    root = raw_data_dir(args.data_root)
    unihan = Path(args.unihan) if args.unihan else root / "unihan" / "Unihan_Readings.txt"
    ids = Path(args.ids) if args.ids else root / "ids" / "ids.tsv"
    for p in (unihan, ids) + ((Path(args.tables),) if args.tables else ()):
        if not p.exists():
            raise UsageError(f"input not found: {p}")
    if args.granularity not in GRANULARITIES:
        raise UsageError(f"granularity must be one of {GRANULARITIES}")
    try:
        manifest = ingest(unihan, ids, args.out, seed=args.seed, tables_path=args.tables,
                          granularity=args.granularity, min_support=args.min_support,
                          korean_field=args.korean_field)
    except TooFewEntries as exc:
        raise UsageError(str(exc)) from exc
    counts = manifest["counts"]
    cov = manifest["coverage"]["test"]
    print(f"entries: train {counts['train']}  dev {counts['dev']}  test {counts['test']}")
    print(f"test coverage: all three cognate languages {cov['all_three_pct']:.1f}%  none {cov['none_pct']:.1f}%")
    print(f"radical inventory: {manifest['inventory_size']}  written to {args.out}")
    return EXIT_OK


def _ids_table(path: Path) -> dict:
    if not path.exists():
        raise UsageError(f"IDS database not found: {path}")
    return read_ids_file(path)


def cmd_decompose(args) -> int:
    from .pipeline import raw_data_dir

    if args.granularity not in GRANULARITIES:
        raise UsageError(f"granularity must be one of {GRANULARITIES}")
    ids_db = _ids_table(Path(args.ids) if args.ids else raw_data_dir(args.data_root) / "ids" / "ids.tsv")
    chars = list(args.chars)
    if args.file:
        chars += [ch for ch in Path(args.file).read_text(encoding="utf-8") if not ch.isspace()]
    if not chars:
        raise UsageError("nothing to decompose")
    inventory = None
    if args.data:
        inventory = load_dataset(args.data).inventory
    table = {}
    for ch, ids in ids_db.items():
        if ids != ch:
            try:
                table[ch] = flatten(parse_ids(ids))
            except IdsError:
                pass
    decomposer = Decomposer(table, stop_set(args.granularity))
    for text in chars:
        for ch in text:
            if ch not in ids_db:
                raise UnknownLogograph(f"no IDS entry for {ch} (U+{ord(ch):04X})")
            seq = decomposer.logograph(ch, ids_db[ch])
            if flatten(reconstruct(seq)) != seq:
                raise AssertionError(f"round-trip failed for {ch}")
            line = f"{ch}\t{' '.join(seq)}"
            inv = inventory or RadicalInventory.from_sequences([seq])
            bor = to_bor(seq, inv)
            nz = {inv.radicals[i]: n for i, n in enumerate(bor.counts) if n}
            if bor.unk:
                nz["UNK"] = bor.unk
            line += "\t" + " ".join(f"{r}:{n}" for r, n in nz.items())
            print(line)
            if args.verbose:
                print(f"\tIDS {serialize(seq)}")
    return EXIT_OK


def _load_config(path: str, seed: Optional[int]) -> TrainConfig:
    try:
        cfg = TrainConfig.load(path)
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc
    if seed is not None:
        cfg = TrainConfig.from_json({**cfg.to_json(), "seed": seed})
    return cfg


def _load_data(path):
    from .pipeline import dataset_dir

    d = dataset_dir(path)
    try:
        return load_dataset(d)
    except (FileNotFoundError, ValueError) as exc:
        raise UsageError(f"cannot load dataset from {d}: {exc}") from exc


def cmd_train(args) -> int:
    from .pipeline import RunDirExists, run_training

    cfg = _load_config(args.config, args.seed)
    data = _load_data(args.data)
    out = Path(args.out)
    if (out / "manifest.json").exists() and not args.overwrite:
        raise UsageError(f"{out} already holds a run (use --overwrite)")
    try:
        run_training(cfg, data, out, name=Path(args.config).stem, overwrite=args.overwrite)
    except RunDirExists as exc:
        raise UsageError(str(exc)) from exc
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    print(f"trained {cfg.model} ({manifest['epochs_run']} epochs, best {manifest['best_epoch']}) -> {out}")
    return EXIT_OK


def _model(path: str):
    from .pipeline import load_model

    try:
        return load_model(path)
    except (FileNotFoundError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot load model {path}: {exc}") from exc


def cmd_eval(args) -> int:
    from .pipeline import evaluate

    model = _model(args.model)
    data = _load_data(args.data)
    entries = data.part(args.split)
    run_manifest = Path(args.model) / "manifest.json" if Path(args.model).is_dir() else None
    meta = {"model": args.name or Path(args.model).name, "split": args.split}
    if run_manifest and run_manifest.exists():
        rm = json.loads(run_manifest.read_text(encoding="utf-8"))
        meta.update(model=args.name or rm["name"], config_hash=rm["config_hash"], seed=rm["seed"],
                    data_manifest_hash=rm["data_manifest_hash"])
    report = evaluate(model, entries, meta)
    if args.out:
        Path(args.out).write_text(report.dumps(), encoding="utf-8")
    print(compare([report], [meta["model"]]).text(), end="")
    if args.json:
        print(report.dumps(), end="")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = _model(args.model)
    data = _load_data(args.data)
    known = {e.logograph: e for part in (data.train, data.dev, data.test) for e in part}
    chars = [ch for text in args.chars for ch in text]
    missing = [ch for ch in chars if ch not in known]
    if missing:
        raise UnknownLogograph("not in the dataset: " + " ".join(f"{c} (U+{ord(c):04X})" for c in missing))
    from .unihan import attach_bor

    entries = attach_bor([known[ch] for ch in chars], model.inventory)
    for ch, parts in zip(chars, model.predict(entries)):
        print(f"{ch}\t{parts}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .pipeline import synthetic_entries

    cfg = _load_config(args.config, args.seed)
    if cfg.model == "dt":
        raise UsageError("gradient checks apply to neural models only")
    entries = synthetic_entries(args.entries, cfg.seed)
    from .ids import RadicalInventory as Inv
    from .phonology import build_vocab
    from .unihan import attach_bor

    inv = Inv.from_sequences(e.geod for e in entries)
    entries = attach_bor(entries, inv)
    model = PronunciationModel(cfg, inv, build_vocab(entries))
    rep = model_grad_check(model, entries, n_samples=args.samples, tolerance=args.tolerance, seed=cfg.seed,
                           corrupt=args.corrupt)
    out = {"model": cfg.model, "head": cfg.head, "max_rel_error": rep.max_rel_error, "checked": rep.n_checked,
           "worst": [rep.worst[0], list(rep.worst[1])] if rep.worst else None, "tolerance": rep.tolerance,
           "floor": rep.floor, "passed": bool(rep.passed)}
    print(json.dumps(out, indent=2))
    return EXIT_OK if rep.passed else EXIT_RUNTIME


def cmd_compare(args) -> int:
    reports = []
    for p in args.reports:
        try:
            reports.append(EvalReport.from_json(json.loads(Path(p).read_text(encoding="utf-8"))))
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot read report {p}: {exc}") from exc
    names = args.names.split(",") if args.names else None
    if names and len(names) != len(reports):
        raise UsageError("--names must list one name per report")
    table = compare(reports, names)
    print(table.text(), end="")
    if args.json:
        Path(args.json).write_text(json.dumps(table.to_json(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    from .pipeline import ABLATION, MULTIMODAL, UNIMODAL, dataset_dir, run_suite, write_tables

    names = args.only.split(",") if args.only else list(UNIMODAL + MULTIMODAL + ABLATION)
    _load_data(args.data)
    results = run_suite(dataset_dir(args.data), args.out, names, use_cache=not args.no_cache)
    print(write_tables(results, args.out), end="")
    return EXIT_OK


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hanpron", description="Predict Cantonese readings of Han characters.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-q", "--quiet", action="store_true", help="only print results and errors")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="build train/dev/test files from UniHan readings and IDS data")
    s.add_argument("--unihan", help="Unihan_Readings.txt-style file")
    s.add_argument("--ids", help="IDS file (U+XXXX, char, IDS per line)")
    s.add_argument("--tables", help="segmentation table TSV (defaults to the bundled one)")
    s.add_argument("--data-root", help="raw data directory (default $HANPRON_DATA_DIR or ./data)")
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--granularity", default="radical", help=f"one of {', '.join(GRANULARITIES)}")
    s.add_argument("--min-support", type=int, default=3)
    s.add_argument("--korean-field", default="kKorean", choices=("kKorean", "kHangul"))
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("decompose", help="print GeoD tokens and radical counts")
    s.add_argument("chars", nargs="*")
    s.add_argument("--file", help="decompose every character in this file")
    s.add_argument("--ids", help="IDS file")
    s.add_argument("--data-root")
    s.add_argument("--data", help="ingested dataset whose radical inventory indexes the counts")
    s.add_argument("--granularity", default="radical")
    s.add_argument("-v", "--verbose", action="store_true")
    s.set_defaults(func=cmd_decompose)

    s = sub.add_parser("train", help="train a model from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--data", help="ingested dataset (default $HANPRON_DATASET_DIR or ./work/dataset)")
    s.add_argument("--out", required=True, help="run directory")
    s.add_argument("--seed", type=int)
    s.add_argument("--overwrite", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="score a trained model on a split")
    s.add_argument("--model", required=True, help="run directory or model file")
    s.add_argument("--data")
    s.add_argument("--split", default="test", choices=("train", "dev", "test"))
    s.add_argument("--name", help="row label")
    s.add_argument("--out", help="write the JSON report here")
    s.add_argument("--json", action="store_true", help="also print the JSON report")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("predict", help="predict onset, nucleus and coda for characters")
    s.add_argument("chars", nargs="+")
    s.add_argument("--model", required=True)
    s.add_argument("--data")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("gradcheck", help="finite-difference check of a model's gradients")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--entries", type=int, default=4)
    s.add_argument("--samples", type=int, default=None, help="sampled coordinates (default: all)")
    s.add_argument("--tolerance", type=float, default=1e-5)
    s.add_argument("--corrupt", action="store_true", help="negative control with a broken gradient")
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("compare", help="tabulate evaluation reports")
    s.add_argument("reports", nargs="+")
    s.add_argument("--names", help="comma-separated row labels")
    s.add_argument("--json", help="write the table as JSON here")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("reproduce", help="train and evaluate the full comparison suite")
    s.add_argument("--data")
    s.add_argument("--out", default="results")
    s.add_argument("--only", help="comma-separated experiment names")
    s.add_argument("--no-cache", action="store_true")
    s.set_defaults(func=cmd_reproduce)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(message)s",
                        stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergedLoss as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError, RuntimeError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
