"""UniHan readings ingestion: parse reading fields, join them with IDS
decompositions into lexicon entries, split deterministically, and store
model-ready datasets on disk."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import warnings
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from . import __version__
from .ids import (
    Decomposer,
    IdsError,
    RadicalInventory,
    flatten,
    parse_ids,
    stop_set,
    to_bor,
)
from .phonology import (
    SOURCE_LANGUAGES,
    Language,
    LexiconEntry,
    PhonemeVocab,
    SegmentationTable,
    SyllableParts,
    UnparsableSyllable,
    build_vocab,
    default_tables,
    hangul_to_yale,
    segment,
)

logger = logging.getLogger(__name__)

SUPPORTED_FIELDS = ("kCantonese", "kMandarin", "kKorean", "kVietnamese", "kHangul")
KOREAN_FIELDS = ("kKorean", "kHangul")
DATASET_FORMAT_VERSION = 1
SPLIT_NAMES = ("train", "dev", "test")


class MalformedLine(UserWarning):
    pass


class TooFewEntries(ValueError):
    pass


@dataclass(frozen=True)
class RawReadingRecord:
    codepoint: int
    field_name: str
    value: str

    def __post_init__(self):
        if not (0 <= self.codepoint <= 0x10FFFF) or 0xD800 <= self.codepoint <= 0xDFFF:
            raise ValueError(f"not a Unicode scalar value: {self.codepoint:#x}")
        if self.field_name not in SUPPORTED_FIELDS:
            raise ValueError(f"unsupported field {self.field_name!r}")

    @property
    def char(self) -> str:
        return chr(self.codepoint)

    @property
    def readings(self) -> list[str]:
        return self.value.split()


def parse_unihan(
    path: Union[str, Path],
    fields: Sequence[str] = SUPPORTED_FIELDS,
    stats: Optional[Counter] = None,
) -> list[RawReadingRecord]:
    """Records for the requested reading fields of a ``Unihan_Readings.txt``
    style file. Malformed lines emit a :class:`MalformedLine` warning naming
    the line number and are skipped."""
    stats = stats if stats is not None else Counter()
    wanted = set(fields)
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                stats["comment_or_blank"] += 1
                continue
            cols = line.split("\t")
            if len(cols) != 3 or not cols[0].startswith("U+") or not cols[2].strip():
                warnings.warn(MalformedLine(f"{path}:{lineno}: malformed readings line {line!r}"), stacklevel=2)
                stats["malformed"] += 1
                continue
            try:
                cp = int(cols[0][2:], 16)
            except ValueError:
                warnings.warn(MalformedLine(f"{path}:{lineno}: bad codepoint {cols[0]!r}"), stacklevel=2)
                stats["malformed"] += 1
                continue
            if cols[1] not in wanted:
                stats["skipped_field"] += 1
                continue
            try:
                records.append(RawReadingRecord(cp, cols[1], cols[2].strip()))
            except ValueError as exc:
                warnings.warn(MalformedLine(f"{path}:{lineno}: {exc}"), stacklevel=2)
                stats["malformed"] += 1
                continue
            stats[cols[1]] += 1
    logger.info("parsed %d reading records from %s", len(records), path)
    return records


def _korean_readings(field_name: str, value: str) -> list[str]:
    if field_name == "kHangul":
        # newer releases append ":source" tags to each Hangul reading
        return [hangul_to_yale(tok.split(":", 1)[0]) for tok in value.split()]
    return value.split()


_FIELD_LANGUAGE = {
    "kMandarin": Language.MANDARIN,
    "kVietnamese": Language.VIETNAMESE,
}


def assemble(
    records: Iterable[RawReadingRecord],
    ids_db: Mapping[str, str],
    tables: Optional[Mapping[Language, SegmentationTable]] = None,
    granularity: str = "radical",
    korean_field: str = "kKorean",
    stats: Optional[Counter] = None,
) -> list[LexiconEntry]:
    """Lexicon entries, sorted by codepoint, for logographs that have a
    segmentable Cantonese reading and a parsable IDS.

    The first Cantonese reading is the target. Cognate readings are
    segmented; unsegmentable ones are dropped and counted. GeoD sequences
    are the logograph's IDS expanded to ``granularity`` through ``ids_db``.
    """
    if korean_field not in KOREAN_FIELDS:
        raise ValueError(f"korean_field must be one of {KOREAN_FIELDS}")
    stats = stats if stats is not None else Counter()
    tables = tables or default_tables()
    by_char: dict[str, dict[str, str]] = {}
    for rec in records:
        by_char.setdefault(rec.char, {})[rec.field_name] = rec.value

    table = {}
    for ch, ids in ids_db.items():
        if ids != ch:
            try:
                table[ch] = flatten(parse_ids(ids))
            except IdsError:
                pass
    decomposer = Decomposer(table, stop_set(granularity))

    entries = []
    for ch in sorted(by_char):
        fields = by_char[ch]
        stats["logographs"] += 1
        if "kCantonese" not in fields:
            stats["dropped_no_cantonese"] += 1
            continue
        if ch not in ids_db:
            stats["dropped_no_ids"] += 1
            continue
        try:
            geod = decomposer.logograph(ch, ids_db[ch])
        except IdsError:
            stats["dropped_bad_ids"] += 1
            continue
        canto = fields["kCantonese"].split()
        if len(canto) > 1:
            stats["cantonese_alternates_ignored"] += len(canto) - 1
        try:
            target = segment(Language.CANTONESE, canto[0], tables)
        except UnparsableSyllable:
            stats["dropped_unparsable_target"] += 1
            continue
        cognates = {}
        for field_name in ("kMandarin", korean_field, "kVietnamese"):
            if field_name not in fields:
                continue
            lang = _FIELD_LANGUAGE.get(field_name, Language.KOREAN)
            try:
                readings = (
                    _korean_readings(field_name, fields[field_name])
                    if lang is Language.KOREAN
                    else fields[field_name].split()
                )
            except UnparsableSyllable:
                stats[f"unparsable_{lang.value}"] += 1
                continue
            parts = []
            for reading in readings:
                try:
                    p = segment(lang, reading, tables)
                except UnparsableSyllable:
                    stats[f"unparsable_{lang.value}"] += 1
                    continue
                if p not in parts:
                    parts.append(p)
            if parts:
                cognates[lang] = tuple(parts)
        entries.append(LexiconEntry(ch, geod, target, cognates))
    stats["entries"] = len(entries)
    logger.info("assembled %d entries from %d logographs", len(entries), stats["logographs"])
    return entries


@dataclass(frozen=True)
class DatasetSplit:
    train: list[LexiconEntry]
    dev: list[LexiconEntry]
    test: list[LexiconEntry]
    seed: int

    def __post_init__(self):
        seen = set()
        for part in (self.train, self.dev, self.test):
            chars = {e.logograph for e in part}
            if len(chars) != len(part) or chars & seen:
                raise ValueError("split partitions must be disjoint by logograph")
            seen |= chars

    def parts(self) -> dict[str, list[LexiconEntry]]:
        return {"train": self.train, "dev": self.dev, "test": self.test}


def split(
    entries: Sequence[LexiconEntry],
    seed: int,
    test_fraction: float = 0.2,
    dev_size: int = 1000,
) -> DatasetSplit:
    """Seeded shuffle of the codepoint-sorted entries; the first
    round(test_fraction * N) form the test set, the next ``dev_size`` the
    dev set and the rest the training set."""
    n = len(entries)
    n_test = math.floor(test_fraction * n + 0.5)
    if n < 1250 or n - n_test - dev_size < 1:
        raise TooFewEntries(f"{n} entries are too few for an 80/20 split with {dev_size} dev entries")
    ordered = sorted(entries, key=lambda e: ord(e.logograph))
    perm = np.random.default_rng(seed).permutation(n)
    shuffled = [ordered[i] for i in perm]
    test = sorted(shuffled[:n_test], key=lambda e: ord(e.logograph))
    dev = sorted(shuffled[n_test : n_test + dev_size], key=lambda e: ord(e.logograph))
    train = sorted(shuffled[n_test + dev_size :], key=lambda e: ord(e.logograph))
    return DatasetSplit(train, dev, test, seed)


def coverage(entries: Sequence[LexiconEntry]) -> dict:
    """Percentages of entries by which source languages supply cognates."""
    n = len(entries)
    if not n:
        return {"n": 0}
    has = {lang: sum(1 for e in entries if e.cognates_for(lang)) for lang in SOURCE_LANGUAGES}
    n_langs = Counter(sum(1 for lang in SOURCE_LANGUAGES if e.cognates_for(lang)) for e in entries)
    return {
        "n": n,
        "all_three_pct": round(100.0 * n_langs[3] / n, 4),
        "none_pct": round(100.0 * n_langs[0] / n, 4),
        **{f"{lang.value}_pct": round(100.0 * has[lang] / n, 4) for lang in SOURCE_LANGUAGES},
    }


def attach_bor(entries: Sequence[LexiconEntry], inventory: RadicalInventory) -> list[LexiconEntry]:
    return [dataclasses.replace(e, bor=to_bor(e.geod, inventory)) for e in entries]


@dataclass
class PreparedDataset:
    train: list[LexiconEntry]
    dev: list[LexiconEntry]
    test: list[LexiconEntry]
    inventory: RadicalInventory
    vocab: PhonemeVocab
    manifest: dict

    def part(self, name: str) -> list[LexiconEntry]:
        if name not in SPLIT_NAMES:
            raise KeyError(f"unknown split {name!r}; expected one of {SPLIT_NAMES}")
        return getattr(self, name)


def prepare(ds: DatasetSplit, min_support: int = 3) -> tuple[RadicalInventory, PhonemeVocab, DatasetSplit]:
    """Freeze the radical inventory and phoneme vocabulary on the training
    split and attach BoR counts to every partition."""
    inventory = RadicalInventory.from_sequences((e.geod for e in ds.train), min_support)
    vocab = build_vocab(ds.train)
    out = DatasetSplit(
        attach_bor(ds.train, inventory), attach_bor(ds.dev, inventory), attach_bor(ds.test, inventory), ds.seed
    )
    return inventory, vocab, out


def sha256_file(path: Union[str, Path]) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump_jsonl(path: Path, entries: Sequence[LexiconEntry]) -> str:
    text = "".join(json.dumps(e.to_json(), ensure_ascii=False, sort_keys=True) + "\n" for e in entries)
    path.write_text(text, encoding="utf-8")
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_dataset(
    out_dir: Union[str, Path],
    ds: DatasetSplit,
    inventory: RadicalInventory,
    vocab: PhonemeVocab,
    settings: Mapping,
    ingest_stats: Mapping,
    sources: Mapping,
) -> dict:
    """Write the three partitions, vocab, inventory and manifest. The
    manifest holds no timestamps so identical inputs give identical bytes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    hashes = {name: _dump_jsonl(out / f"{name}.jsonl", part) for name, part in ds.parts().items()}
    vocab.save(out / "vocab.json")
    (out / "inventory.json").write_text(
        json.dumps({"version": DATASET_FORMAT_VERSION, "radicals": list(inventory.radicals)}, ensure_ascii=False)
        + "\n",
        encoding="utf-8",
    )
    manifest = {
        "format": "hanpron-dataset",
        "version": DATASET_FORMAT_VERSION,
        "tool_version": __version__,
        "seed": ds.seed,
        "settings": dict(settings),
        "sources": dict(sources),
        "counts": {name: len(part) for name, part in ds.parts().items()},
        "split_sha256": hashes,
        "vocab_hash": vocab.digest(),
        "vocab_sizes": {
            f"{lang.value}.{pos}": vocab.size(lang, pos) for lang in Language for pos in ("onset", "nucleus", "coda")
        },
        "inventory_size": len(inventory),
        "ingest": dict(sorted(ingest_stats.items())),
        "coverage": {name: coverage(part) for name, part in ds.parts().items()},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    return manifest


def manifest_hash(manifest: Mapping) -> str:
    blob = json.dumps(manifest, ensure_ascii=False, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def load_dataset(data_dir: Union[str, Path]) -> PreparedDataset:
    d = Path(data_dir)
    manifest_path = d / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"{d} holds no ingested dataset (manifest.json missing)")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format") != "hanpron-dataset" or manifest.get("version") != DATASET_FORMAT_VERSION:
        raise ValueError(f"{manifest_path}: unsupported dataset format")
    parts = {}
    for name in SPLIT_NAMES:
        with open(d / f"{name}.jsonl", encoding="utf-8") as fh:
            parts[name] = [LexiconEntry.from_json(json.loads(line)) for line in fh if line.strip()]
    inv = json.loads((d / "inventory.json").read_text(encoding="utf-8"))
    return PreparedDataset(
        parts["train"],
        parts["dev"],
        parts["test"],
        RadicalInventory(tuple(inv["radicals"])),
        PhonemeVocab.load(d / "vocab.json"),
        manifest,
    )


def ingest(
    unihan_path: Union[str, Path],
    ids_path: Union[str, Path],
    out_dir: Union[str, Path],
    seed: int = 42,
    tables_path: Union[str, Path, None] = None,
    granularity: str = "radical",
    min_support: int = 3,
    korean_field: str = "kKorean",
) -> dict:
    """End-to-end ingestion; returns the written manifest."""
    from .ids import read_ids_file
    from .phonology import read_tables

    tables = read_tables(tables_path) if tables_path else default_tables()
    parse_stats: Counter = Counter()
    records = parse_unihan(unihan_path, stats=parse_stats)
    ids_db = read_ids_file(ids_path)
    asm_stats: Counter = Counter()
    entries = assemble(records, ids_db, tables, granularity, korean_field, asm_stats)
    ds = split(entries, seed)
    inventory, vocab, ds = prepare(ds, min_support)
    settings = {
        "granularity": granularity,
        "min_support": min_support,
        "korean_field": korean_field,
        "test_fraction": 0.2,
        "dev_size": 1000,
    }
    sources = {
        "unihan_sha256": sha256_file(unihan_path),
        "ids_sha256": sha256_file(ids_path),
        "tables_sha256": sha256_file(tables_path) if tables_path else "bundled",
    }
    stats = {**{f"parse.{k}": v for k, v in parse_stats.items()}, **{f"assemble.{k}": v for k, v in asm_stats.items()}}
    return write_dataset(out_dir, ds, inventory, vocab, settings, stats, sources)
