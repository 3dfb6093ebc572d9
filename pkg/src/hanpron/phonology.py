"""Syllable segmentation into onset/nucleus/coda, phoneme vocabularies and
cognate indicator vectors.

Romanizations handled: Jyutping (Cantonese), Pinyin (Mandarin), Yale
(Korean, as in the Unihan ``kKorean`` field, or converted from Hangul) and
the Vietnamese alphabet.  Tones are stripped and discarded.
"""

from __future__ import annotations

import enum
import hashlib
import json
import unicodedata
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .ids import BoRVector, GeoDSequence


class Language(str, enum.Enum):
    CANTONESE = "cantonese"
    MANDARIN = "mandarin"
    KOREAN = "korean"
    VIETNAMESE = "vietnamese"


TARGET_LANGUAGE = Language.CANTONESE
SOURCE_LANGUAGES = (Language.MANDARIN, Language.KOREAN, Language.VIETNAMESE)
POSITIONS = ("onset", "nucleus", "coda")

VOCAB_FORMAT_VERSION = 1


class UnparsableSyllable(ValueError):
    pass


class EmptyCorpus(ValueError):
    pass


@dataclass(frozen=True)
class SyllableParts:
    onset: Optional[str]
    nucleus: Optional[str]
    coda: Optional[str]
    language: Language = TARGET_LANGUAGE

    def __iter__(self):
        return iter((self.onset, self.nucleus, self.coda))

    def __str__(self) -> str:
        return " ".join(p if p is not None else "∅" for p in self)

    @property
    def parsable(self) -> bool:
        return self.nucleus is not None

    def to_json(self) -> list:
        return [self.onset, self.nucleus, self.coda]

    @classmethod
    def from_json(cls, triple: Sequence[Optional[str]], language: Union[str, Language] = TARGET_LANGUAGE):
        onset, nucleus, coda = triple
        return cls(onset, nucleus, coda, Language(language))


UNPARSABLE = SyllableParts(None, None, None)


# --- segmentation -------------------------------------------------------

# combining marks carrying tone, per language
_TONE_MARKS = {
    Language.MANDARIN: {"̀", "́", "̄", "̌"},
    Language.VIETNAMESE: {"̀", "́", "̃", "̉", "̣"},
}
_VOWELS = set("aeiouyăâêôơưü")


@dataclass(frozen=True)
class SegmentationTable:
    onsets: frozenset[str]
    codas: frozenset[str]
    nuclei: Optional[frozenset[str]]

    def valid_nucleus(self, text: str) -> bool:
        if not text:
            return False
        if self.nuclei is not None:
            return text in self.nuclei
        return any(ch in _VOWELS for ch in text)


def read_tables(path: Union[str, Path, None] = None) -> dict[Language, SegmentationTable]:
    """Load ``language<TAB>position<TAB>symbol`` rows; defaults to the
    bundled table."""
    if path is None:
        text = resources.files("hanpron.data").joinpath("segmentation.tsv").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    rows: dict[tuple[Language, str], set[str]] = {}
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        lang, pos, sym = line.split("\t")
        if pos not in POSITIONS:
            raise ValueError(f"bad position {pos!r} in segmentation table")
        rows.setdefault((Language(lang), pos), set()).add(unicodedata.normalize("NFC", sym))
    tables = {}
    for lang in Language:
        nuclei = rows.get((lang, "nucleus"))
        tables[lang] = SegmentationTable(
            frozenset(rows.get((lang, "onset"), ())),
            frozenset(rows.get((lang, "coda"), ())),
            frozenset(nuclei) if nuclei else None,
        )
    return tables


@lru_cache(maxsize=1)
def default_tables() -> dict[Language, SegmentationTable]:
    return read_tables()


def strip_tone(language: Language, syllable: str) -> str:
    text = syllable.strip().lower().rstrip("0123456789")
    marks = _TONE_MARKS.get(language)
    if marks:
        text = "".join(ch for ch in unicodedata.normalize("NFD", text) if ch not in marks)
    return unicodedata.normalize("NFC", text)


def segment(
    language: Union[Language, str],
    romanized_syllable: str,
    tables: Optional[Mapping[Language, SegmentationTable]] = None,
) -> SyllableParts:
    """Split a romanized syllable into (onset, nucleus, coda).

    Longest legal onset first, then longest legal coda; the remainder is the
    nucleus. When the remainder is not a legal nucleus, shorter codas and
    then shorter onsets are tried, so syllabic nasals (Jyutping ``m``,
    ``ng``) and Vietnamese ``gi`` + vowel resolve deterministically.
    """
    language = Language(language)
    table = (tables or default_tables())[language]
    text = strip_tone(language, romanized_syllable)
    onsets = [o for o in sorted(table.onsets, key=len, reverse=True) if text.startswith(o)] + [""]
    codas = [c for c in sorted(table.codas, key=len, reverse=True) if text.endswith(c)] + [""]
    for onset in onsets:
        for coda in codas:
            if len(onset) + len(coda) >= len(text):
                continue
            nucleus = text[len(onset) : len(text) - len(coda)]
            if table.valid_nucleus(nucleus):
                return SyllableParts(onset or None, nucleus, coda or None, language)
    raise UnparsableSyllable(f"{language.value}: cannot segment {romanized_syllable!r}")


# Hangul -> Yale (kHangul support)
_YALE_L = "k kk n t tt l m p pp s ss - c cc ch kh th ph h".split()
_YALE_V = "a ay ya yay e ey ye yey o wa way oy yo wu we wey wi yu u uy i".split()
_YALE_T = ["", *"k kk ks n nc nh t l lk lm lp ls lth lph lh m p ps s ss ng c ch kh th ph h".split()]


def hangul_to_yale(text: str) -> str:
    out = []
    for ch in text:
        code = ord(ch) - 0xAC00
        if not 0 <= code < 11172:
            raise UnparsableSyllable(f"not a Hangul syllable: {ch!r}")
        lead, rest = divmod(code, 588)
        vowel, tail = divmod(rest, 28)
        initial = _YALE_L[lead]
        out.append(("" if initial == "-" else initial) + _YALE_V[vowel] + _YALE_T[tail])
    return "".join(out)


# --- lexicon entries and vocabularies -----------------------------------


@dataclass(frozen=True)
class LexiconEntry:
    logograph: str
    geod: GeoDSequence
    target: SyllableParts
    cognates: Mapping[Language, tuple[SyllableParts, ...]] = field(default_factory=dict)
    bor: Optional[BoRVector] = None

    def cognates_for(self, language: Language) -> tuple[SyllableParts, ...]:
        return tuple(self.cognates.get(language, ()))

    @property
    def codepoint(self) -> str:
        return f"U+{ord(self.logograph):04X}"

    def to_json(self) -> dict:
        return {
            "codepoint": self.codepoint,
            "char": self.logograph,
            "geod": list(self.geod),
            "bor": None if self.bor is None else {"counts": _sparse(self.bor.counts), "unk": self.bor.unk,
                                                  "size": len(self.bor.counts)},
            "target": self.target.to_json(),
            "cognates": {lang.value: [p.to_json() for p in self.cognates_for(lang)] for lang in SOURCE_LANGUAGES},
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "LexiconEntry":
        bor = None
        if obj.get("bor") is not None:
            counts = [0] * obj["bor"]["size"]
            for i, n in obj["bor"]["counts"].items():
                counts[int(i)] = n
            bor = BoRVector(tuple(counts), obj["bor"]["unk"])
        cognates = {
            Language(lang): tuple(SyllableParts.from_json(t, lang) for t in triples)
            for lang, triples in obj.get("cognates", {}).items()
            if triples
        }
        return cls(
            logograph=obj["char"],
            geod=tuple(obj["geod"]),
            target=SyllableParts.from_json(obj["target"]),
            cognates=cognates,
            bor=bor,
        )


def _sparse(counts: Sequence[int]) -> dict[str, int]:
    return {str(i): n for i, n in enumerate(counts) if n}


Symbol = Optional[str]


@dataclass(frozen=True)
class PhonemeVocab:
    """Per (language, position) symbol lists; ``None`` (no phoneme) sorts first."""

    symbols: Mapping[tuple[Language, str], tuple[Symbol, ...]]
    _index: Mapping[tuple[Language, str], Mapping[Symbol, int]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "_index", {k: {s: i for i, s in enumerate(v)} for k, v in self.symbols.items()}
        )

    def get(self, language: Language, position: str) -> tuple[Symbol, ...]:
        return self.symbols.get((Language(language), position), ())

    def size(self, language: Language, position: str) -> int:
        return len(self.get(language, position))

    def index(self, language: Language, position: str, symbol: Symbol) -> Optional[int]:
        return self._index.get((Language(language), position), {}).get(symbol)

    def encode_target(self, parts: SyllableParts) -> tuple[int, int, int]:
        """Class indices for a Cantonese triple; out-of-vocabulary symbols map
        to the NULL class (index of ``None``, or 0)."""
        out = []
        for pos, sym in zip(POSITIONS, parts):
            i = self.index(TARGET_LANGUAGE, pos, sym)
            if i is None:
                i = self.index(TARGET_LANGUAGE, pos, None) or 0
            out.append(i)
        return tuple(out)

    def decode_target(self, indices: Sequence[int]) -> SyllableParts:
        syms = [self.get(TARGET_LANGUAGE, pos)[i] for pos, i in zip(POSITIONS, indices)]
        return SyllableParts(*syms, language=TARGET_LANGUAGE)

    def target_sizes(self) -> tuple[int, int, int]:
        return tuple(self.size(TARGET_LANGUAGE, pos) for pos in POSITIONS)

    def indicator_layout(self, positional: bool = True) -> dict[tuple, int]:
        """Bit index for each source-language phoneme. Keys are
        (language, position, symbol), or (language, symbol) when
        ``positional`` is False."""
        layout: dict[tuple, int] = {}
        for lang in SOURCE_LANGUAGES:
            if positional:
                for pos in POSITIONS:
                    for sym in self.get(lang, pos):
                        layout[(lang, pos, sym)] = len(layout)
            else:
                merged = {s for pos in POSITIONS for s in self.get(lang, pos)}
                for sym in sorted(merged, key=_sort_key):
                    layout[(lang, sym)] = len(layout)
        return layout

    def to_json(self) -> dict:
        return {
            "version": VOCAB_FORMAT_VERSION,
            "vocab": {
                lang.value: {pos: list(self.get(lang, pos)) for pos in POSITIONS} for lang in Language
            },
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "PhonemeVocab":
        if obj.get("version") != VOCAB_FORMAT_VERSION:
            raise ValueError(f"unsupported vocab format version {obj.get('version')!r}")
        symbols = {}
        for lang, per_pos in obj["vocab"].items():
            for pos, syms in per_pos.items():
                if syms:
                    symbols[(Language(lang), pos)] = tuple(syms)
        return cls(symbols)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_json(), ensure_ascii=False, indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "PhonemeVocab":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), ensure_ascii=False, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


def _sort_key(sym: Symbol):
    return (sym is not None, sym or "")


def build_vocab(train_entries: Sequence[LexiconEntry]) -> PhonemeVocab:
    if not train_entries:
        raise EmptyCorpus("cannot build a phoneme vocabulary from zero entries")
    seen: dict[tuple[Language, str], set[Symbol]] = {(lang, pos): set() for lang in Language for pos in POSITIONS}
    for entry in train_entries:
        for pos, sym in zip(POSITIONS, entry.target):
            seen[(TARGET_LANGUAGE, pos)].add(sym)
        for lang in SOURCE_LANGUAGES:
            for parts in entry.cognates_for(lang):
                for pos, sym in zip(POSITIONS, parts):
                    seen[(lang, pos)].add(sym)
    return PhonemeVocab({k: tuple(sorted(v, key=_sort_key)) for k, v in seen.items() if v})


def indicator(
    entry: LexiconEntry,
    vocab: PhonemeVocab,
    positional: bool = True,
    layout: Optional[Mapping[tuple, int]] = None,
) -> np.ndarray:
    """Multi-hot vector over source-language phonemes of the entry's cognates."""
    if layout is None:
        layout = vocab.indicator_layout(positional)
    bits = np.zeros(len(layout), dtype=np.float64)
    for lang in SOURCE_LANGUAGES:
        for parts in entry.cognates_for(lang):
            for pos, sym in zip(POSITIONS, parts):
                key = (lang, pos, sym) if positional else (lang, sym)
                i = layout.get(key)
                if i is not None:
                    bits[i] = 1.0
    return bits


def indicator_matrix(entries: Iterable[LexiconEntry], vocab: PhonemeVocab, positional: bool = True) -> np.ndarray:
    layout = vocab.indicator_layout(positional)
    rows = [indicator(e, vocab, positional, layout) for e in entries]
    return np.stack(rows) if rows else np.zeros((0, len(layout)))
