"""Ideographic Description Sequences: parsing, prefix serialization,
decomposition to a chosen granularity and bag-of-radicals counts.

An IDS is a prefix expression over the Ideographic Description Characters
U+2FF0..U+2FFB.  ``⿲`` and ``⿳`` take three operands, the others two::

    ⿰忄⿱耳⿰耳耳   ->   ⿰(忄, ⿱(耳, ⿰(耳, 耳)))

Tokens are single codepoints, except CHISE-style entity references such as
``&CDP-8B7C;`` which name components with no Unicode encoding; those are kept
as one opaque leaf token.
"""

from __future__ import annotations

import logging
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Container, Iterable, Iterator, Mapping, Sequence, Union

import numpy as np

logger = logging.getLogger(__name__)


class IdsError(ValueError):
    pass


class EmptyInput(IdsError):
    pass


class TruncatedSequence(IdsError):
    pass


class TrailingTokens(IdsError):
    pass


class InvalidPrefix(IdsError):
    pass


class CyclicDecomposition(IdsError):
    pass


@dataclass(frozen=True)
class IdsOperator:
    char: str
    arity: int

    @property
    def codepoint(self) -> int:
        return ord(self.char)


OPERATORS: dict[str, IdsOperator] = {
    chr(cp): IdsOperator(chr(cp), 3 if cp in (0x2FF2, 0x2FF3) else 2) for cp in range(0x2FF0, 0x2FFC)
}


def is_operator(token: str) -> bool:
    return token in OPERATORS


@dataclass(frozen=True)
class Leaf:
    radical: str


@dataclass(frozen=True)
class Op:
    operator: IdsOperator
    children: tuple["IdsTree", ...]

    def __post_init__(self):
        if len(self.children) != self.operator.arity:
            raise IdsError(
                f"{self.operator.char} takes {self.operator.arity} operands, got {len(self.children)}"
            )


IdsTree = Union[Leaf, Op]
# prefix-order token tuple
GeoDSequence = tuple[str, ...]


def tokenize(text: str) -> list[str]:
    tokens = []
    i = 0
    while i < len(text):
        if text[i] == "&":
            end = text.find(";", i)
            if end > i + 1:
                tokens.append(text[i : end + 1])
                i = end + 1
                continue
        tokens.append(text[i])
        i += 1
    return tokens


def parse_ids(text: str) -> IdsTree:
    """Parse an IDS string; the whole string must form exactly one tree."""
    if not text:
        raise EmptyInput("empty IDS")
    tokens = tokenize(text)
    tree, pos = _parse(tokens, 0, text)
    if pos != len(tokens):
        raise TrailingTokens(f"{len(tokens) - pos} token(s) after a complete parse of {text!r}")
    return tree


def _parse(tokens: list[str], pos: int, text: str) -> tuple[IdsTree, int]:
    if pos >= len(tokens):
        raise TruncatedSequence(f"operator lacks operands in {text!r}")
    tok = tokens[pos]
    op = OPERATORS.get(tok)
    if op is None:
        return Leaf(tok), pos + 1
    children = []
    pos += 1
    for _ in range(op.arity):
        child, pos = _parse(tokens, pos, text)
        children.append(child)
    return Op(op, tuple(children)), pos


def flatten(tree: IdsTree) -> GeoDSequence:
    out = []
    stack = [tree]
    while stack:
        node = stack.pop()
        if isinstance(node, Leaf):
            out.append(node.radical)
        else:
            out.append(node.operator.char)
            stack.extend(reversed(node.children))
    return tuple(out)


def serialize(seq: Iterable[str]) -> str:
    return "".join(seq)


def is_valid_prefix(seq: Sequence[str]) -> bool:
    """Counter check: start needing one tree; an operator of arity k adds
    k - 1 open slots, a leaf fills one. Valid iff the count first reaches
    zero at the last token."""
    need = 1
    for tok in seq:
        if need == 0:
            return False
        op = OPERATORS.get(tok)
        need += op.arity - 1 if op else -1
    return need == 0 and len(seq) > 0


def reconstruct(seq: Sequence[str]) -> IdsTree:
    if not is_valid_prefix(seq):
        raise InvalidPrefix(f"not a complete prefix sequence: {' '.join(seq)!r}")
    tree, _ = _parse(list(seq), 0, serialize(seq))
    return tree


def leaves(tree: IdsTree) -> Iterator[str]:
    for tok in flatten(tree):
        if tok not in OPERATORS:
            yield tok


def depth(tree: IdsTree) -> int:
    if isinstance(tree, Leaf):
        return 0
    return 1 + max(depth(c) for c in tree.children)


# --- decomposition tables ------------------------------------------------


def read_ids_file(path: Union[str, Path]) -> dict[str, str]:
    """Read a CHISE-style ``U+XXXX<TAB>char<TAB>ids`` file into char -> IDS.

    Extra tab-separated columns (alternate decompositions) are ignored; the
    first listed IDS is used. Malformed lines are skipped with a warning.
    """
    table: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#") or line.startswith(";"):
                continue
            cols = line.split("\t")
            if len(cols) < 3 or not cols[0].startswith("U+") or not cols[2]:
                logger.warning("%s:%d: malformed IDS line skipped", path, lineno)
                continue
            table.setdefault(cols[1], cols[2])
    return table


def decomposition_table(ids_by_char: Mapping[str, str]) -> dict[str, GeoDSequence]:
    """One-level decompositions keyed by component; atomic and unparsable
    entries are left out so they act as leaves."""
    table = {}
    for ch, ids in ids_by_char.items():
        if ids == ch:
            continue
        try:
            table[ch] = flatten(parse_ids(ids))
        except IdsError:
            continue
    return table


def kangxi_radicals() -> frozenset[str]:
    """Kangxi radicals as unified ideographs, their common positional
    variants, the CJK Radicals Supplement and CJK Strokes blocks."""
    out = set()
    for cp in range(0x2F00, 0x2FD6):
        out.add(unicodedata.normalize("NFKC", chr(cp)))
    for cp in range(0x2E80, 0x2EF4):
        out.add(chr(cp))
    for cp in range(0x31C0, 0x31E4):
        out.add(chr(cp))
    text = resources.files("hanpron.data").joinpath("radical_variants.txt").read_text(encoding="utf-8")
    for line in text.splitlines():
        out.update(line.split("#", 1)[0].split())
    return frozenset(out)


GRANULARITIES = ("component", "radical", "stroke")


def stop_set(granularity: str) -> Container[str]:
    """Leaves at which expansion halts for a named granularity.

    ``component`` keeps the one-level decomposition, ``radical`` expands down
    to Kangxi radicals and ``stroke`` expands as far as the table allows.
    """
    if granularity == "radical":
        return kangxi_radicals()
    if granularity == "stroke":
        return frozenset()
    if granularity == "component":
        return _Everything()
    raise ValueError(f"unknown granularity {granularity!r}; expected one of {GRANULARITIES}")


class _Everything:
    def __contains__(self, item) -> bool:
        return True


class Decomposer:
    """Recursive leaf expansion with a per-instance memo.

    ``table`` maps a component to its one-level GeoD sequence (or IDS string);
    leaves found in ``terminals`` or missing from the table are kept.
    """

    def __init__(self, table: Mapping[str, Union[str, Sequence[str]]], terminals: Container[str]):
        self.table = table
        self.terminals = terminals
        self._memo: dict[str, IdsTree] = {}

    def expand(self, tree: IdsTree) -> IdsTree:
        return self._expand(tree, frozenset())

    def logograph(self, char: str, ids: str) -> GeoDSequence:
        """GeoD sequence of a logograph from its own IDS. A logograph that
        is itself a terminal (say a Kangxi radical at radical granularity)
        stays a single token; with the ``component`` granularity every
        logograph keeps its one-level IDS."""
        if char in self.terminals and not isinstance(self.terminals, _Everything):
            return (char,)
        return flatten(self.expand(parse_ids(ids)))

    def _expand(self, tree: IdsTree, visiting: frozenset[str]) -> IdsTree:
        if isinstance(tree, Op):
            return Op(tree.operator, tuple(self._expand(c, visiting) for c in tree.children))
        rad = tree.radical
        if rad in self.terminals or rad not in self.table:
            return tree
        if rad in visiting:
            raise CyclicDecomposition(f"{rad} reaches itself through its decomposition")
        if rad in self._memo:
            return self._memo[rad]
        entry = self.table[rad]
        sub = parse_ids(entry) if isinstance(entry, str) else reconstruct(entry)
        out = self._expand(sub, visiting | {rad})
        self._memo[rad] = out
        return out


def expand_to_granularity(
    tree: IdsTree,
    decomposition_table: Mapping[str, Union[str, Sequence[str]]],
    terminals: Container[str],
) -> IdsTree:
    return Decomposer(decomposition_table, terminals).expand(tree)


# --- bag of radicals -----------------------------------------------------


@dataclass(frozen=True)
class BoRVector:
    counts: tuple[int, ...]
    unk: int = 0

    def as_array(self) -> np.ndarray:
        """Counts followed by the UNK slot, as float64."""
        return np.array(self.counts + (self.unk,), dtype=np.float64)

    @property
    def total(self) -> int:
        return sum(self.counts) + self.unk


@dataclass(frozen=True)
class RadicalInventory:
    radicals: tuple[str, ...]
    index: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.radicals)) != len(self.radicals):
            raise ValueError("duplicate radicals in inventory")
        object.__setattr__(self, "index", {r: i for i, r in enumerate(self.radicals)})

    def __len__(self) -> int:
        return len(self.radicals)

    def __contains__(self, item) -> bool:
        return item in self.index

    @property
    def unk_index(self) -> int:
        return len(self.radicals)

    @property
    def n_tokens(self) -> int:
        """Embedding table size: operators, radicals, UNK."""
        return len(OPERATORS) + len(self.radicals) + 1

    def token_ids(self, seq: Sequence[str]) -> np.ndarray:
        ops = _OPERATOR_IDS
        base = len(OPERATORS)
        unk = base + len(self.radicals)
        return np.array(
            [ops[t] if t in ops else base + self.index[t] if t in self.index else unk for t in seq],
            dtype=np.int64,
        )

    @classmethod
    def from_sequences(cls, seqs: Iterable[Sequence[str]], min_support: int = 1) -> "RadicalInventory":
        """Leaves occurring in at least ``min_support`` sequences, sorted."""
        support: Counter[str] = Counter()
        for seq in seqs:
            support.update({t for t in seq if t not in OPERATORS})
        return cls(tuple(sorted(r for r, n in support.items() if n >= min_support)))


_OPERATOR_IDS = {ch: i for i, ch in enumerate(OPERATORS)}


def to_bor(seq: Sequence[str], inventory: RadicalInventory) -> BoRVector:
    counts = [0] * len(inventory)
    unk = 0
    for tok in seq:
        if tok in OPERATORS:
            continue
        i = inventory.index.get(tok)
        if i is None:
            unk += 1
        else:
            counts[i] += 1
    return BoRVector(tuple(counts), unk)
