"""String and token error rates over (onset, nucleus, coda) predictions.

A wrong phoneme in any of the three positions is one token error; a
syllable with at least one token error is one string error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .phonology import SyllableParts

REPORT_SCHEMA_VERSION = 1
COLUMNS = ("ser", "ter", "onset_err", "nucleus_err", "coda_err")
COLUMN_TITLES = {"ser": "SER", "ter": "TER", "onset_err": "On.", "nucleus_err": "Nu.", "coda_err": "Cd."}


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class EvalReport:
    n: int
    string_errors: int
    onset_errors: int
    nucleus_errors: int
    coda_errors: int
    excluded: int = 0
    metadata: Mapping = field(default_factory=dict)

    @property
    def token_errors(self) -> int:
        return self.onset_errors + self.nucleus_errors + self.coda_errors

    @property
    def tokens(self) -> int:
        return 3 * self.n

    def _pct(self, k: int, d: int) -> float:
        return 100.0 * k / d if d else 0.0

    @property
    def ser(self) -> float:
        return self._pct(self.string_errors, self.n)

    @property
    def ter(self) -> float:
        return self._pct(self.token_errors, self.tokens)

    @property
    def onset_err(self) -> float:
        return self._pct(self.onset_errors, self.n)

    @property
    def nucleus_err(self) -> float:
        return self._pct(self.nucleus_errors, self.n)

    @property
    def coda_err(self) -> float:
        return self._pct(self.coda_errors, self.n)

    def check_bounds(self) -> None:
        worst = max(self.onset_errors, self.nucleus_errors, self.coda_errors)
        if not worst <= self.string_errors <= self.token_errors:
            raise AssertionError(f"SER/TER bounds violated: {self!r}")

    def to_json(self) -> dict:
        self.check_bounds()
        return {
            "schema": REPORT_SCHEMA_VERSION,
            **{c: round(getattr(self, c), 6) for c in COLUMNS},
            "counts": {
                "syllables": self.n,
                "tokens": self.tokens,
                "string_errors": self.string_errors,
                "token_errors": self.token_errors,
                "onset_errors": self.onset_errors,
                "nucleus_errors": self.nucleus_errors,
                "coda_errors": self.coda_errors,
                "excluded_unparsable_references": self.excluded,
            },
            "metadata": dict(self.metadata),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), ensure_ascii=False, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, obj: Mapping) -> "EvalReport":
        c = obj["counts"]
        return cls(
            n=c["syllables"],
            string_errors=c["string_errors"],
            onset_errors=c["onset_errors"],
            nucleus_errors=c["nucleus_errors"],
            coda_errors=c["coda_errors"],
            excluded=c.get("excluded_unparsable_references", 0),
            metadata=obj.get("metadata", {}),
        )


def score(
    predictions: Sequence[SyllableParts],
    references: Sequence[SyllableParts],
    metadata: Optional[Mapping] = None,
) -> EvalReport:
    """Symbol-exact comparison per position, NULL included. References
    without a nucleus (unparsable) are skipped and counted as excluded."""
    if len(predictions) != len(references):
        raise LengthMismatch(f"{len(predictions)} predictions for {len(references)} references")
    n = strings = excluded = 0
    per_pos = [0, 0, 0]
    for pred, ref in zip(predictions, references):
        if not ref.parsable:
            excluded += 1
            continue
        n += 1
        wrong = [p != r for p, r in zip(pred, ref)]
        for k, w in enumerate(wrong):
            per_pos[k] += w
        strings += any(wrong)
    report = EvalReport(n, strings, *per_pos, excluded=excluded, metadata=dict(metadata or {}))
    report.check_bounds()
    return report


@dataclass
class ComparisonTable:
    names: list[str]
    reports: list[EvalReport]
    best: dict[str, set[int]]

    def text(self) -> str:
        width = max([len("Method")] + [len(n) for n in self.names])
        head = "Method".ljust(width) + "".join(f"{COLUMN_TITLES[c]:>9}" for c in COLUMNS)
        lines = [head, "-" * len(head)]
        for i, (name, rep) in enumerate(zip(self.names, self.reports)):
            cells = []
            for c in COLUMNS:
                mark = "*" if i in self.best[c] else " "
                cells.append(f"{getattr(rep, c):>8.1f}{mark}")
            lines.append(name.ljust(width) + "".join(cells))
        lines.append("(* best in column)")
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        rows = []
        for i, (name, rep) in enumerate(zip(self.names, self.reports)):
            rows.append(
                {
                    "method": name,
                    **{c: round(getattr(rep, c), 6) for c in COLUMNS},
                    "best": [c for c in COLUMNS if i in self.best[c]],
                    "n": rep.n,
                }
            )
        return {"schema": REPORT_SCHEMA_VERSION, "columns": list(COLUMNS), "rows": rows}


def compare(reports: Sequence[EvalReport], names: Optional[Sequence[str]] = None) -> ComparisonTable:
    if not reports:
        raise ValueError("compare needs at least one report")
    if names is None:
        names = [str(r.metadata.get("model", f"model{i}")) for i, r in enumerate(reports)]
    best = {}
    for c in COLUMNS:
        values = [round(getattr(r, c), 9) for r in reports]
        lo = min(values)
        best[c] = {i for i, v in enumerate(values) if v == lo}
    return ComparisonTable(list(names), list(reports), best)
