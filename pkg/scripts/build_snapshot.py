#!/usr/bin/env python3
"""Build the pinned data snapshot under data/ from third-party sources.

Inputs:

* a SQLite dump of the Unihan database (the ``unihan`` table shipped in the
  ``cjk-unihan`` npm package, one column per Unihan field);
* ``cjk_decomp.txt`` from the ``hanzipy`` PyPI package (CJK decomposition
  data in the ``char:config(part,part,...)`` notation).

Outputs:

* ``data/unihan/Unihan_Readings.txt`` in the upstream ``U+XXXX<TAB>kField<TAB>value``
  layout, restricted to the reading fields this project uses;
* ``data/ids/ids.tsv`` in the CHISE layout ``U+XXXX<TAB>char<TAB>ids``;
* ``data/snapshot.json`` with SHA-256 digests of both files.

    python scripts/build_snapshot.py --unihan-db unihan.db --decomp cjk_decomp.txt
"""

import argparse
import hashlib
import json
import re
import sqlite3
import sys
from pathlib import Path

READING_FIELDS = ("kCantonese", "kMandarin", "kKorean", "kVietnamese", "kHangul")

# cjk-decomp configuration -> (binary IDC, ternary IDC)
LAYOUT = {
    "a": ("⿰", "⿲"),
    "d": ("⿱", "⿳"),
    "s": ("⿴", None),
    "st": ("⿵", None),
    "sb": ("⿶", None),
    "sl": ("⿷", None),
    "stl": ("⿸", None),
    "str": ("⿹", None),
    "sbl": ("⿺", None),
    "lock": ("⿻", None),
}
OVERLAY = {"w", "wt", "wb", "wl", "wr", "wtl", "wtr", "wbl", "wbr", "wa", "wd"}
# repetition shapes: operand X -> IDS template
REPEAT = {
    "ra": "⿰XX",
    "rd": "⿱XX",
    "r3a": "⿲XXX",
    "r3d": "⿳XXX",
    "r3tr": "⿱X⿰XX",
    "r4sq": "⿱⿰XX⿰XX",
}

ESCAPED = re.compile(r"\\x\{([0-9A-Fa-f]+)\}")
LINE_RE = re.compile(r"([^:]+):([a-z0-9]+)(?:/[a-z]+)?\((.*)\)")


def read_decomp(path):
    table = {}
    for line in open(path, encoding="utf-8"):
        m = LINE_RE.fullmatch(line.rstrip("\n"))
        if not m:
            print(f"skipping malformed line: {line!r}", file=sys.stderr)
            continue
        key, config, parts = m.groups()
        # first definition wins
        table.setdefault(key, (config, parts.split(",") if parts else []))
    return table


class Converter:
    def __init__(self, table):
        self.table = table
        self.memo = {}

    def part(self, name, stack):
        """IDS text for one operand: characters stay as-is, numbered
        (unencoded) components are inlined or become entity references."""
        if not name.isdigit():
            return name
        if name in self.memo:
            return self.memo[name]
        if name in stack:
            return f"&CJKD-{name};"
        ids = self.describe(name, stack | {name})
        if ids is None:
            ids = f"&CJKD-{name};"
        self.memo[name] = ids
        return ids

    def describe(self, key, stack=frozenset()):
        """IDS for ``key`` one level deep, or None when it is atomic/opaque."""
        if key not in self.table:
            return None
        config, parts = self.table[key]
        if any(p == "" for p in parts):
            return None
        if config in REPEAT and len(parts) == 1:
            x = self.part(parts[0], stack)
            return REPEAT[config].replace("X", x)
        if config in OVERLAY:
            config = "lock"
        if config not in LAYOUT or len(parts) < 2:
            return None
        binary, ternary = LAYOUT[config]
        rendered = [self.part(p, stack) for p in parts]
        return self._nest(binary, ternary, rendered)

    def _nest(self, binary, ternary, rendered):
        if len(rendered) == 2:
            return binary + rendered[0] + rendered[1]
        if len(rendered) == 3 and ternary:
            return ternary + "".join(rendered)
        return binary + rendered[0] + self._nest(binary, ternary, rendered[1:])


def write_ids(decomp_path, out_path):
    table = read_decomp(decomp_path)
    conv = Converter(table)
    rows = []
    for key in table:
        if key.isdigit() or len(key) != 1:
            continue
        ids = conv.describe(key)
        if ids is None or ids == key:
            ids = key
        rows.append((ord(key), key, ids))
    rows.sort()
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# IDS converted from cjk_decomp.txt (hanzipy 1.0.4)\n")
        for cp, ch, ids in rows:
            fh.write(f"U+{cp:04X}\t{ch}\t{ids}\n")
    return len(rows)


def write_readings(db_path, out_path):
    conn = sqlite3.connect(db_path)
    cols = ", ".join(READING_FIELDS)
    rows = []
    for record in conn.execute(f"SELECT character, {cols} FROM unihan"):
        ch = record[0]
        m = ESCAPED.fullmatch(ch or "")
        if m:
            ch = chr(int(m.group(1), 16))
        if not ch or len(ch) != 1:
            continue
        for field, value in zip(READING_FIELDS, record[1:]):
            if value:
                rows.append((ord(ch), field, value.strip()))
    rows.sort()
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# Unihan reading fields extracted from the cjk-unihan 0.0.3 SQLite dump\n")
        fh.write(f"# fields: {' '.join(READING_FIELDS)}\n")
        for cp, field, value in rows:
            fh.write(f"U+{cp:04X}\t{field}\t{value}\n")
    return len(rows)


def sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--unihan-db", required=True)
    parser.add_argument("--decomp", required=True)
    parser.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data"))
    args = parser.parse_args()

    out = Path(args.out)
    readings = out / "unihan" / "Unihan_Readings.txt"
    ids = out / "ids" / "ids.tsv"
    n_readings = write_readings(args.unihan_db, readings)
    n_ids = write_ids(args.decomp, ids)
    manifest = {
        "unihan_readings": {"path": "unihan/Unihan_Readings.txt", "sha256": sha256(readings), "lines": n_readings,
                            "source": "npm cjk-unihan 0.0.3, data/unihan.db"},
        "ids": {"path": "ids/ids.tsv", "sha256": sha256(ids), "lines": n_ids,
                "source": "PyPI hanzipy 1.0.4, hanzipy/data/cjk_decomp.txt"},
    }
    (out / "snapshot.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(manifest, indent=2))


if __name__ == "__main__":
    main()
