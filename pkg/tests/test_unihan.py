import warnings
from collections import Counter

import pytest

from hanpron.phonology import Language, SyllableParts
from hanpron.unihan import (
    MalformedLine,
    RawReadingRecord,
    TooFewEntries,
    assemble,
    coverage,
    load_dataset,
    parse_unihan,
    split,
)
from hanpron.phonology import LexiconEntry

IDS_DB = {
    "懾": "⿰忄聶",
    "聶": "⿱耳⿰耳耳",
    "耳": "耳",
    "忄": "忄",
    "好": "⿰女子",
    "明": "⿰日月",
}


def write(tmp_path, text):
    p = tmp_path / "Unihan_Readings.txt"
    p.write_text(text, encoding="utf-8")
    return p


def test_parse_examples(tmp_path):
    p = write(tmp_path, "# header\n\nU+61FE\tkCantonese\tsip3\nU+61FE\tkDefinition\tfear\n")
    stats = Counter()
    recs = parse_unihan(p, stats=stats)
    assert recs == [RawReadingRecord(0x61FE, "kCantonese", "sip3")]
    assert recs[0].char == "懾"
    assert stats["comment_or_blank"] == 2 and stats["skipped_field"] == 1


def test_malformed_line_warns_and_skips(tmp_path):
    p = write(tmp_path, "U+61FE kCantonese\nU+61FE\tkCantonese\tsip3\nU+ZZZZ\tkMandarin\tshè\n")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        recs = parse_unihan(p)
    assert len(recs) == 1
    assert [w.category for w in caught] == [MalformedLine, MalformedLine]
    assert ":1:" in str(caught[0].message) and ":3:" in str(caught[1].message)


def test_record_validation():
    with pytest.raises(ValueError):
        RawReadingRecord(0xD800, "kCantonese", "sip3")
    with pytest.raises(ValueError):
        RawReadingRecord(0x61FE, "kJapanese", "shou")
    assert RawReadingRecord(0x597D, "kMandarin", "hǎo hào").readings == ["hǎo", "hào"]


def _records():
    return [
        RawReadingRecord(0x61FE, "kCantonese", "sip3 zip3"),
        RawReadingRecord(0x61FE, "kMandarin", "shè"),
        RawReadingRecord(0x61FE, "kKorean", "SEP"),
        RawReadingRecord(0x61FE, "kVietnamese", "nhiếp"),
        RawReadingRecord(0x597D, "kCantonese", "hou2 hou3"),
        RawReadingRecord(0x597D, "kMandarin", "hǎo hào"),
        RawReadingRecord(0x660E, "kMandarin", "míng"),  # no Cantonese
        RawReadingRecord(0x4E00, "kCantonese", "jat1"),  # no IDS
    ]


def test_assemble_examples():
    stats = Counter()
    entries = assemble(_records(), IDS_DB, stats=stats)
    assert [e.logograph for e in entries] == ["好", "懾"]
    hao, she = entries
    assert she.target == SyllableParts("s", "i", "p")
    assert she.geod == ("⿰", "忄", "⿱", "耳", "⿰", "耳", "耳")
    assert tuple(she.cognates_for(Language.KOREAN)[0]) == ("s", "e", "p")
    # Mandarin only: the other cognate lists are empty
    assert hao.cognates_for(Language.KOREAN) == () and hao.cognates_for(Language.VIETNAMESE) == ()
    # both Mandarin tones give the same segmentation, kept once
    assert len(hao.cognates_for(Language.MANDARIN)) == 1
    assert stats["dropped_no_cantonese"] == 1 and stats["dropped_no_ids"] == 1
    assert stats["cantonese_alternates_ignored"] == 2


def test_assemble_order_independent_and_idempotent():
    recs = _records()
    a = assemble(recs, IDS_DB)
    assert assemble(list(reversed(recs)), IDS_DB) == a
    assert assemble(recs, IDS_DB) == a


def _fake(n):
    t = SyllableParts("s", "i", "p")
    return [LexiconEntry(chr(0x4E00 + i), ("⿰", "口", "木"), t) for i in range(n)]


def test_split_sizes_and_determinism():
    entries = _fake(20013)
    ds = split(entries, 42)
    assert (len(ds.test), len(ds.dev), len(ds.train)) == (4003, 1000, 15010)
    again = split(list(reversed(entries)), 42)
    assert ds == again
    other = split(entries, 43)
    assert {e.logograph for e in other.test} != {e.logograph for e in ds.test}
    chars = [e.logograph for part in ds.parts().values() for e in part]
    assert len(chars) == len(set(chars)) == 20013


def test_split_too_few():
    with pytest.raises(TooFewEntries):
        split(_fake(10), 0)
    # 1,250 entries would leave nothing to train on after test and dev
    with pytest.raises(TooFewEntries):
        split(_fake(1250), 0)
    assert len(split(_fake(1251), 0).train) == 1


def test_coverage():
    t = SyllableParts("s", "i", "p")
    m = (SyllableParts("sh", "e", None, Language.MANDARIN),)
    k = (SyllableParts("s", "e", "p", Language.KOREAN),)
    v = (SyllableParts("nh", "iê", "p", Language.VIETNAMESE),)
    entries = [
        LexiconEntry("a", (), t, {Language.MANDARIN: m, Language.KOREAN: k, Language.VIETNAMESE: v}),
        LexiconEntry("b", (), t, {Language.MANDARIN: m}),
        LexiconEntry("c", (), t, {}),
        LexiconEntry("d", (), t, {}),
    ]
    cov = coverage(entries)
    assert cov["all_three_pct"] == 25.0 and cov["none_pct"] == 50.0 and cov["mandarin_pct"] == 50.0


# --- the pinned snapshot ------------------------------------------------------


def test_snapshot_dataset(dataset, dataset_dir):
    m = dataset.manifest
    n = sum(m["counts"].values())
    # the reference corpus size is about 20,013 entries; newer UniHan
    # releases carry more Cantonese readings
    assert 0.75 * 20013 <= n <= 1.25 * 20013
    assert m["counts"]["dev"] == 1000 and m["counts"]["test"] == int(0.2 * n + 0.5)
    chars = [e.logograph for name in ("train", "dev", "test") for e in dataset.part(name)]
    assert len(chars) == len(set(chars))
    she = next(e for e in dataset.test + dataset.train + dataset.dev if e.logograph == "懾")
    assert she.target == SyllableParts("s", "i", "p")
    # all bag-of-radicals vectors match the frozen inventory
    assert all(len(e.bor.counts) == len(dataset.inventory) for e in dataset.train[:100])
    again = load_dataset(dataset_dir)
    assert again.manifest == m and again.test == dataset.test


def test_snapshot_coverage_structure(dataset):
    cov = dataset.manifest["coverage"]["test"]
    assert abs(cov["all_three_pct"] - 16.0) <= 4.0
    assert abs(cov["none_pct"] - 6.0) <= 4.0
