import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import CODAS, NUCLEI, ONSETS, random_syllables, score_oracle
from hanpron.metrics import EvalReport, LengthMismatch, compare, score
from hanpron.phonology import SyllableParts


def sp(*parts):
    return SyllableParts(*parts)


def values(rep):
    return (rep.ser, rep.ter, rep.onset_err, rep.nucleus_err, rep.coda_err)


def test_perfect():
    refs = [sp("s", "i", "p"), sp(None, "aa", None)]
    assert values(score(refs, refs)) == (0, 0, 0, 0, 0)


def test_single_nucleus_error():
    rep = score([sp("s", "a", "p")], [sp("s", "i", "p")])
    assert rep.ser == 100.0 and rep.nucleus_err == 100.0
    assert rep.ter == pytest.approx(33.3, abs=0.05)


def test_one_fully_wrong_of_two():
    rep = score([sp("m", "a", "ng"), sp("s", "i", "p")], [sp("s", "i", "p"), sp("s", "i", "p")])
    assert (rep.ser, rep.ter) == (50.0, 50.0)
    assert rep.token_errors == 3 and rep.tokens == 6


def test_null_is_a_symbol():
    rep = score([sp(None, "a", None)], [sp("s", "a", None)])
    assert rep.onset_errors == 1 and rep.coda_errors == 0


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        score([sp("s", "i", "p")], [])


def test_unparsable_references_excluded():
    refs = [sp("s", "i", "p"), SyllableParts(None, None, None)]
    rep = score([sp("s", "i", "p"), sp("s", "i", "p")], refs)
    assert rep.n == 1 and rep.excluded == 1 and rep.ser == 0.0
    assert rep.to_json()["counts"]["excluded_unparsable_references"] == 1


def test_against_brute_force_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        n = int(rng.integers(1, 12))
        preds, refs = random_syllables(rng, n), random_syllables(rng, n)
        rep = score([sp(*p) for p in preds], [sp(*r) for r in refs])
        assert values(rep) == score_oracle(preds, refs)


syllable = st.tuples(st.sampled_from(ONSETS), st.sampled_from(NUCLEI), st.sampled_from(CODAS))


@given(st.lists(st.tuples(syllable, syllable), min_size=1, max_size=30), st.randoms())
def test_permutation_invariance_and_bounds(pairs, rnd):
    preds = [sp(*p) for p, _ in pairs]
    refs = [sp(*r) for _, r in pairs]
    rep = score(preds, refs)
    order = list(range(len(pairs)))
    rnd.shuffle(order)
    rep2 = score([preds[i] for i in order], [refs[i] for i in order])
    assert values(rep) == values(rep2)
    assert rep.ser >= max(rep.onset_err, rep.nucleus_err, rep.coda_err)
    assert rep.ser <= 3 * rep.ter + 1e-9


def test_report_json_roundtrip():
    rep = score([sp("s", "a", "p")], [sp("s", "i", "p")], {"model": "x", "seed": 1})
    obj = json.loads(rep.dumps())
    assert obj["schema"] == 1 and obj["counts"]["tokens"] == 3
    assert EvalReport.from_json(obj) == rep


def test_compare_tables():
    a = score([sp("s", "a", "p")], [sp("s", "i", "p")], {"model": "a"})
    b = score([sp("s", "i", "m")], [sp("s", "i", "p")], {"model": "b"})
    one = compare([a])
    assert one.text().count("\n") == 4 and one.names == ["a"]
    table = compare([a, b])
    # equal SER and TER: both rows flagged
    assert table.best["ser"] == {0, 1} and table.best["ter"] == {0, 1}
    assert table.best["nucleus_err"] == {1} and table.best["coda_err"] == {0}
    header = table.text().splitlines()[0].split()
    assert header == ["Method", "SER", "TER", "On.", "Nu.", "Cd."]
    assert [r["method"] for r in table.to_json()["rows"]] == ["a", "b"]
    with pytest.raises(ValueError):
        compare([])
