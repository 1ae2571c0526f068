import csv
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lungqc.report import QcRecord, read_qc_csv, summarize, write_qc_csv

HEADER = "patient_id,series_uid,status,reason,original_slices,kept_slices"


def test_empty(tmp_path):
    p = tmp_path / "r.csv"
    write_qc_csv([], p)
    assert p.read_bytes() == (HEADER + "\n").encode()


def test_accepted_row(tmp_path):
    p = tmp_path / "r.csv"
    write_qc_csv([QcRecord("100012", "1.2.3", "accepted", "", 100, 60)], p)
    assert p.read_text().splitlines()[1] == "100012,1.2.3,accepted,,100,60"


def test_sorted(tmp_path):
    recs = [QcRecord("b", "2", "rejected", "NO_LUNG_BLOCK", 70, 0),
            QcRecord("a", "9", "accepted", "", 80, 30),
            QcRecord("a", "1", "rejected", "TOO_FEW_SLICES", 10, 0)]
    p = tmp_path / "r.csv"
    write_qc_csv(recs, p)
    assert [line.split(",")[:2] for line in p.read_text().splitlines()[1:]] == [
        ["a", "1"], ["a", "9"], ["b", "2"]]


def test_quoting_round_trip(tmp_path):
    recs = [QcRecord('pa,"x"', "1.2", "accepted", "", 5, 5)]
    p = tmp_path / "r.csv"
    write_qc_csv(recs, p)
    assert b"\r" not in p.read_bytes()
    with open(p, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["patient_id"] == 'pa,"x"'
    assert read_qc_csv(p) == recs


def test_summary_examples():
    s = summarize([QcRecord("a", "1", "accepted", "", 100, 60),
                   QcRecord("b", "2", "rejected", "TOO_FEW_SLICES", 50, 0)])
    assert (s.total_series, s.accepted_series, s.total_raw_images, s.total_kept_images) == (2, 1, 150, 60)
    assert s.discard_proportion == pytest.approx(0.6, abs=1e-12)


def test_summary_empty_and_full():
    assert summarize([]).discard_proportion == 0
    assert summarize([]).total_raw_images == 0
    assert summarize([QcRecord("a", "1", "accepted", "", 30, 30)]).discard_proportion == 0


def test_record_invariants():
    with pytest.raises(ValueError):
        QcRecord("a", "1", "rejected", "X", 10, 3)
    with pytest.raises(ValueError):
        QcRecord("a", "1", "accepted", "", 10, 11)


_ids = st.text(alphabet='abc,"\n 0123', min_size=1, max_size=6)
_recs = st.lists(
    st.one_of(
        st.builds(lambda p, s, n, k: QcRecord(p, s, "accepted", "", n, min(k, n)),
                  _ids, _ids, st.integers(0, 500), st.integers(0, 500)),
        st.builds(lambda p, s, n, r: QcRecord(p, s, "rejected", r, n, 0),
                  _ids, _ids, st.integers(0, 500), st.sampled_from(["NO_LUNG_BLOCK", "BAD_MATRIX"])),
    ),
    max_size=12,
    unique_by=lambda r: (r.patient_id, r.series_uid),
)


@given(_recs)
def test_summary_permutation_invariant(recs):
    shuffled = recs[:]
    random.Random(0).shuffle(shuffled)
    assert summarize(recs) == summarize(shuffled)


@given(_recs)
def test_csv_round_trip(tmp_path_factory, recs):
    p = tmp_path_factory.mktemp("qc") / "r.csv"
    write_qc_csv(recs, p)
    assert read_qc_csv(p) == sorted(recs, key=lambda r: (r.patient_id, r.series_uid))
