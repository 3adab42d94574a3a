"""
Tests for epoch ingestion service.
"""
import numpy as np
import pytest

from distreg.exceptions import NoValidSubjectsError
from distreg.models.epoch import CohortTable, SubjectRecord
from distreg.services import ingest
from distreg.utils.grid import EPOCHS_PER_DAY
from tests.conftest import make_day


def test_runs_of():
    """Test maximal run detection returns half-open bounds."""
    flags = np.array([True, True, False, True, False, False, True])
    assert ingest.runs_of(flags) == [(0, 2), (3, 4), (6, 7)]
    assert ingest.runs_of(np.zeros(5, dtype=bool)) == []


def test_nonwear_mask_threshold():
    """Test only zero runs of at least 60 epochs are masked."""
    counts = np.full(EPOCHS_PER_DAY, 50)
    counts[100:159] = 0
    counts[500:560] = 0
    mask = ingest.nonwear_mask(counts)

    assert not mask[100:159].any()
    assert mask[500:560].all()
    assert mask.sum() == 60


def test_nonwear_at_window_edges():
    """Test runs touching the window edges count in-window epochs only."""
    counts = np.full(EPOCHS_PER_DAY, 10)
    counts[:60] = 0
    counts[-59:] = 0
    mask = ingest.nonwear_mask(counts)

    assert mask[:60].all()
    assert not mask[-59:].any()


def test_nonwear_rule_idempotent(rng):
    """Test applying the rule twice gives the same mask and masks only zeros."""
    counts = rng.poisson(3.0, EPOCHS_PER_DAY)
    counts[300:420] = 0
    day = make_day("S1", 1, counts)

    once = ingest.apply_nonwear_rule(day)
    twice = ingest.apply_nonwear_rule(once)

    np.testing.assert_array_equal(once.missing_mask, twice.missing_mask)
    assert np.all(once.counts[once.missing_mask] == 0)
    assert once.missing_mask[300:420].all()


def test_nonwear_rule_rejects_bad_run_length():
    """Test non-positive run lengths are rejected."""
    day = make_day("S1", 1, np.ones(EPOCHS_PER_DAY))
    with pytest.raises(ValueError):
        ingest.apply_nonwear_rule(day, min_run=0)


def test_filter_valid_drops_short_days_and_subjects(make_subject):
    """Test short-wear days are dropped and subjects with too few days excluded."""
    full = make_subject("A", n_days=3)
    short = make_subject("B", n_days=3)

    counts = np.array(short.days[0].counts)
    counts[:1200] = 0
    days = (ingest.apply_nonwear_rule(make_day("B", 1, counts)),) + short.days[1:]
    short = SubjectRecord(subject_id="B", sex=short.sex, site=short.site, age=short.age, bmi=short.bmi, days=days)

    filtered = ingest.filter_valid(CohortTable(subjects=[full, short]))

    assert filtered.subject_ids == ("A",)
    reasons = {(e.subject_id, e.day, e.reason) for e in filtered.exclusions}
    assert ("B", 1, ingest.INSUFFICIENT_WEAR) in reasons
    assert ("B", None, ingest.INSUFFICIENT_DAYS) in reasons


def test_filter_valid_exact_threshold(make_subject):
    """Test a day with exactly the minimum wear epochs is kept."""
    subject = make_subject("A", n_days=3)
    counts = np.array(subject.days[0].counts)
    counts[:EPOCHS_PER_DAY - ingest.MIN_WEAR_EPOCHS] = 0
    first = ingest.apply_nonwear_rule(make_day("A", 1, counts))
    assert first.n_unmasked == ingest.MIN_WEAR_EPOCHS

    subject = SubjectRecord("A", subject.sex, subject.site, subject.age, subject.bmi, (first,) + subject.days[1:])
    filtered = ingest.filter_valid(CohortTable(subjects=[subject]))
    assert len(filtered.subjects[0].days) == 3


def test_filter_valid_no_subjects(make_subject):
    """Test filtering every subject out raises NoValidSubjectsError."""
    cohort = CohortTable(subjects=[make_subject("A", n_days=2)])
    with pytest.raises(NoValidSubjectsError):
        ingest.filter_valid(cohort)


def test_exclusion_rows(make_subject):
    """Test exclusion rows carry subject, day and reason."""
    cohort = CohortTable(subjects=[make_subject("A", n_days=3), make_subject("B", n_days=1)])
    rows = ingest.exclusion_rows(ingest.filter_valid(cohort))
    assert rows == [{"subject_id": "B", "day": None, "reason": ingest.INSUFFICIENT_DAYS}]
