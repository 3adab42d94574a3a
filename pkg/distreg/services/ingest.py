"""
Epoch ingestion service.
Applies the 30-minute non-wear rule and the valid-day / valid-subject filters.
"""
import logging
from collections import Counter
from dataclasses import replace
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from distreg.exceptions import NoValidSubjectsError
from distreg.models.epoch import CohortTable, EpochSeries, Exclusion, SubjectRecord

logger = logging.getLogger(__name__)

NONWEAR_MIN_RUN = 60
MIN_WEAR_EPOCHS = 960
MIN_VALID_DAYS = 3

INSUFFICIENT_WEAR = "insufficient_wear"
INSUFFICIENT_DAYS = "insufficient_days"


def parse_epoch_csv(path: Union[str, Path]) -> CohortTable:
    """Read an epoch CSV into a pre-filter cohort with all masks false."""
    from distreg.data.importers.epochs import EpochCsvImporter

    return EpochCsvImporter().import_file(path)


def runs_of(flags: np.ndarray) -> List[Tuple[int, int]]:
    """
    Maximal runs of True values.

    Returns:
        List of (start, stop) half-open index pairs
    """
    flags = np.asarray(flags, dtype=bool)
    padded = np.concatenate([[False], flags, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return list(zip(edges[::2].tolist(), edges[1::2].tolist()))


def nonwear_mask(counts: np.ndarray, min_run: int = NONWEAR_MIN_RUN) -> np.ndarray:
    """Mask every maximal run of zero counts of length >= min_run."""
    counts = np.asarray(counts)
    mask = np.zeros(counts.shape, dtype=bool)
    for start, stop in runs_of(counts == 0):
        if stop - start >= min_run:
            mask[start:stop] = True
    return mask


def apply_nonwear_rule(series: EpochSeries, min_run: int = NONWEAR_MIN_RUN) -> EpochSeries:
    """
    Label device non-wear on one subject-day.

    The mask is recomputed from the counts alone, so the rule is idempotent
    and only zero counts are ever masked. Runs touching the window edges are
    measured on in-window epochs only.
    """
    if min_run < 1:
        raise ValueError("min_run must be positive")
    return replace(series, missing_mask=nonwear_mask(series.counts, min_run))


def apply_nonwear_cohort(cohort: CohortTable, min_run: int = NONWEAR_MIN_RUN) -> CohortTable:
    """Apply the non-wear rule to every day of every subject."""
    subjects = [
        replace(subject, days=tuple(apply_nonwear_rule(day, min_run) for day in subject.days))
        for subject in cohort
    ]
    masked = sum(int(day.missing_mask.sum()) for s in subjects for day in s.days)
    logger.info(
        f"Non-wear rule masked {masked} epochs across {cohort.n_days} days",
        extra={"masked_epochs": masked, "n_days": cohort.n_days, "min_run": min_run}
    )
    return CohortTable(subjects=subjects, exclusions=cohort.exclusions)


def filter_valid(
    cohort: CohortTable,
    min_wear_epochs: int = MIN_WEAR_EPOCHS,
    min_days: int = MIN_VALID_DAYS,
) -> CohortTable:
    """
    Drop short-wear days, then subjects left with too few days.

    Args:
        cohort: Cohort with masks already applied
        min_wear_epochs: Minimum unmasked epochs for a valid day
        min_days: Minimum valid days for a retained subject

    Returns:
        Filtered cohort whose exclusions list every dropped day and subject

    Raises:
        NoValidSubjectsError: If no subject survives
    """
    retained: List[SubjectRecord] = []
    exclusions: List[Exclusion] = list(cohort.exclusions)

    for subject in cohort:
        valid_days = []
        for day in subject.days:
            if day.n_unmasked < min_wear_epochs:
                exclusions.append(Exclusion(subject.subject_id, day.day_index, INSUFFICIENT_WEAR))
            else:
                valid_days.append(day)
        if len(valid_days) < min_days:
            exclusions.append(Exclusion(subject.subject_id, None, INSUFFICIENT_DAYS))
            continue
        retained.append(replace(subject, days=tuple(valid_days)))

    reasons = Counter(e.reason for e in exclusions)
    logger.info(
        f"Validity filter kept {len(retained)} of {len(cohort)} subjects",
        extra={"retained": len(retained), "dropped": len(cohort) - len(retained), **reasons}
    )

    if not retained:
        raise NoValidSubjectsError("no valid subjects")

    return CohortTable(subjects=retained, exclusions=exclusions)


def exclusion_rows(cohort: CohortTable) -> List[dict]:
    """Exclusion report rows: subject_id, day, reason."""
    return [
        {"subject_id": e.subject_id, "day": e.day, "reason": e.reason}
        for e in cohort.exclusions
    ]
