"""
Epoch-level activity records and the subject cohort they belong to.
"""
import enum
from dataclasses import dataclass, field
from typing import Dict, Iterator, Optional, Tuple

import numpy as np
import pandas as pd

from distreg.utils.grid import EPOCHS_PER_DAY


class Sex(str, enum.Enum):
    """Recorded sex of a subject."""
    MALE = "M"
    FEMALE = "F"


@dataclass(frozen=True)
class EpochSeries:
    """One subject-day of 30-second counts with its non-wear mask."""

    subject_id: str
    day_index: int
    counts: np.ndarray
    missing_mask: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        mask = np.asarray(self.missing_mask, dtype=bool)
        if counts.shape != (EPOCHS_PER_DAY,) or mask.shape != (EPOCHS_PER_DAY,):
            raise ValueError(
                f"subject {self.subject_id} day {self.day_index}: expected "
                f"{EPOCHS_PER_DAY} epochs, got counts {counts.shape} mask {mask.shape}"
            )
        if not np.issubdtype(counts.dtype, np.integer):
            if not np.all(np.equal(np.mod(counts, 1), 0)):
                raise ValueError(f"subject {self.subject_id}: counts must be integers")
            counts = counts.astype(np.int64)
        if np.any(counts < 0):
            raise ValueError(f"subject {self.subject_id}: negative count")
        if self.day_index < 1:
            raise ValueError("day_index starts at 1")
        counts = counts.astype(np.int64, copy=True)
        mask = mask.copy()
        counts.flags.writeable = False
        mask.flags.writeable = False
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "missing_mask", mask)

    @property
    def n_unmasked(self) -> int:
        return int(EPOCHS_PER_DAY - self.missing_mask.sum())

    @property
    def observed_counts(self) -> np.ndarray:
        """Counts on unmasked epochs."""
        return self.counts[~self.missing_mask]


@dataclass(frozen=True)
class Exclusion:
    """A day or subject dropped by validity filtering."""

    subject_id: str
    day: Optional[int]
    reason: str


@dataclass(frozen=True)
class SubjectRecord:
    """Covariates and recorded days of one subject."""

    subject_id: str
    sex: Sex
    site: int
    age: float
    bmi: float
    days: Tuple[EpochSeries, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "sex", Sex(self.sex))
        object.__setattr__(self, "days", tuple(self.days))
        if self.site not in (1, 2):
            raise ValueError(f"subject {self.subject_id}: site must be 1 or 2")
        if not 0.0 <= self.bmi <= 100.0:
            raise ValueError(f"subject {self.subject_id}: bmi percentile outside [0, 100]")

    @property
    def observed_counts(self) -> np.ndarray:
        """Unmasked counts pooled over all recorded days."""
        if not self.days:
            return np.empty(0, dtype=np.int64)
        return np.concatenate([day.observed_counts for day in self.days])


@dataclass(frozen=True)
class CohortTable:
    """Subjects with covariates and epoch series, plus filtering report."""

    subjects: Tuple[SubjectRecord, ...]
    exclusions: Tuple[Exclusion, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))
        object.__setattr__(self, "exclusions", tuple(self.exclusions))
        ids = [s.subject_id for s in self.subjects]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate subject ids in cohort")

    def __len__(self) -> int:
        return len(self.subjects)

    def __iter__(self) -> Iterator[SubjectRecord]:
        return iter(self.subjects)

    @property
    def subject_ids(self) -> Tuple[str, ...]:
        return tuple(s.subject_id for s in self.subjects)

    @property
    def n_days(self) -> int:
        return sum(len(s.days) for s in self.subjects)

    def by_id(self) -> Dict[str, SubjectRecord]:
        return {s.subject_id: s for s in self.subjects}

    def covariate_frame(self) -> pd.DataFrame:
        """One row per subject: subject_id, sex, site, age, bmi, n_days."""
        return pd.DataFrame(
            {
                "subject_id": [s.subject_id for s in self.subjects],
                "sex": [s.sex.value for s in self.subjects],
                "site": [s.site for s in self.subjects],
                "age": [float(s.age) for s in self.subjects],
                "bmi": [float(s.bmi) for s in self.subjects],
                "n_days": [len(s.days) for s in self.subjects],
            }
        )
