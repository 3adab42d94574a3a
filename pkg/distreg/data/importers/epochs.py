"""
Epoch CSV importer.
Reads `subject_id,day,epoch,count,sex,site,age,bmi` rows into a cohort.
"""
import logging
from pathlib import Path
from typing import Dict, List, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from distreg.exceptions import EpochParseError
from distreg.models.epoch import CohortTable, EpochSeries, Sex, SubjectRecord
from distreg.utils.grid import EPOCHS_PER_DAY

logger = logging.getLogger(__name__)

COLUMNS = ["subject_id", "day", "epoch", "count", "sex", "site", "age", "bmi"]
INTEGER_COLUMNS = ["day", "epoch", "count", "site"]
FLOAT_COLUMNS = ["age", "bmi"]

# header occupies line 1
LINE_OFFSET = 2


class EpochCsvImporter:
    """Importer for 30-second epoch count files."""

    def __init__(self, show_progress: bool = False):
        self.show_progress = show_progress
        self.stats: Dict[str, int] = {}

    def import_file(self, file_path: Union[str, Path]) -> CohortTable:
        """
        Import an epoch CSV.

        Args:
            file_path: Path to the CSV file

        Returns:
            CohortTable with one EpochSeries per (subject, day), masks all false

        Raises:
            EpochParseError: On malformed rows, duplicates, negative counts or gaps
        """
        logger.info(f"Loading epoch data from {file_path}")
        frame = pd.read_csv(file_path, dtype=str, keep_default_na=False, skipinitialspace=True)
        frame.columns = [c.strip() for c in frame.columns]

        missing = [c for c in COLUMNS if c not in frame.columns]
        if missing:
            raise EpochParseError(f"missing columns: {', '.join(missing)}", line=1)

        frame = self._coerce(frame)

        in_window = (frame["epoch"] >= 0) & (frame["epoch"] < EPOCHS_PER_DAY)
        discarded = int((~in_window).sum())
        if discarded:
            logger.warning(
                f"Discarded {discarded} epochs outside the 6:00-23:30 window",
                extra={"discarded_epochs": discarded}
            )
        frame = frame[in_window]

        duplicated = frame.duplicated(subset=["subject_id", "day", "epoch"], keep="first")
        if duplicated.any():
            row = frame[duplicated].iloc[0]
            raise EpochParseError(
                f"duplicate epoch {row['epoch']} for subject {row['subject_id']} day {row['day']}",
                line=int(row["line"]),
            )

        subjects = self._build_subjects(frame)
        self.stats = {
            "rows": int(len(frame) + discarded),
            "discarded": discarded,
            "subjects": len(subjects),
            "days": sum(len(s.days) for s in subjects),
        }
        logger.info(
            f"Loaded {self.stats['days']} subject-days for {self.stats['subjects']} subjects",
            extra=self.stats
        )
        return CohortTable(subjects=subjects)

    def _coerce(self, frame: pd.DataFrame) -> pd.DataFrame:
        """Convert text columns, raising on the first malformed row."""
        frame = frame.copy()
        frame["line"] = np.arange(len(frame)) + LINE_OFFSET
        frame["subject_id"] = frame["subject_id"].str.strip()
        frame["sex"] = frame["sex"].str.strip().str.upper()

        bad = frame["subject_id"] == ""
        bad |= ~frame["sex"].isin([s.value for s in Sex])

        for column in INTEGER_COLUMNS + FLOAT_COLUMNS:
            values = pd.to_numeric(frame[column].str.strip(), errors="coerce")
            bad |= values.isna()
            if column in INTEGER_COLUMNS:
                bad |= values.notna() & (values != values.round())
            frame[column] = values

        if bad.any():
            line = int(frame.loc[bad, "line"].iloc[0])
            raise EpochParseError("malformed row", line=line)

        negative = frame["count"] < 0
        if negative.any():
            raise EpochParseError("negative count", line=int(frame.loc[negative, "line"].iloc[0]))

        bad_day = frame["day"] < 1
        if bad_day.any():
            raise EpochParseError("day index must be >= 1", line=int(frame.loc[bad_day, "line"].iloc[0]))

        for column in INTEGER_COLUMNS:
            frame[column] = frame[column].astype(np.int64)
        return frame

    def _build_subjects(self, frame: pd.DataFrame) -> List[SubjectRecord]:
        subjects: List[SubjectRecord] = []
        groups = frame.groupby("subject_id", sort=False)
        iterator = tqdm(groups, desc="Building subjects", disable=not self.show_progress)

        for subject_id, rows in iterator:
            covariates = rows[["sex", "site", "age", "bmi"]].drop_duplicates()
            if len(covariates) > 1:
                line = int(rows.loc[covariates.index[1], "line"])
                raise EpochParseError(f"inconsistent covariates for subject {subject_id}", line=line)
            first = rows.iloc[0]

            days = []
            for day_index, day_rows in rows.groupby("day", sort=True):
                day_rows = day_rows.sort_values("epoch")
                epochs = day_rows["epoch"].to_numpy()
                if len(epochs) != EPOCHS_PER_DAY:
                    expected = np.arange(EPOCHS_PER_DAY)
                    gap = int(np.setdiff1d(expected, epochs)[0])
                    raise EpochParseError(
                        f"epoch gap for subject {subject_id} day {day_index}: missing epoch {gap}"
                    )
                counts = day_rows["count"].to_numpy(dtype=np.int64)
                days.append(EpochSeries(
                    subject_id=str(subject_id),
                    day_index=int(day_index),
                    counts=counts,
                    missing_mask=np.zeros(EPOCHS_PER_DAY, dtype=bool),
                ))

            try:
                subjects.append(SubjectRecord(
                    subject_id=str(subject_id),
                    sex=Sex(first["sex"]),
                    site=int(first["site"]),
                    age=float(first["age"]),
                    bmi=float(first["bmi"]),
                    days=tuple(days),
                ))
            except ValueError as e:
                raise EpochParseError(str(e), line=int(first["line"])) from e

        return subjects


def write_epoch_csv(cohort: CohortTable, file_path: Union[str, Path]) -> Path:
    """Write a cohort in the importer's CSV schema."""
    file_path = Path(file_path)
    frames = []
    for subject in cohort:
        for day in subject.days:
            frames.append(pd.DataFrame({
                "subject_id": subject.subject_id,
                "day": day.day_index,
                "epoch": np.arange(EPOCHS_PER_DAY),
                "count": day.counts,
                "sex": subject.sex.value,
                "site": subject.site,
                "age": subject.age,
                "bmi": subject.bmi,
            }))
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=COLUMNS)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    frame[COLUMNS].to_csv(file_path, index=False, float_format="%.10g")
    return file_path
