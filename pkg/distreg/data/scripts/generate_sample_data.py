"""
Generate a small synthetic epoch corpus for development and testing.
Writes the ingest CSV schema so the pipeline can run without real accelerometer files.
"""
import logging

import click

from distreg.config import GeneratorSettings, ScenarioSettings
from distreg.data.importers.epochs import write_epoch_csv
from distreg.services import simgen

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


@click.command()
@click.option("--output", "-o", required=True, type=click.Path(dir_okay=False), help="CSV file to write")
@click.option("--subjects-per-cell", default=4, show_default=True, help="Subjects per age-by-sex cell")
@click.option("--days", default=3, show_default=True, help="Days per subject")
@click.option("--ages", default="12,14,16", show_default=True, help="Comma-separated ages")
@click.option("--case", type=click.Choice(["none", "bedtime", "bedtime_plus_daytime"]), default="bedtime",
              show_default=True, help="Missingness scenario")
@click.option("--seed", default=20240501, show_default=True, help="Master seed")
def main(output: str, subjects_per_cell: int, days: int, ages: str, case: str, seed: int):
    """Generate sample epoch data."""
    generator = GeneratorSettings(
        ages=[int(a) for a in ages.split(",") if a.strip()],
        subjects_per_cell=subjects_per_cell,
        days_per_subject=days,
    )
    cohort = simgen.generate_cohort(generator, seed, show_progress=True)
    cohort = simgen.impose_missingness(cohort, ScenarioSettings(case=case), seed)
    path = write_epoch_csv(cohort, output)
    click.echo(f"Wrote {len(cohort)} subjects, {cohort.n_days} days to {path}")


if __name__ == "__main__":
    main()
