"""
Artifact store for one output directory.
Reads and writes CSV/JSON artifacts, hashes them for the run manifest and
owns the directory through a lock file.
"""
import hashlib
import json
import logging
import os
from contextlib import contextmanager
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from distreg import __version__
from distreg.exceptions import DependencyMissingError, OutputLockedError
from distreg.models.regression import CELL_LABELS, PosteriorDraws
from distreg.schemas.artifacts import DrawsSidecar
from distreg.schemas.manifest import ErrorReport, ManifestEntry, RunManifest

logger = logging.getLogger(__name__)

LOCK_FILE = ".distreg.lock"
ERROR_REPORT = "error_report.json"
TRACKED_PACKAGES = ("numpy", "scipy", "pandas", "pydantic", "pydantic-settings", "click")
FIXED_LABELS = (*CELL_LABELS, "age", "bmi")
DRAW_BLOCKS = ("beta", "beta_miss", "u_age", "u_bmi", "variances")


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def package_versions() -> Dict[str, str]:
    versions = {}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


class ArtifactStore:
    """CSV/JSON artifacts under a single output directory."""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.written: List[Path] = []
        self.read: List[Path] = []

    def path(self, name: str) -> Path:
        return self.root / name

    def exists(self, name: str) -> bool:
        return self.path(name).is_file()

    def require(self, *names: str) -> None:
        """Raise DependencyMissingError for the first absent artifact."""
        for name in names:
            if not self.exists(name):
                raise DependencyMissingError(name)

    def begin(self) -> None:
        """Start tracking reads and writes for a new subcommand."""
        self.written = []
        self.read = []

    def track_input(self, path: Path) -> None:
        if path not in self.read:
            self.read.append(path)

    def track_output(self, path: Path) -> None:
        if path not in self.written:
            self.written.append(path)

    def write_csv(self, name: str, frame: pd.DataFrame) -> Path:
        path = self.path(name)
        frame.to_csv(path, index=False)
        self.track_output(path)
        logger.debug(f"Wrote {name}", extra={"artifact": name, "rows": len(frame)})
        return path

    def read_csv(self, name: str, **kwargs) -> pd.DataFrame:
        self.require(name)
        path = self.path(name)
        self.track_input(path)
        return pd.read_csv(path, **kwargs)

    def write_json(self, name: str, data: Union[BaseModel, Dict[str, Any]]) -> Path:
        path = self.path(name)
        if isinstance(data, BaseModel):
            text = data.model_dump_json(indent=2)
        else:
            text = json.dumps(data, indent=2, sort_keys=True)
        path.write_text(text + "\n")
        self.track_output(path)
        return path

    def read_json(self, name: str) -> Dict[str, Any]:
        self.require(name)
        path = self.path(name)
        self.track_input(path)
        return json.loads(path.read_text())

    def write_matrix(self, name: str, matrix: np.ndarray, row_ids: Sequence[str],
                     prefix: str, id_column: str = "subject_id") -> Path:
        """Matrix with one labelled row per subject and columns prefix0001..."""
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        width = max(4, len(str(matrix.shape[1])))
        columns = [f"{prefix}{j + 1:0{width}d}" for j in range(matrix.shape[1])]
        frame = pd.DataFrame(matrix, columns=columns)
        frame.insert(0, id_column, list(row_ids))
        return self.write_csv(name, frame)

    def read_matrix(self, name: str, id_column: str = "subject_id"):
        """Inverse of write_matrix: (row ids, matrix)."""
        frame = self.read_csv(name, dtype={id_column: str})
        ids = frame[id_column].tolist()
        return ids, frame.drop(columns=[id_column]).to_numpy(dtype=float)

    def write_draws(self, prefix: str, draws: PosteriorDraws, projection_rate: Optional[float] = None) -> None:
        """
        Persist posterior draws as one columnar CSV per block plus a JSON sidecar.

        Block CSVs have one row per (draw, coefficient) in draw-major order.
        """
        r, k = draws.n_draws, draws.k
        index = pd.DataFrame({
            "draw": np.repeat(np.arange(r), k),
            "coefficient": np.tile(np.arange(1, k + 1), r),
        })
        blocks = {
            "beta": (draws.beta, list(FIXED_LABELS)),
            "beta_miss": (draws.beta_miss, [f"m{j + 1}" for j in range(draws.k_m)]),
            "u_age": (draws.u_age, [f"age{j + 1}" for j in range(draws.u_age.shape[2])]),
            "u_bmi": (draws.u_bmi, [f"bmi{j + 1}" for j in range(draws.u_bmi.shape[2])]),
        }
        for block, (values, columns) in blocks.items():
            frame = pd.concat([index, pd.DataFrame(values.reshape(r * k, values.shape[2]), columns=columns)], axis=1)
            self.write_csv(f"{prefix}_{block}.csv", frame)

        variances = index.copy()
        variances["tau_age"] = draws.tau_age.reshape(-1)
        variances["tau_bmi"] = draws.tau_bmi.reshape(-1)
        variances["s"] = draws.s.reshape(-1)
        self.write_csv(f"{prefix}_variances.csv", variances)

        meta = draws.metadata
        sidecar = DrawsSidecar(
            response=meta.get("response", prefix),
            n_draws=r,
            k=k,
            k_m=draws.k_m,
            n_spline=draws.u_age.shape[2],
            burn_in=meta.get("burn_in", 0),
            keep=meta.get("keep", r),
            thin=meta.get("thin", 1),
            seed=meta.get("seed", 0),
            coefficient_seeds=meta.get("coefficient_seeds", []),
            priors=meta.get("priors", {}),
            design=meta.get("design"),
            subject_ids=meta.get("subject_ids", []),
            projection_rate=projection_rate,
        )
        self.write_json(f"{prefix}_draws.json", sidecar)

    def read_draws(self, prefix: str) -> PosteriorDraws:
        """Inverse of write_draws."""
        names = [f"{prefix}_{block}.csv" for block in DRAW_BLOCKS]
        self.require(f"{prefix}_draws.json", *names)
        sidecar = DrawsSidecar.model_validate(self.read_json(f"{prefix}_draws.json"))
        r, k = sidecar.n_draws, sidecar.k

        def block(name: str) -> np.ndarray:
            frame = self.read_csv(f"{prefix}_{name}.csv")
            values = frame.drop(columns=["draw", "coefficient"]).to_numpy(dtype=float)
            return values.reshape(r, k, values.shape[1])

        variances = self.read_csv(f"{prefix}_variances.csv")
        return PosteriorDraws(
            beta=block("beta"),
            beta_miss=block("beta_miss"),
            u_age=block("u_age"),
            u_bmi=block("u_bmi"),
            tau_age=variances["tau_age"].to_numpy(dtype=float).reshape(r, k),
            tau_bmi=variances["tau_bmi"].to_numpy(dtype=float).reshape(r, k),
            s=variances["s"].to_numpy(dtype=float).reshape(r, k),
            metadata=sidecar.model_dump(),
        )

    @contextmanager
    def lock(self) -> Iterator[Path]:
        """Exclusive ownership of the output directory."""
        path = self.path(LOCK_FILE)
        try:
            fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError as e:
            raise OutputLockedError(f"output directory {self.root} is locked by {path}") from e
        try:
            os.write(fd, str(os.getpid()).encode())
            os.close(fd)
            yield path
        finally:
            path.unlink(missing_ok=True)

    def write_manifest(self, subcommand: str, seed: int, config_sha256: str) -> Path:
        """Manifest listing every artifact read and written by the subcommand."""
        def entries(paths: List[Path]) -> List[ManifestEntry]:
            return [
                ManifestEntry(path=p.name, sha256=sha256_file(p), bytes=p.stat().st_size)
                for p in sorted(paths)
                if p.is_file()
            ]

        manifest = RunManifest(
            subcommand=subcommand,
            created_at=datetime.now(timezone.utc),
            package_version=__version__,
            versions=package_versions(),
            seed=seed,
            config_sha256=config_sha256,
            inputs=entries(self.read),
            outputs=entries(self.written),
        )
        path = self.path(f"manifest_{subcommand}.json")
        path.write_text(manifest.model_dump_json(indent=2) + "\n")
        return path

    def write_error_report(self, report: ErrorReport) -> Optional[Path]:
        path = self.path(ERROR_REPORT)
        try:
            path.write_text(report.model_dump_json(indent=2) + "\n")
        except OSError:
            logger.error(f"Could not write {ERROR_REPORT}", exc_info=True)
            return None
        return path

    def clear_error_report(self) -> None:
        self.path(ERROR_REPORT).unlink(missing_ok=True)
