"""
Run manifest and error report schemas.
"""
from pydantic import BaseModel, Field
from typing import Dict, List, Optional
from datetime import datetime


class ManifestEntry(BaseModel):
    """One output file with its content hash."""
    path: str
    sha256: str
    bytes: int


class RunManifest(BaseModel):
    """Written by every subcommand next to its outputs."""
    subcommand: str
    created_at: datetime
    package_version: str
    versions: Dict[str, str] = {}
    seed: int
    config_sha256: str
    inputs: List[ManifestEntry] = []
    outputs: List[ManifestEntry] = []


class ErrorReport(BaseModel):
    """Machine-readable failure description."""
    subcommand: str
    error: str
    message: str
    exit_code: int = Field(..., ge=1)
    artifact: Optional[str] = None
