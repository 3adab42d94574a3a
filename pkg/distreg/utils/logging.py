"""
Stage logging for pipeline steps.
Provides structured start/finish/error records with elapsed time.
"""
import time
import logging
from contextlib import contextmanager
from typing import Any, Dict, Iterator

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LOG_DATEFMT = '%Y-%m-%d %H:%M:%S'


def configure_logging(level: str = "INFO") -> None:
    """Configure root logging the same way for every entry point."""
    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format=LOG_FORMAT,
        datefmt=LOG_DATEFMT,
        force=True,
    )


@contextmanager
def log_stage(stage: str, **fields: Any) -> Iterator[Dict[str, Any]]:
    """
    Log the start and end of a pipeline stage.

    The yielded dict can be filled by the caller; its contents are attached
    to the completion record.
    """
    start_time = time.time()
    details: Dict[str, Any] = {}

    logger.info(f"Stage start: {stage}", extra={"stage": stage, **fields})

    try:
        yield details
    except Exception as e:
        process_time = time.time() - start_time
        logger.error(
            f"Stage failed: {stage} - {str(e)}",
            extra={
                "stage": stage,
                "error": str(e),
                "process_time": round(process_time, 3),
                **fields,
            },
            exc_info=True
        )
        raise

    process_time = time.time() - start_time
    logger.info(
        f"Stage done: {stage} in {process_time:.2f}s",
        extra={
            "stage": stage,
            "process_time": round(process_time, 3),
            **fields,
            **details,
        }
    )
