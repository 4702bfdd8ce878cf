import os
import logging
from dataclasses import dataclass
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables from a .env file if it exists
load_dotenv()

logger = logging.getLogger(__name__)

# Defaults for the runtime settings
DEFAULT_THREADS = 1
DEFAULT_LOG_LEVEL = "INFO"
DEFAULT_OUTPUT_DIR = "runs"


@dataclass
class RuntimeSettings:
    """
    Process-wide settings for the harness, loaded from environment variables.
    """

    SCONCORD_THREADS: int  # Bench worker count
    SCONCORD_LOG_LEVEL: str
    SCONCORD_OUTPUT_DIR: Path


def get_runtime_settings() -> RuntimeSettings:
    """
    Reads and validates the runtime settings.
    Raises:
        ValueError: If SCONCORD_THREADS is not a positive integer.
    """
    raw_threads = os.environ.get("SCONCORD_THREADS", str(DEFAULT_THREADS))
    try:
        threads = int(raw_threads)
        if threads < 1:
            raise ValueError(f"must be >= 1, got {threads}")
    except ValueError:
        logger.error("FATAL: SCONCORD_THREADS must be a positive integer, got %r.", raw_threads)
        raise

    return RuntimeSettings(
        SCONCORD_THREADS=threads,
        SCONCORD_LOG_LEVEL=os.environ.get("SCONCORD_LOG_LEVEL", DEFAULT_LOG_LEVEL).upper(),
        SCONCORD_OUTPUT_DIR=Path(os.environ.get("SCONCORD_OUTPUT_DIR", DEFAULT_OUTPUT_DIR)),
    )


# Create a single, importable instance of the configuration
settings = get_runtime_settings()
