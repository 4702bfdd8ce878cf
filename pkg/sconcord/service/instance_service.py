from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Mapping, Optional

from sconcord.config import settings
from sconcord.model.schemas import ProblemKind
from sconcord.problems.registry import generate
from sconcord.problems.storage import ProblemInstance, load_instance, save_instance

logger = logging.getLogger(__name__)


class InstanceService:
    """Generates, stores and reloads problem instances under one output directory."""

    def __init__(self, output_dir: Optional[Path] = None) -> None:
        self.output_dir = Path(output_dir or settings.SCONCORD_OUTPUT_DIR)

    def default_stem(self, problem: ProblemKind, seed: int) -> Path:
        return self.output_dir / "instances" / f"{problem.value}-seed{seed}"

    def generate(
        self,
        problem: ProblemKind,
        seed: int,
        params: Optional[Mapping[str, Any]] = None,
        stem: Optional[Path] = None,
    ) -> Path:
        """Builds the instance and writes it; returns the sidecar path."""
        instance = generate(problem, seed, params or {})
        path = save_instance(instance, stem or self.default_stem(problem, seed))
        logger.info("Generated %s seed %d → %s", problem.value, seed, path)
        return path

    def load(self, path: Path) -> ProblemInstance:
        return load_instance(path)

    def build(
        self, problem: ProblemKind, seed: int, params: Optional[Mapping[str, Any]] = None
    ) -> ProblemInstance:
        """In-memory generation, for runs that do not keep the instance files."""
        return generate(problem, seed, params or {})
