"""
Instance container: one column-major .npy file per matrix
(`<stem>.<name>.npy`) next to a `<stem>.json` sidecar holding the metadata.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np
from pydantic import ValidationError

from sconcord.errors import InstanceFormatError
from sconcord.model.schemas import InstanceSidecar, ProblemKind
from sconcord.problems.nmf import NmfInstance
from sconcord.problems.phase_retrieval import PhaseRetrievalInstance

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class DemoInstance:
    """Closed-form problems: everything needed to rebuild them is in the sidecar."""

    problem: ProblemKind
    seed: int
    params: Dict[str, Any] = field(default_factory=dict)
    weights: Dict[str, float] = field(default_factory=dict)


ProblemInstance = Union[NmfInstance, PhaseRetrievalInstance, DemoInstance]


def problem_of(instance: ProblemInstance) -> ProblemKind:
    if isinstance(instance, NmfInstance):
        return ProblemKind.NMF_MSE if instance.loss == "frobenius" else ProblemKind.NMF_KL
    if isinstance(instance, PhaseRetrievalInstance):
        return ProblemKind.PHASE_RETRIEVAL
    return instance.problem


def _to_container(instance: ProblemInstance) -> Tuple[InstanceSidecar, Dict[str, np.ndarray]]:
    problem = problem_of(instance)
    if isinstance(instance, NmfInstance):
        matrices = {"z": instance.z_matrix}
        if instance.x_hat is not None and instance.y_hat is not None:
            matrices.update({"x_hat": instance.x_hat, "y_hat": instance.y_hat})
        sidecar = InstanceSidecar(
            problem=problem,
            seed=instance.seed,
            dims={"m": instance.m, "n": instance.n, "r": instance.r},
            params={"loss": instance.loss, "noise": instance.noise},
            weights={
                "barrier": instance.barrier_weight,
                "quartic": instance.quartic_weight,
            },
            hints={"optimal_value": instance.optimal_value_hint},
            matrices=sorted(matrices),
            notes=list(instance.notes),
        )
        return sidecar, matrices
    if isinstance(instance, PhaseRetrievalInstance):
        matrices = {
            "sensing_real": instance.sensing_real,
            "sensing_imag": instance.sensing_imag,
            "targets": instance.targets,
        }
        if instance.signal is not None:
            matrices["signal"] = instance.signal
        sidecar = InstanceSidecar(
            problem=problem,
            seed=instance.seed,
            dims={"n": instance.n, "m": instance.m},
            params={"noise": instance.noise},
            weights={"ell": instance.ell, "kappa": instance.kappa},
            hints={"optimal_value": 0.0 if instance.noise == 0.0 else None},
            matrices=sorted(matrices),
            notes=["ell from the aggregated per-term bound with safety factor 2"],
        )
        return sidecar, matrices
    sidecar = InstanceSidecar(
        problem=problem,
        seed=instance.seed,
        dims={"n": int(instance.params.get("n", 2))},
        params=dict(instance.params),
        weights=dict(instance.weights),
    )
    return sidecar, {}


def _from_container(sidecar: InstanceSidecar, matrices: Dict[str, np.ndarray]) -> ProblemInstance:
    try:
        if sidecar.problem in (ProblemKind.NMF_MSE, ProblemKind.NMF_KL):
            return NmfInstance(
                z_matrix=matrices["z"],
                m=sidecar.dims["m"],
                n=sidecar.dims["n"],
                r=sidecar.dims["r"],
                loss=sidecar.params["loss"],
                barrier_weight=sidecar.weights["barrier"],
                quartic_weight=sidecar.weights["quartic"],
                optimal_value_hint=sidecar.hints.get("optimal_value"),
                seed=sidecar.seed,
                noise=float(sidecar.params.get("noise", 0.0)),
                x_hat=matrices.get("x_hat"),
                y_hat=matrices.get("y_hat"),
                notes=tuple(sidecar.notes),
            )
        if sidecar.problem == ProblemKind.PHASE_RETRIEVAL:
            return PhaseRetrievalInstance(
                sensing_real=matrices["sensing_real"],
                sensing_imag=matrices["sensing_imag"],
                targets=matrices["targets"],
                ell=sidecar.weights["ell"],
                seed=sidecar.seed,
                noise=float(sidecar.params.get("noise", 0.0)),
                signal=matrices.get("signal"),
                kappa=sidecar.weights.get("kappa", 4.0),
            )
    except KeyError as e:
        raise InstanceFormatError(f"sidecar for {sidecar.problem.value} lacks {e}") from e
    return DemoInstance(
        problem=sidecar.problem,
        seed=sidecar.seed,
        params=dict(sidecar.params),
        weights=dict(sidecar.weights),
    )


def sidecar_path(stem: Path) -> Path:
    return stem.with_name(stem.name + ".json")


def matrix_path(stem: Path, name: str) -> Path:
    return stem.with_name(f"{stem.name}.{name}.npy")


def save_instance(instance: ProblemInstance, stem: Path) -> Path:
    """Writes the matrices and the sidecar; returns the sidecar path."""
    sidecar, matrices = _to_container(instance)
    stem.parent.mkdir(parents=True, exist_ok=True)
    for name, array in matrices.items():
        np.save(matrix_path(stem, name), np.asfortranarray(array), allow_pickle=False)
    path = sidecar_path(stem)
    path.write_text(sidecar.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info(
        "Saved %s instance (%d matrices) → %s", sidecar.problem.value, len(matrices), path
    )
    return path


def load_instance(path: Path) -> ProblemInstance:
    """Accepts the sidecar path or the bare stem."""
    path = Path(path)
    if path.suffix != ".json":
        path = sidecar_path(path)
    if not path.is_file():
        raise InstanceFormatError(f"no instance sidecar at {path}")
    try:
        sidecar = InstanceSidecar.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise InstanceFormatError(f"invalid sidecar {path}: {e}") from e
    if sidecar.format_version != FORMAT_VERSION:
        raise InstanceFormatError(
            f"{path}: format version {sidecar.format_version}, expected {FORMAT_VERSION}"
        )
    stem = path.with_suffix("")
    matrices: Dict[str, np.ndarray] = {}
    for name in sidecar.matrices:
        file = matrix_path(stem, name)
        if not file.is_file():
            raise InstanceFormatError(f"{path}: missing matrix file {file.name}")
        try:
            matrices[name] = np.ascontiguousarray(np.load(file, allow_pickle=False))
        except ValueError as e:
            raise InstanceFormatError(f"unreadable matrix {file}: {e}") from e
    return _from_container(sidecar, matrices)
