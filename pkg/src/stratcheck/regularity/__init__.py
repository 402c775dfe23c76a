"""Kuo conditions, the deformation family, stratification regularity tests and claim verifiers."""

from .claims import (
    claim_I_verify,
    claim_II_and_III_verify,
    claim_IV_verify,
    key_estimation_verify,
    lemma_cd_verify,
)
from .conditions import (
    PipelineConfig,
    PipelineResult,
    a_regularity_test,
    c_regularity_test,
    cd_condition_test,
    condition_m_check,
    full_pipeline,
    implication_counterexamples,
    kernel_tangent_plane,
)
from .family import (
    DeformationFamily,
    NotOnSmoothStratum,
    SequenceSpec,
    StratificationSpec,
    build_family,
    build_sequences,
    control_function,
    newton_on_sphere,
    stratify,
    t_grid,
    tangent_plane_Y,
)
from .kuo import AllShellsEmptyError, KuoReport, kuo_check, kuo_functional, second_kuo_check
from .report import FAILS, HOLDS, INCONCLUSIVE, VACUOUS, RegularityReport, Thresholds, jsonable

__all__ = [name for name in dir() if not name.startswith("_")]
