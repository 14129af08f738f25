"""
Influence Abstraction Toolkit - Models Package
Factored POSGs, exact inference, best-response models and their verification
"""

from .errors import (
    CapExceeded,
    DSetNotSeparating,
    InfluenceAbstractionError,
    InfluenceOnObservationOrReward,
    ModelFormatError,
    ModelValidationError,
    UnreachableHistory,
    ZeroEvidence,
    ZeroProbObservation,
)
from .model import (
    DSetSpec,
    FactoredPOSG,
    LocalStateFunction,
    Policy,
    Tracked,
    classify_factors,
    proxy_rewrite,
    validate_lfm,
    validate_model,
    validate_policy,
)
from .builder import ModelBuilder
from .dbn import query, unroll
from .gfbrm import build_gfbrm
from .influence import compute_influence, compute_influence_isd, influence_for
from .ialm import build_ialm
from .solver import evaluate_policy, extract_policy, solve
from .verify import check_theorem, model_statistics

__all__ = [
    'CapExceeded', 'DSetNotSeparating', 'InfluenceAbstractionError', 'InfluenceOnObservationOrReward',
    'ModelFormatError', 'ModelValidationError', 'UnreachableHistory', 'ZeroEvidence', 'ZeroProbObservation',
    'DSetSpec', 'FactoredPOSG', 'LocalStateFunction', 'Policy', 'Tracked', 'classify_factors', 'proxy_rewrite',
    'validate_lfm', 'validate_model', 'validate_policy', 'ModelBuilder', 'query', 'unroll', 'build_gfbrm',
    'compute_influence', 'compute_influence_isd', 'influence_for', 'build_ialm', 'evaluate_policy',
    'extract_policy', 'solve', 'check_theorem', 'model_statistics',
]
