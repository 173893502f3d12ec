"""Gap-counting diagnostics for softmax attention rows.

The core object is the counting function of a score row: how many keys sit
within a given gap of the maximum score.  From it the package derives the
accumulation scale, the contact point and the exponents used to compare
inverse-temperature schedules across context lengths.
"""
from .errors import (ConfigError, DomainError, EstimationError, GapCountError, InputError,
                     RankError)
from .gap_count import (ContactTriple, accumulation_scale, contact_point, contact_triple,
                        contact_triples, laplace_envelope, log_partition, rank_boundary,
                        resolved_scale)
from .row_core import (GapProfile, Observables, RowMeta, ScoreRow, SoftmaxResult,
                       counting_function, gap_profile, observables, partition_by_parts,
                       softmax)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DomainError", "EstimationError", "GapCountError", "InputError",
    "RankError", "ContactTriple", "accumulation_scale", "contact_point", "contact_triple",
    "contact_triples", "laplace_envelope", "log_partition", "rank_boundary",
    "resolved_scale", "GapProfile", "Observables", "RowMeta", "ScoreRow", "SoftmaxResult",
    "counting_function", "gap_profile", "observables", "partition_by_parts", "softmax",
    "__version__",
]
