"""perturba: corrections of approximately structured matrices with
certified distances, and randomized stability experiments over them."""

__version__ = "0.1.0"

from .algebra import (
    BlockComposition,
    DefectReport,
    IncidencePattern,
    MasaPartition,
    MatrixUnitSystem,
    StarEmbedding,
    arveson_distance,
    block_diagonal_pattern,
    canonical_units,
    containment_defect,
    expectation,
    masa_distance,
    matrix_unit_residual,
    nest_pattern,
    normalizer_defect,
    random_near_identity_embedding,
)
from .config import DEFAULT_TOLS, Tolerances
from .numkernel import PolarData, SpectralData, exp_skew, herm_eig, operator_norm, polar_svd
from .perturb import (
    CorrectionCertificate,
    align_block_diagonal_range,
    block_triangularize,
    check_rank_stability,
    conjugating_unitary,
    fix_partial_isometry,
    frame_triangularize,
    round_to_projection,
)
from .regular import (
    TreeWords,
    approx_projection_transport,
    fix_normalizer,
    masa_containment,
    regular_stabilize,
    synthesize_regular_embedding,
    transfer_normalizer,
    tree_words,
)
from .stability import (
    lift_tree_edge,
    selfadjoint_containment_check,
    selfadjoint_matrix_units,
    stabilize_nest_inclusion,
)
from .tower import (
    TowerConfig,
    generate_tower,
    masa_density_report,
    perturb_tower,
    recover_chain,
)
