"""Central numerical tolerances and frozen calibration constants.

Every threshold used by the correction routines and the experiment
harness lives here so that a run is fully determined by one record.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    """Tolerance set shared by all modules.

    recon_coeff    eig/svd reconstruction residual budget, per unit of
                   ``n * norm(input)``
    rank_rel       singular values below ``rank_rel * max_sv`` count as zero
    struct_coeff   structural identity residual budget, per unit of ``n``
                   (inputs are normalized to norm <= 2)
    herm_tol       Hermitian / skew-Hermitian input validation
    round_ceiling  spectral rounding hypothesis: defect must stay below 1/4
    selfadjoint_gate  gate for the diagonal reconstruction stage (safety
                   factor 2 under the rounding ceiling)
    brute_limit    largest cell count for exhaustive projection enumeration
    """

    recon_coeff: float = 1e-11
    rank_rel: float = 1e-10
    struct_coeff: float = 1e-9
    herm_tol: float = 1e-8
    round_ceiling: float = 0.25
    selfadjoint_gate: float = 0.125
    brute_limit: int = 12

    def recon_tol(self, n: int, scale: float) -> float:
        return self.recon_coeff * n * max(scale, 1.0)

    def struct_tol(self, n: int) -> float:
        return self.struct_coeff * n


DEFAULT_TOLS = Tolerances()

# Calibration constants frozen from pre-build ensemble measurements.
# Each value is the measured worst case with at least a 2x safety margin.

# Recovery factor for chain recovery: per-level unit distance c_k stays
# below CHAIN_RECOVERY_FACTOR * eps_k on admissible towers (measured max
# ratio 1.28 over 50 depth-4 towers).
CHAIN_RECOVERY_FACTOR = 3.0

# Median recovery distance thresholds for the nest-stability pipeline at
# composition (2,2,2), multiplicity 2, by input conjugation size
# (measured medians 6.3e-3 / 6.5e-4 / 6.3e-5 over 50 trials each).
STABILITY_MEDIAN_THRESHOLDS = {
    1e-2: 1.3e-2,
    1e-3: 1.3e-3,
    1e-4: 1.3e-4,
}

# fix_normalizer output distance never exceeds this multiple of the true
# nearest-normalizer distance found by exhaustive search (n <= 5; the
# measured worst ratio was 1.0 + 5e-15, so 3.0 holds with wide margin).
NORMALIZER_ORACLE_FACTOR = 3.0

# Regular-stability certificates at ambient multiplicities 2 and 4 agree
# within this factor (median over trials).
AMBIENT_INDEPENDENCE_FACTOR = 2.0
