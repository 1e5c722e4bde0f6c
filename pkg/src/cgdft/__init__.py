"""Coarse-grained density functional theory on a one-dimensional few-fermion model."""

from .calculus import (
    EkelandResult,
    QuotientTrace,
    SliceReport,
    directional_derivative,
    ekeland_repair,
    epsilon_subdifferential_check,
    extended_add,
    slice_scan,
)
from .duality import (
    ExcessReport,
    InversionResult,
    NonConvergence,
    NotInteriorDensity,
    energetic_excess,
    ground_energy,
    intrinsic_energy,
    lieb_maximize,
    subgradient_check,
)
from .engine import (
    EnsembleState,
    GroundSpace,
    ModelSpec,
    assemble_hamiltonian,
    density_of,
    f_max,
    ground_space,
    intrinsic_energy_of,
)
from .estimators import CoarseGrainer, DensityInverter, GroundStateDensity
from .kohn_sham import KohnShamFailure, KsReport, hartree_energy, hartree_potential, ks_decompose, ts
from .model import (
    CoarseDensity,
    FineDensity,
    Grid,
    Potential,
    ScaleHierarchy,
    discrete_gradient,
    embed,
    inner,
    norm_lp,
    project,
    von_weizsacker,
)
from .multiscale import (
    ProbeVerdict,
    ScaleSweepRow,
    continuity_modulus,
    oscillation_blowup,
    quasi_continuity_probe,
    representability_probe,
    scale_sweep,
)

__version__ = "0.1.0"

__all__ = [
    "Grid",
    "ScaleHierarchy",
    "FineDensity",
    "CoarseDensity",
    "Potential",
    "project",
    "embed",
    "norm_lp",
    "inner",
    "discrete_gradient",
    "von_weizsacker",
    "ModelSpec",
    "EnsembleState",
    "GroundSpace",
    "assemble_hamiltonian",
    "ground_space",
    "density_of",
    "intrinsic_energy_of",
    "f_max",
    "InversionResult",
    "ExcessReport",
    "NotInteriorDensity",
    "NonConvergence",
    "ground_energy",
    "lieb_maximize",
    "intrinsic_energy",
    "energetic_excess",
    "subgradient_check",
    "QuotientTrace",
    "SliceReport",
    "EkelandResult",
    "extended_add",
    "directional_derivative",
    "slice_scan",
    "epsilon_subdifferential_check",
    "ekeland_repair",
    "KsReport",
    "KohnShamFailure",
    "ts",
    "hartree_energy",
    "hartree_potential",
    "ks_decompose",
    "ScaleSweepRow",
    "ProbeVerdict",
    "scale_sweep",
    "representability_probe",
    "quasi_continuity_probe",
    "continuity_modulus",
    "oscillation_blowup",
    "CoarseGrainer",
    "DensityInverter",
    "GroundStateDensity",
]
