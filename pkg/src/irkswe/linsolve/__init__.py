from .krylov import KrylovBreakdown, KrylovStats, fgmres, gmres_fixed
from .multigrid import (
    DirectSolver,
    KrylovConfig,
    MGHierarchyOperators,
    MultigridSolver,
    field_weights,
    mg_vcycle,
)
from .patches import AdditiveSchwarz, Patch, SingularPatchError, extract_patches, patch_multiplicity


def smoother_apply(ops: MGHierarchyOperators, level: int, r):
    """Two GMRES iterations on level ``level`` right-preconditioned by additive Schwarz."""
    return ops.smooth(level, r)


def asm_apply(asm: AdditiveSchwarz, r):
    return asm.apply(r)


__all__ = [
    "AdditiveSchwarz",
    "DirectSolver",
    "KrylovBreakdown",
    "KrylovConfig",
    "KrylovStats",
    "MGHierarchyOperators",
    "MultigridSolver",
    "Patch",
    "SingularPatchError",
    "asm_apply",
    "extract_patches",
    "fgmres",
    "field_weights",
    "gmres_fixed",
    "mg_vcycle",
    "patch_multiplicity",
    "smoother_apply",
]
