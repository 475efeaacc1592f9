"""Linear algebra, reverse-mode differentiation and random streams."""
from .autodiff import Parameter, Tape, Tensor, backward
from .linalg import (
    ConvergenceError,
    DegenerateInputError,
    SymmetricOperator,
    canonicalize_signs,
    sym_eigs_smallest,
    thin_svd,
)
from .rng import Xoshiro256, child_seed, make_rng

__all__ = [
    "ConvergenceError",
    "DegenerateInputError",
    "Parameter",
    "SymmetricOperator",
    "Tape",
    "Tensor",
    "Xoshiro256",
    "backward",
    "canonicalize_signs",
    "child_seed",
    "make_rng",
    "sym_eigs_smallest",
    "thin_svd",
]
