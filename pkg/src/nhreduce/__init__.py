"""Discrete Lagrange-D'Alembert-Poincare systems, their reduction by discrete
connections and by stages, with the Suslov rigid body and a staged particle
as worked instances.
"""
from .dldps import (DiscretePath, DldpsSystem, NoConvergence, PathPair, TrajectoryReport,
                    integrate, newton_step, verify_trajectory)
from .matgroup import SO3, ConstraintSubspace, Translations, cay, cay_inv, hat, vee

__all__ = [
    "DiscretePath", "DldpsSystem", "NoConvergence", "PathPair", "TrajectoryReport",
    "integrate", "newton_step", "verify_trajectory",
    "SO3", "ConstraintSubspace", "Translations", "cay", "cay_inv", "hat", "vee",
]

__version__ = "0.1.0"
