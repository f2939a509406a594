"""Numerical laboratory for expanding affine gas flows.

Simulates the background matrix ODE of an isothermal expanding gas, the
rescaled Lagrangian perturbation dynamics around it, and verifies the
structural claims of the dynamics at desk scale: determinant growth,
finite propagation speed, boundedness and decay of the weighted norms,
and the algebraic/energy identities the analysis rests on.
"""

from .affine import (
    AffineParams,
    AffineTrajectory,
    AsymptoticFit,
    affine_rhs,
    asymptotic_fit,
    integrate_affine,
    ode_energy,
)
from .evolve import EvolverConfig, evolve, rhs_theta
from .fields import FlowState, Grid3, WeightProfiles, build_profiles, kinematics
from .kernels import backend_name
from .modulation import FrameTrack, ModulationFrame, frame_at, verify_frame_bounds
from .timeframe import (
    ExponentSet,
    TimeRescaling,
    build_rescaling,
    default_sigma,
    exponents,
    trajectory_spanning_tau,
)

__version__ = "0.1.0"

__all__ = [
    "AffineParams",
    "AffineTrajectory",
    "AsymptoticFit",
    "EvolverConfig",
    "ExponentSet",
    "FlowState",
    "FrameTrack",
    "Grid3",
    "ModulationFrame",
    "TimeRescaling",
    "WeightProfiles",
    "affine_rhs",
    "asymptotic_fit",
    "backend_name",
    "build_profiles",
    "build_rescaling",
    "default_sigma",
    "evolve",
    "exponents",
    "frame_at",
    "integrate_affine",
    "kinematics",
    "ode_energy",
    "rhs_theta",
    "trajectory_spanning_tau",
    "verify_frame_bounds",
    "__version__",
]
