"""Metropolized discretizations of overdamped Langevin dynamics."""

from .accept import AcceptanceRule, Scheme, SchemeBiasProfile, acceptance_probability, bias_profile, decide
from .chain import ChainState, RecordPolicy, Trajectory, coarsen_increments, run_ensemble, run_trajectory, step
from .model import DiffusionCoeff1D, Model1D, PotentialKind, Space
from .proposal import MidpointNoConvergence, ModifiedDegenerateScale, Proposal, ProposalKind, propose
from .rng import RngStream

__version__ = "0.1.0"
