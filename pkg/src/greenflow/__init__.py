"""Energy-minimal scheduling and routing of deadline-constrained flows."""
from .model import (
    POOLED, VIRTUAL, ConfigError, DomainError, Flow, FlowPlan, Link, Network, Piece,
    PowerParams, Schedule, dynamic_energy, edf_order, is_feasible, power, schedule_energy,
)

__version__ = "0.1.0"
