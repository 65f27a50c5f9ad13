"""Stochastic transient simulator and Monte Carlo harness for a Josephson
digital phase detector (JDPD) driven by an SFQ flux bias driver."""

from jdpd_lab.circuit import (
    CircuitState,
    FluxBias,
    JdpdParams,
    JunctionParams,
    PhysicalConstants,
    combine_flux,
    crossover_temperature,
    equations_of_motion,
    node_phase,
    plasma_frequency,
    reduced_potential,
    split_flux,
    stewart_mccumber,
    thermal_noise_sigma,
)
from jdpd_lab.drives import FluxSwitchSpec, NoiseChannel, StimulusSpec
from jdpd_lab.engine import Outcome, SimulationConfig, Trajectory, monte_carlo, simulate

__version__ = "0.1.0"

__all__ = [
    "CircuitState",
    "FluxBias",
    "FluxSwitchSpec",
    "JdpdParams",
    "JunctionParams",
    "NoiseChannel",
    "Outcome",
    "PhysicalConstants",
    "SimulationConfig",
    "StimulusSpec",
    "Trajectory",
    "combine_flux",
    "crossover_temperature",
    "equations_of_motion",
    "monte_carlo",
    "node_phase",
    "plasma_frequency",
    "reduced_potential",
    "simulate",
    "split_flux",
    "stewart_mccumber",
    "thermal_noise_sigma",
]
