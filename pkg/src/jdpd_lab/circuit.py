"""Circuit parameterization and equations of motion for the JDPD.

The detector is two RF-SQUIDs sharing a central inductor ``L``.  Branch ``i``
is a loop inductor ``L_i`` in series with a phase source ``phi_i`` and an
RCSJ junction ``J_i``; both branches meet the central inductor at the input
node ``A``.  The detector coordinate is the node phase ``phi_A``, which equals
``2 pi L I_L / Phi0``.

All quantities are SI.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

# Winding signs of the two phase sources.  With (+1, -1) the zero-loop-inductance
# reduction gives U = E_L phi^2/2 - 2 E_J cos(phi_+) cos(phi - phi_-), which is
# harmonic at phi_+ = pi/2 and a double well at phi_+ = pi.
WINDING_SIGNS = (1.0, -1.0)


@dataclass(frozen=True)
class PhysicalConstants:
    flux_quantum: float = 2.067833848e-15
    boltzmann: float = 1.380649e-23
    hbar: float = 1.054571817e-34

    @property
    def reduced_flux_quantum(self) -> float:
        """Phi0 / 2pi, the factor converting phase to flux."""
        return self.flux_quantum / (2.0 * math.pi)


@dataclass(frozen=True)
class JunctionParams:
    """RCSJ junction described by fabrication densities and its critical current.

    Defaults: 6 uA junction, 310 Ohm intrinsic resistance, 50 fF/um^2 and
    10 uA/um^2 process densities.
    """

    critical_current: float = 6e-6
    shunt_resistance: float = 310.0
    capacitance_per_area: float = 50e-15 / 1e-12
    critical_current_density: float = 10e-6 / 1e-12

    def __post_init__(self):
        for name in ("critical_current", "shunt_resistance",
                     "capacitance_per_area", "critical_current_density"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"JunctionParams.{name} must be positive and finite, got {value!r}")

    @property
    def area(self) -> float:
        return self.critical_current / self.critical_current_density

    @property
    def capacitance(self) -> float:
        return self.capacitance_per_area * self.area

    @property
    def characteristic_voltage(self) -> float:
        return self.critical_current * self.shunt_resistance


@dataclass(frozen=True)
class JdpdParams:
    """Detector parameters.  ``junction_2`` defaults to ``junction``."""

    central_inductance: float = 200e-12
    loop_inductance_1: float = 20e-12
    loop_inductance_2: float = 20e-12
    junction: JunctionParams = field(default_factory=JunctionParams)
    junction_2: JunctionParams | None = None
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)

    def __post_init__(self):
        for name in ("central_inductance", "loop_inductance_1", "loop_inductance_2"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"JdpdParams.{name} must be positive and finite, got {value!r}")
        if self.beta_l <= 1.0:
            warnings.warn(f"beta_L = {self.beta_l:.3g} <= 1: no double-well regime", stacklevel=2)
        check_winding_signs(self)

    @property
    def junctions(self) -> tuple[JunctionParams, JunctionParams]:
        return self.junction, self.junction if self.junction_2 is None else self.junction_2

    @property
    def beta_l(self) -> float:
        """Screening parameter 2 pi L (I_c1 + I_c2) / Phi0."""
        j1, j2 = self.junctions
        return (2.0 * math.pi * self.central_inductance
                * (j1.critical_current + j2.critical_current) / self.constants.flux_quantum)

    @property
    def inductive_energy(self) -> float:
        return self.constants.reduced_flux_quantum ** 2 / self.central_inductance

    @property
    def josephson_energy(self) -> float:
        """Mean single-junction Josephson energy Phi0 I_c / 2pi."""
        j1, j2 = self.junctions
        return self.constants.reduced_flux_quantum * 0.5 * (j1.critical_current + j2.critical_current)


@dataclass(frozen=True)
class FluxBias:
    phi_plus: float
    phi_minus: float = 0.0

    def split(self) -> tuple[float, float]:
        return split_flux(self)


@dataclass
class CircuitState:
    delta_1: float = 0.0
    delta_2: float = 0.0
    ddelta_1: float = 0.0
    ddelta_2: float = 0.0
    noise_state_1: float = 0.0
    noise_state_2: float = 0.0

    def mechanical(self) -> np.ndarray:
        """Phases and phase velocities as the integrator vector [d1, d2, v1, v2]."""
        return np.array([self.delta_1, self.delta_2, self.ddelta_1, self.ddelta_2])

    @classmethod
    def from_mechanical(cls, y, noise=(0.0, 0.0)) -> "CircuitState":
        return cls(float(y[0]), float(y[1]), float(y[2]), float(y[3]), float(noise[0]), float(noise[1]))

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in vars(self).values())


def stewart_mccumber(j: JunctionParams, c: PhysicalConstants = PhysicalConstants()) -> float:
    return (2.0 * math.pi * j.characteristic_voltage ** 2 * j.capacitance_per_area
            / (c.flux_quantum * j.critical_current_density))


def plasma_frequency(j: JunctionParams, c: PhysicalConstants = PhysicalConstants()) -> float:
    """Junction plasma frequency in rad/s; depends only on the process densities."""
    return math.sqrt(2.0 * math.pi * j.critical_current_density / (c.flux_quantum * j.capacitance_per_area))


def crossover_temperature(omega_p: float, c: PhysicalConstants = PhysicalConstants()) -> float:
    """Quantum/classical crossover temperature hbar omega_p / (2 pi k_B)."""
    if not omega_p > 0:
        raise ValueError(f"omega_p must be positive, got {omega_p!r}")
    return c.hbar * omega_p / (2.0 * math.pi * c.boltzmann)


def thermal_noise_sigma(j: JunctionParams, T: float, dt: float,
                        c: PhysicalConstants = PhysicalConstants()) -> float:
    """Per-step standard deviation of the Johnson current noise of the junction resistor."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    if T < 0:
        raise ValueError(f"temperature must be non-negative, got {T!r}")
    return math.sqrt(2.0 * c.boltzmann * T / (j.shunt_resistance * dt))


def split_flux(bias: FluxBias) -> tuple[float, float]:
    return bias.phi_plus + bias.phi_minus, bias.phi_plus - bias.phi_minus


def combine_flux(phi_1: float, phi_2: float) -> FluxBias:
    return FluxBias(0.5 * (phi_1 + phi_2), 0.5 * (phi_1 - phi_2))


def _branch_phases(delta_1, delta_2, phi_1, phi_2):
    s1, s2 = WINDING_SIGNS
    return delta_1 + s1 * phi_1, delta_2 + s2 * phi_2


def _solve_node(theta_1, theta_2, i_in, p: JdpdParams):
    g = 1.0 / p.central_inductance + 1.0 / p.loop_inductance_1 + 1.0 / p.loop_inductance_2
    return (i_in / p.constants.reduced_flux_quantum
            + theta_1 / p.loop_inductance_1 + theta_2 / p.loop_inductance_2) / g


def node_phase(state: CircuitState, bias: FluxBias, i_in: float, p: JdpdParams) -> float:
    """Phase of the input node from current conservation (algebraic, no node capacitance)."""
    phi_1, phi_2 = split_flux(bias)
    theta_1, theta_2 = _branch_phases(state.delta_1, state.delta_2, phi_1, phi_2)
    return _solve_node(theta_1, theta_2, i_in, p)


def branch_currents(y, phi_1, phi_2, i_in, p: JdpdParams):
    """Return (phi_A, I_1, I_2) for a mechanical state vector ``y`` (arrays broadcast)."""
    theta_1, theta_2 = _branch_phases(y[0], y[1], phi_1, phi_2)
    phi_a = _solve_node(theta_1, theta_2, i_in, p)
    k = p.constants.reduced_flux_quantum
    return phi_a, k * (phi_a - theta_1) / p.loop_inductance_1, k * (phi_a - theta_2) / p.loop_inductance_2


def mechanical_rhs(y, phi_1, phi_2, i_in, i_noise_1, i_noise_2, p: JdpdParams) -> np.ndarray:
    """d/dt of [d1, d2, v1, v2]; works elementwise on array-valued states."""
    k = p.constants.reduced_flux_quantum
    j1, j2 = p.junctions
    _, i1, i2 = branch_currents(y, phi_1, phi_2, i_in, p)
    a1 = (i1 - k * y[2] / j1.shunt_resistance - j1.critical_current * np.sin(y[0]) - i_noise_1) / (j1.capacitance * k)
    a2 = (i2 - k * y[3] / j2.shunt_resistance - j2.critical_current * np.sin(y[1]) - i_noise_2) / (j2.capacitance * k)
    return np.array([y[2], y[3], a1, a2])


def equations_of_motion(state: CircuitState, bias: FluxBias, i_in: float,
                        i_noise_1: float, i_noise_2: float, p: JdpdParams) -> np.ndarray:
    """Time derivative [d1', d2', d1'', d2''] of the RCSJ phases under the given drives."""
    phi_1, phi_2 = split_flux(bias)
    return mechanical_rhs(state.mechanical(), phi_1, phi_2, i_in, i_noise_1, i_noise_2, p)


def circuit_energy(y, bias: FluxBias, p: JdpdParams, i_in: float = 0.0) -> float:
    """Stored energy (capacitive + Josephson + inductive) at fixed bias and zero input."""
    k = p.constants.reduced_flux_quantum
    phi_1, phi_2 = split_flux(bias)
    theta_1, theta_2 = _branch_phases(y[0], y[1], phi_1, phi_2)
    phi_a = _solve_node(theta_1, theta_2, i_in, p)
    energy = k ** 2 * (0.5 * phi_a ** 2 / p.central_inductance
                       + 0.5 * (phi_a - theta_1) ** 2 / p.loop_inductance_1
                       + 0.5 * (phi_a - theta_2) ** 2 / p.loop_inductance_2)
    for delta, v, j in ((y[0], y[2], p.junctions[0]), (y[1], y[3], p.junctions[1])):
        energy += 0.5 * j.capacitance * (k * v) ** 2 + k * j.critical_current * (1.0 - np.cos(delta))
    return energy


def reduced_potential(phi, bias: FluxBias, p: JdpdParams):
    """One-coordinate potential of the detector in the L_1 = L_2 -> 0 limit (verification oracle)."""
    return (0.5 * p.inductive_energy * np.square(phi)
            - 2.0 * p.josephson_energy * math.cos(bias.phi_plus) * np.cos(phi - bias.phi_minus))


def reduced_potential_gradient(phi, bias: FluxBias, p: JdpdParams):
    return (p.inductive_energy * phi
            + 2.0 * p.josephson_energy * math.cos(bias.phi_plus) * np.sin(phi - bias.phi_minus))


def reduced_harmonic_frequency(p: JdpdParams) -> float:
    """Small-oscillation angular frequency of the reduced model at phi_+ = pi/2.

    The detector coordinate carries both junction capacitances in parallel.
    """
    k = p.constants.reduced_flux_quantum
    c_total = sum(j.capacitance for j in p.junctions)
    return math.sqrt(p.inductive_energy / (k ** 2 * c_total))


def check_winding_signs(p: JdpdParams) -> None:
    """Potential-shape self-test of the winding signs in the zero-loop-inductance limit.

    With L_i -> 0 each junction phase is pinned to phi - s_i phi_i, so the
    Josephson energy is a function of phi alone.  At phi_+ = pi/2 it must vanish
    (pure harmonic); at phi_+ = pi it must produce a maximum at phi = 0.
    """
    phi = np.linspace(-math.pi, math.pi, 65)
    j1, j2 = p.junctions
    k = p.constants.reduced_flux_quantum

    def josephson(bias):
        phi_1, phi_2 = split_flux(bias)
        d1 = phi - WINDING_SIGNS[0] * phi_1
        d2 = phi - WINDING_SIGNS[1] * phi_2
        return -k * (j1.critical_current * np.cos(d1) + j2.critical_current * np.cos(d2))

    harmonic = josephson(FluxBias(math.pi / 2, 0.0))
    scale = k * (j1.critical_current + j2.critical_current)
    if j1.critical_current == j2.critical_current and np.max(np.abs(harmonic)) > 1e-12 * scale:
        raise RuntimeError("winding signs do not yield a harmonic potential at phi_+ = pi/2")
    total = 0.5 * p.inductive_energy * phi ** 2 + josephson(FluxBias(math.pi, 0.0))
    if p.beta_l > 1.0 and not total[32] > total[31]:
        raise RuntimeError("winding signs do not yield a double well at phi_+ = pi")


def double_well_minimum(p: JdpdParams) -> float:
    """Positive minimum phi* of the reduced double well at (phi_+, phi_-) = (pi, 0)."""
    from scipy.optimize import brentq

    bias = FluxBias(math.pi, 0.0)
    if p.beta_l <= 1.0:
        raise ValueError("no double well for beta_L <= 1")
    return brentq(reduced_potential_gradient, 1e-9, math.pi, args=(bias, p), xtol=1e-15, rtol=1e-15)
