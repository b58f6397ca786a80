"""The "experiment" queried by the closed loop.

A plant exposes prepare / apply / measure plus the ideal tomography
rotations.  Only the simulated implementation ships; the abstract base is
the seam where a real-device client would plug in.
"""

from __future__ import annotations

import enum
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .qubit import (
    ContractError,
    DensityMatrix,
    PlantParams,
    PulseWaveform,
    apply_unitary,
    clip_amplitudes,
    evolve_density,
    pauli_rotation_propagator,
    population,
    TWO_PI,
)

_SQRT2 = math.sqrt(2.0)


class PreparationIndex(enum.IntEnum):
    """The four tomography input states."""

    PSI_1 = 1  # |0>
    PSI_2 = 2  # |-1>
    PSI_3 = 3  # (|0> - i|-1>) / sqrt(2)
    PSI_4 = 4  # (|0> + |-1>) / sqrt(2)

    def state_vector(self) -> np.ndarray:
        if self is PreparationIndex.PSI_1:
            return np.array([1.0, 0.0], dtype=complex)
        if self is PreparationIndex.PSI_2:
            return np.array([0.0, 1.0], dtype=complex)
        if self is PreparationIndex.PSI_3:
            return np.array([1.0 / _SQRT2, -1.0j / _SQRT2], dtype=complex)
        return np.array([1.0 / _SQRT2, 1.0 / _SQRT2], dtype=complex)

    def density_matrix(self) -> DensityMatrix:
        return DensityMatrix.from_state_vector(self.state_vector())


@dataclass(frozen=True)
class SimPlantConfig:
    """True-plant configuration, hidden from the closed loop.

    ``detuning_offset`` (MHz) and ``amplitude_scale`` model miscalibration
    relative to the nominal parameters.  ``repetitions`` is the default shot
    count per population measurement; ``noiseless`` returns exact
    probabilities instead.
    """

    detuning_offset: float = 0.0
    amplitude_scale: float = 1.0
    repetitions: int = 10_000
    noiseless: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.amplitude_scale <= 0.0:
            raise ContractError("amplitude_scale must be positive")
        if not self.noiseless and self.repetitions < 1:
            raise ContractError("repetitions must be >= 1 in noisy mode")


class PlantInterface(ABC):
    """Capability contract of an experiment driven by the closed loop."""

    @property
    @abstractmethod
    def nominal(self) -> PlantParams:
        """Parameters the closed loop believes it is driving."""

    @abstractmethod
    def prepare(self, idx: PreparationIndex) -> None:
        """Set the plant to one of the four calibrated input states."""

    @abstractmethod
    def apply(self, pulse: PulseWaveform) -> None:
        """Play the candidate pulse through the (imperfect) drive chain."""

    @abstractmethod
    def measure_population(self, which: str, repetitions: int | None = None) -> float:
        """Estimate the population of basis state '0' or '-1'."""

    @abstractmethod
    def apply_ideal_rotation(self, axis: str, duration: float) -> None:
        """Calibrated resonant tomography rotation about 'x' or 'y' for ``duration``."""

    @abstractmethod
    def apply_ideal_unitary(self, u: np.ndarray) -> None:
        """Calibrated gate applied as an exact matrix action (e.g. G inverse)."""

    @abstractmethod
    def current_state(self) -> DensityMatrix:
        """Snapshot of the current state, for re-preparation during tomography."""

    @abstractmethod
    def set_state(self, rho: DensityMatrix) -> None:
        """Re-prepare a previously snapshotted state."""


class SimPlant(PlantInterface):
    """Simulated two-level plant with configurable miscalibration and shot noise.

    State preparation and the tomography rotations are ideal; the candidate
    pulse is evolved with the TRUE parameters (nominal + offsets) after
    amplitude scaling and re-clipping.  All randomness comes from a single
    seeded PCG64 generator, so a fixed seed and call sequence reproduce
    bit-identical outputs.
    """

    def __init__(self, nominal: PlantParams, config: SimPlantConfig | None = None):
        self._nominal = nominal
        self.config = config or SimPlantConfig()
        self._true = PlantParams(
            rabi_frequency=nominal.rabi_frequency,
            detuning=nominal.detuning + self.config.detuning_offset,
            duration=nominal.duration,
        )
        self._rng = np.random.default_rng(np.random.PCG64(self.config.seed))
        self._state: DensityMatrix | None = None

    @property
    def nominal(self) -> PlantParams:
        return self._nominal

    @property
    def true_params(self) -> PlantParams:
        return self._true

    def prepare(self, idx: PreparationIndex) -> None:
        self._state = idx.density_matrix()

    def _require_state(self) -> DensityMatrix:
        if self._state is None:
            raise ContractError("plant has no prepared state")
        return self._state

    def apply(self, pulse: PulseWaveform) -> None:
        rho = self._require_state()
        x, y = clip_amplitudes(
            self.config.amplitude_scale * pulse.x,
            self.config.amplitude_scale * pulse.y,
        )
        distorted = PulseWaveform(pulse.duration, x, y)
        self._state = evolve_density(rho, distorted, self._true)

    def apply_ideal_rotation(self, axis: str, duration: float) -> None:
        rho = self._require_state()
        omega = TWO_PI * self._nominal.rabi_frequency
        if axis == "x":
            u = pauli_rotation_propagator(omega, 0.0, 0.0, duration)
        elif axis == "y":
            # the y tomography drive rotates about -y; this sign makes the
            # observed oscillation match the +b sin(2 pi w t) fit model
            u = pauli_rotation_propagator(0.0, -omega, 0.0, duration)
        else:
            raise ContractError(f"unknown rotation axis {axis!r}")
        self._state = apply_unitary(rho, u)

    def apply_ideal_unitary(self, u: np.ndarray) -> None:
        self._state = apply_unitary(self._require_state(), u)

    def measure_population(self, which: str, repetitions: int | None = None) -> float:
        p = population(self._require_state(), which)
        if self.config.noiseless:
            return p
        reps = self.config.repetitions if repetitions is None else repetitions
        if reps < 1:
            raise ContractError("repetitions must be >= 1 in noisy mode")
        return self._rng.binomial(reps, p) / reps

    def current_state(self) -> DensityMatrix:
        return self._require_state()

    def set_state(self, rho: DensityMatrix) -> None:
        self._state = rho


def default_rabi_times(rabi_frequency: float, n_points: int = 41) -> np.ndarray:
    """Tomography scan grid: ``n_points`` durations spanning [0, 2 / Omega]."""
    return np.linspace(0.0, 2.0 / rabi_frequency, n_points)


def run_rabi_scan(
    plant: PlantInterface,
    axis: str,
    times: np.ndarray,
    repetitions: int | None = None,
) -> np.ndarray:
    """Sample P(|0>, t) after rotating the current state about ``axis``.

    For each duration the stored state is re-prepared, the resonant constant
    tomography pulse is applied, and the |0> population measured.
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise ContractError("times must be non-empty")
    if times.size > 1 and not np.all(np.diff(times) > 0.0):
        raise ContractError("times must be strictly increasing")
    initial = plant.current_state()
    out = np.empty(times.size)
    for i, t in enumerate(times):
        plant.set_state(initial)
        if t > 0.0:
            plant.apply_ideal_rotation(axis, float(t))
        out[i] = plant.measure_population("0", repetitions)
    plant.set_state(initial)
    return out
