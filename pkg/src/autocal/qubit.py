"""Exact 2x2 linear algebra and time evolution of the driven two-level system.

Conventions
-----------
Basis index 0 is |m_s = 0>, index 1 is |m_s = -1>.  Spin operators are
S = sigma / 2.  Frequencies are in MHz, times in microseconds, so a constant
drive of amplitude 1 at Rabi frequency ``omega_rabi`` performs a population
inversion in ``t_pi = 1 / (2 * omega_rabi)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)

KET_ZERO = np.array([1.0, 0.0], dtype=complex)
KET_MINUS_ONE = np.array([0.0, 1.0], dtype=complex)

#: The target gate of the gate-calibration experiments: a Hadamard-like
#: pi/2 rotation about x, G = (1/sqrt(2)) [[1, -i], [-i, 1]].
GATE_G = np.array([[1.0, -1.0j], [-1.0j, 1.0]], dtype=complex) / math.sqrt(2.0)

TWO_PI = 2.0 * math.pi


class ContractError(ValueError):
    """A caller violated a documented precondition."""


def _require_finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ContractError(f"non-finite argument: {v!r}")


def pauli_rotation_propagator(hx: float, hy: float, hz: float, dt: float) -> np.ndarray:
    """Closed-form U = exp(-i (hx Sx + hy Sy + hz Sz) dt), exactly unitary.

    The coefficients are angular frequencies in rad/us and ``dt`` is in us.
    The Bloch rotation angle is |h| dt; the spinor half-angle formula gives

        U = cos(theta/2) I - i sin(theta/2) (n . sigma)

    with theta = |h| dt and n = h / |h|.
    """
    _require_finite(hx, hy, hz, dt)
    if dt <= 0.0:
        raise ContractError("dt must be positive")
    norm = math.sqrt(hx * hx + hy * hy + hz * hz)
    half = 0.5 * norm * dt
    # sin(half)/norm written via sinc so the zero-generator limit is exact
    s = 0.5 * dt * np.sinc(half / math.pi)
    c = math.cos(half)
    return np.array(
        [
            [c - 1j * s * hz, -1j * s * hx - s * hy],
            [-1j * s * hx + s * hy, c + 1j * s * hz],
        ],
        dtype=complex,
    )


def _propagator_stack(hx: np.ndarray, hy: np.ndarray, hz: np.ndarray, dt: float) -> np.ndarray:
    """Vectorised ``pauli_rotation_propagator`` over sample arrays; shape (n, 2, 2)."""
    norm = np.sqrt(hx * hx + hy * hy + hz * hz)
    half = 0.5 * norm * dt
    s = 0.5 * dt * np.sinc(half / math.pi)
    c = np.cos(half)
    u = np.empty((hx.size, 2, 2), dtype=complex)
    u[:, 0, 0] = c - 1j * s * hz
    u[:, 0, 1] = -1j * s * hx - s * hy
    u[:, 1, 0] = -1j * s * hx + s * hy
    u[:, 1, 1] = c + 1j * s * hz
    return u


def _ordered_product(mats: np.ndarray) -> np.ndarray:
    """Product mats[n-1] @ ... @ mats[1] @ mats[0] by pairwise reduction."""
    while mats.shape[0] > 1:
        n = mats.shape[0]
        if n % 2:
            head, mats = mats[:1], mats[1:]
            mats = np.concatenate([head, np.matmul(mats[1::2], mats[0::2])])
        else:
            mats = np.matmul(mats[1::2], mats[0::2])
    return mats[0]


@dataclass(frozen=True)
class PlantParams:
    """Nominal drive parameters: Rabi frequency (MHz), detuning (MHz), duration (us)."""

    rabi_frequency: float
    detuning: float
    duration: float

    def __post_init__(self) -> None:
        _require_finite(self.rabi_frequency, self.detuning, self.duration)
        if not 0.0 <= self.rabi_frequency <= 10.0:
            raise ContractError("rabi_frequency must lie in [0, 10] MHz")
        if self.duration <= 0.0:
            raise ContractError("duration must be positive")

    @property
    def t_pi(self) -> float:
        """Duration of a unit-amplitude resonant pi-pulse, 1 / (2 Omega)."""
        return 1.0 / (2.0 * self.rabi_frequency)


@dataclass(frozen=True)
class PulseWaveform:
    """Sampled control channels X(t), Y(t), piecewise constant over [0, T).

    Sample i holds on [i dt, (i+1) dt) with dt = duration / n_t; the stored
    value is the channel evaluated at the left edge t = i dt.  The hardware
    constraint |X + Y| <= 1 must hold at every sample.
    """

    duration: float
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if self.duration <= 0.0 or not math.isfinite(self.duration):
            raise ContractError("duration must be positive and finite")
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise ContractError("channels must be equal-length 1-d arrays, n_t >= 2")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ContractError("non-finite channel samples")
        if np.max(np.abs(x + y)) > 1.0 + 1e-12:
            raise ContractError("|X + Y| <= 1 violated")

    @property
    def n_t(self) -> int:
        return self.x.size

    @property
    def dt(self) -> float:
        return self.duration / self.n_t

    @property
    def times(self) -> np.ndarray:
        """Left-edge sample times."""
        return np.arange(self.n_t) * self.dt

    @staticmethod
    def constant(x: float, y: float, duration: float, n_t: int = 1000) -> "PulseWaveform":
        return PulseWaveform(duration, np.full(n_t, float(x)), np.full(n_t, float(y)))

    @staticmethod
    def zero(duration: float, n_t: int = 1000) -> "PulseWaveform":
        return PulseWaveform.constant(0.0, 0.0, duration, n_t)

    @staticmethod
    def clipped(x: np.ndarray, y: np.ndarray, duration: float) -> "PulseWaveform":
        """Build a waveform, rescaling both channels at samples where |X+Y| > 1."""
        x = np.array(x, dtype=float)
        y = np.array(y, dtype=float)
        s = np.abs(x + y)
        mask = s > 1.0
        if np.any(mask):
            x[mask] /= s[mask]
            y[mask] /= s[mask]
        return PulseWaveform(duration, x, y)


def clip_amplitudes(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rescale both channels at samples violating |X + Y| <= 1."""
    x = np.array(x, dtype=float)
    y = np.array(y, dtype=float)
    s = np.abs(x + y)
    mask = s > 1.0
    if np.any(mask):
        x[mask] /= s[mask]
        y[mask] /= s[mask]
    return x, y


@dataclass(frozen=True)
class DensityMatrix:
    """2x2 Hermitian, unit-trace, positive-semidefinite qubit state."""

    matrix: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", m)
        if m.shape != (2, 2) or not np.all(np.isfinite(m.view(float))):
            raise ContractError("density matrix must be a finite 2x2 array")
        if abs(m[0, 0].real + m[1, 1].real - 1.0) > 1e-10 or abs(m[0, 0].imag) > 1e-10 or abs(m[1, 1].imag) > 1e-10:
            raise ContractError("trace must equal 1")
        if abs(m[0, 1] - np.conj(m[1, 0])) > 1e-10:
            raise ContractError("matrix must be Hermitian")
        # closed-form eigenvalues of a Hermitian 2x2
        mean = 0.5 * (m[0, 0].real + m[1, 1].real)
        radius = math.sqrt(
            0.25 * (m[0, 0].real - m[1, 1].real) ** 2 + abs(m[0, 1]) ** 2
        )
        if mean - radius < -1e-9:
            raise ContractError("state is not positive semidefinite")

    # Entry names follow the tomography fit parameterisation:
    # d and a are the |0> and |-1> populations, b + ic is <0| rho |-1>.
    @property
    def d(self) -> float:
        return self.matrix[0, 0].real

    @property
    def a(self) -> float:
        return self.matrix[1, 1].real

    @property
    def b(self) -> float:
        return self.matrix[0, 1].real

    @property
    def c(self) -> float:
        return self.matrix[0, 1].imag

    @staticmethod
    def from_state_vector(psi: np.ndarray) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return DensityMatrix(np.outer(psi, psi.conj()))

    @staticmethod
    def pure_zero() -> "DensityMatrix":
        return DensityMatrix.from_state_vector(KET_ZERO)

    @staticmethod
    def pure_minus_one() -> "DensityMatrix":
        return DensityMatrix.from_state_vector(KET_MINUS_ONE)

    @staticmethod
    def from_entries(a: float, b: float, c: float, d: float) -> "DensityMatrix":
        return DensityMatrix(
            np.array([[d, b + 1j * c], [b - 1j * c, a]], dtype=complex)
        )

    def trace_distance(self, other: "DensityMatrix") -> float:
        diff = self.matrix - other.matrix
        # eigenvalues of a traceless Hermitian 2x2 are +/- radius
        radius = math.sqrt(
            0.25 * (diff[0, 0].real - diff[1, 1].real) ** 2 + abs(diff[0, 1]) ** 2
        )
        return radius * 2.0 * 0.5  # sum of |eigenvalues| / 2


def population(rho: DensityMatrix, which: str) -> float:
    """Population of the selected basis state ('0' or '-1'), clamped to [0, 1]."""
    if which == "0":
        p = rho.d
    elif which == "-1":
        p = rho.a
    else:
        raise ContractError(f"unknown basis-state selector {which!r}")
    return min(1.0, max(0.0, p))


def apply_unitary(rho: DensityMatrix, u: np.ndarray) -> DensityMatrix:
    return DensityMatrix(u @ rho.matrix @ u.conj().T)


def evolve_density(rho0: DensityMatrix, pulse: PulseWaveform, params: PlantParams) -> DensityMatrix:
    """Evolve under H(t) = 2 pi [Delta Sz + Omega (X(t) Sx + Y(t) Sy)].

    Piecewise-constant propagators per waveform sample, multiplied in time
    order; exactly unitary by construction.
    """
    if abs(pulse.duration - params.duration) > 1e-9 * max(1.0, params.duration):
        raise ContractError("pulse duration does not match plant duration")
    omega = TWO_PI * params.rabi_frequency
    hx = omega * pulse.x
    hy = omega * pulse.y
    hz = np.full(pulse.n_t, TWO_PI * params.detuning)
    u = total_propagator_arrays(hx, hy, hz, pulse.dt)
    return apply_unitary(rho0, u)


def total_propagator_arrays(hx: np.ndarray, hy: np.ndarray, hz: np.ndarray, dt: float) -> np.ndarray:
    """Time-ordered product of per-sample propagators."""
    return _ordered_product(_propagator_stack(hx, hy, hz, dt))


def total_propagator(pulse: PulseWaveform, params: PlantParams) -> np.ndarray:
    """Unitary implemented by ``pulse`` under the plant parameters."""
    omega = TWO_PI * params.rabi_frequency
    return total_propagator_arrays(
        omega * pulse.x,
        omega * pulse.y,
        np.full(pulse.n_t, TWO_PI * params.detuning),
        pulse.dt,
    )


def generalized_rabi_population(
    rabi_frequency: float, detuning: float, t: np.ndarray | float
) -> np.ndarray | float:
    """Analytic |-1> population under constant unit-amplitude x drive from |0>.

    P(t) = Omega^2 / (Omega^2 + Delta^2) * sin^2(pi sqrt(Omega^2 + Delta^2) t)
    """
    gen = rabi_frequency**2 + detuning**2
    if gen == 0.0:
        return np.zeros_like(np.asarray(t, dtype=float)) if np.ndim(t) else 0.0
    return (rabi_frequency**2 / gen) * np.sin(math.pi * math.sqrt(gen) * np.asarray(t)) ** 2
