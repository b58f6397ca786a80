"""Closed-loop pulse optimization in a dressed randomized trigonometric basis.

Each super-iteration draws fresh randomized frequencies, optimizes the new
term's coefficients with a Nelder-Mead simplex over measured figures of
merit, then freezes them.  The assembled update is windowed to vanish at
t = 0 and t = T, and the running best never decreases.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .plant import PlantInterface
from .qubit import (
    ContractError,
    DensityMatrix,
    GATE_G,
    PlantParams,
    PulseWaveform,
    clip_amplitudes,
    total_propagator,
)
from .tomography import FidelityEstimate, FitFailure, gate_fom, state_transfer_fom
from .plant import PreparationIndex

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DcrabConfig:
    n_components: int = 1
    superiterations: int = 6
    max_evals_per_superiteration: int = 40
    target_fidelity: float = 0.99
    simplex_tol: float = 0.01
    coefficient_scale: float = 1.0
    seed: int = 0
    n_t: int = 1000

    def __post_init__(self) -> None:
        if self.n_components < 1 or self.superiterations < 1:
            raise ContractError("n_components and superiterations must be >= 1")
        if self.max_evals_per_superiteration < 4 * self.n_components + 1:
            raise ContractError("evaluation budget must cover the initial simplex")
        if not 0.0 < self.target_fidelity <= 1.0:
            raise ContractError("target_fidelity must lie in (0, 1]")
        if self.n_t < 2:
            raise ContractError("n_t must be >= 2")


@dataclass(frozen=True)
class BasisTerm:
    """Randomized frequencies and coefficients of one super-iteration's term.

    Frequencies obey omega_n = 2 pi (n + r) / T with |r| < 0.5, independently
    per channel and per component.
    """

    freqs_x: np.ndarray
    freqs_y: np.ndarray
    coeffs: np.ndarray  # layout: a_x[0..N), b_x[0..N), a_y[0..N), b_y[0..N)

    @property
    def n_components(self) -> int:
        return self.freqs_x.size

    def with_coeffs(self, coeffs: np.ndarray) -> "BasisTerm":
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (4 * self.n_components,):
            raise ContractError("coefficient vector must have length 4N")
        return replace(self, coeffs=coeffs.copy())

    def channel_profiles(self, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Unwindowed sum over components for the X and Y channels."""
        n = self.n_components
        ax, bx, ay, by = (self.coeffs[i * n : (i + 1) * n] for i in range(4))
        phase_x = np.outer(self.freqs_x, times)
        phase_y = np.outer(self.freqs_y, times)
        gx = ax @ np.sin(phase_x) + bx @ np.cos(phase_x)
        gy = ay @ np.sin(phase_y) + by @ np.cos(phase_y)
        return gx, gy


def draw_basis(n_components: int, duration: float, rng: np.random.Generator) -> BasisTerm:
    """Fresh randomized-frequency term with zero coefficients."""
    if duration <= 0.0:
        raise ContractError("duration must be positive")

    def freqs() -> np.ndarray:
        r = rng.uniform(-0.5, 0.5, size=n_components)
        while np.any(np.abs(r) >= 0.5):  # exclusive band edges
            bad = np.abs(r) >= 0.5
            r[bad] = rng.uniform(-0.5, 0.5, size=int(bad.sum()))
        return 2.0 * math.pi * (np.arange(n_components) + r) / duration

    return BasisTerm(freqs_x=freqs(), freqs_y=freqs(), coeffs=np.zeros(4 * n_components))


@dataclass
class DcrabLedger:
    """Frozen super-iteration terms plus the active one.

    The guess pulse contributes a constant unit amplitude envelope assigned
    to the X channel; the multiplicative update g is windowed by
    w(t) = sin(pi t / T) so it vanishes identically at t = 0 and t = T.
    """

    duration: float
    frozen: list[BasisTerm] = field(default_factory=list)
    active: BasisTerm | None = None

    def window(self, times: np.ndarray) -> np.ndarray:
        return np.sin(math.pi * times / self.duration)

    def update_profiles(
        self, times: np.ndarray, active_coeffs: np.ndarray | None = None
    ) -> tuple[np.ndarray, np.ndarray]:
        """Windowed update g per channel, frozen terms plus the active term."""
        gx = np.zeros_like(times)
        gy = np.zeros_like(times)
        for term in self.frozen:
            tx, ty = term.channel_profiles(times)
            gx += tx
            gy += ty
        if self.active is not None:
            term = self.active
            if active_coeffs is not None:
                term = term.with_coeffs(active_coeffs)
            tx, ty = term.channel_profiles(times)
            gx += tx
            gy += ty
        w = self.window(times)
        return w * gx, w * gy


def assemble_pulse(
    ledger: DcrabLedger,
    active_coeffs: np.ndarray,
    params: PlantParams,
    n_t: int = 1000,
) -> PulseWaveform:
    """Waveform for the given active coefficients, amplitude constraint enforced.

    Samples where the raw |X + Y| exceeds 1 are rescaled (both channels) by
    1 / |X + Y|.
    """
    if ledger.active is None:
        raise ContractError("ledger has no active term")
    times = np.arange(n_t) * (params.duration / n_t)
    gx, gy = ledger.update_profiles(times, np.asarray(active_coeffs, dtype=float))
    # guess envelope is identically 1, so the channels are the windowed sums
    x, y = clip_amplitudes(gx, gy)
    return PulseWaveform(params.duration, x, y)


# ---------------------------------------------------------------------------
# Nelder-Mead simplex search (maximizing)


@dataclass
class NelderMeadResult:
    best_x: np.ndarray
    best_value: float
    trace: list[float]
    n_evals: int


def nelder_mead(
    objective,
    x0: np.ndarray,
    scale: float,
    max_evals: int,
    tol: float,
    target: float | None = None,
) -> NelderMeadResult:
    """Maximize ``objective`` with a standard simplex search.

    The initial simplex is ``x0`` plus one vertex offset by ``scale`` along
    each axis.  Coefficients: reflection 1, expansion 2, contraction 0.5,
    shrink 0.5.  Terminates when the simplex diameter drops below ``tol``,
    the evaluation budget is spent, or the best value reaches ``target``.
    An objective returning NaN scores 0 and is logged.
    """
    x0 = np.asarray(x0, dtype=float)
    dim = x0.size
    if max_evals < dim + 1:
        raise ContractError("max_evals must cover the initial simplex")

    trace: list[float] = []

    def f(x: np.ndarray) -> float:
        value = float(objective(x))
        if math.isnan(value):
            log.warning("objective returned NaN; scoring 0")
            value = 0.0
        trace.append(value)
        return value

    vertices = [x0.copy()]
    for i in range(dim):
        v = x0.copy()
        v[i] += scale
        vertices.append(v)
    values = []
    done = False
    for v in vertices:
        values.append(f(v))
        if target is not None and values[-1] >= target:
            done = True
            break
    vertices = np.array(vertices[: len(values)])
    values = np.array(values)

    def result() -> NelderMeadResult:
        i = int(np.argmax(values))
        return NelderMeadResult(vertices[i].copy(), float(values[i]), trace, len(trace))

    if done or len(values) < dim + 1:
        return result()

    while len(trace) < max_evals:
        order = np.argsort(-values)  # descending: best first
        vertices = vertices[order]
        values = values[order]
        if np.max(np.abs(vertices[1:] - vertices[0])) < tol:
            break
        centroid = vertices[:-1].mean(axis=0)
        worst = values[-1]

        def try_point(x: np.ndarray) -> float | None:
            if len(trace) >= max_evals:
                return None
            return f(x)

        reflected = centroid + (centroid - vertices[-1])
        fr = try_point(reflected)
        if fr is None:
            break
        if target is not None and fr >= target:
            vertices[-1], values[-1] = reflected, fr
            break
        if fr > values[0]:
            expanded = centroid + 2.0 * (centroid - vertices[-1])
            fe = try_point(expanded)
            if fe is None:
                vertices[-1], values[-1] = reflected, fr
                break
            if target is not None and fe >= target:
                vertices[-1], values[-1] = expanded, fe
                break
            if fe > fr:
                vertices[-1], values[-1] = expanded, fe
            else:
                vertices[-1], values[-1] = reflected, fr
            continue
        if fr > values[-2]:
            vertices[-1], values[-1] = reflected, fr
            continue
        outside = fr > worst
        if outside:
            contracted = centroid + 0.5 * (reflected - centroid)
        else:
            contracted = centroid + 0.5 * (vertices[-1] - centroid)
        fc = try_point(contracted)
        if fc is None:
            break
        if target is not None and fc >= target:
            vertices[-1], values[-1] = contracted, fc
            break
        # inside contraction must improve strictly on the worst vertex,
        # otherwise the simplex shrinks; prevents stalling on flat landscapes
        if (outside and fc >= fr) or (not outside and fc > worst):
            vertices[-1], values[-1] = contracted, fc
            continue
        # shrink toward the best vertex
        stop = False
        for i in range(1, len(vertices)):
            vertices[i] = vertices[0] + 0.5 * (vertices[i] - vertices[0])
            fi = try_point(vertices[i])
            if fi is None:
                stop = True
                break
            values[i] = fi
            if target is not None and fi >= target:
                stop = True
                break
        if stop:
            break
    return result()


# ---------------------------------------------------------------------------
# Figures of merit and the closed loop


def make_fom(kind: str, ideal_gate: np.ndarray | None = None, repetitions: int | None = None):
    """Figure-of-merit callable (plant, pulse) -> FidelityEstimate."""
    if kind == "state-transfer":
        return lambda plant, pulse: state_transfer_fom(plant, pulse, repetitions)
    if kind == "gate":
        gate = GATE_G if ideal_gate is None else ideal_gate
        return lambda plant, pulse: gate_fom(plant, pulse, gate, repetitions)
    raise ContractError(f"unknown figure-of-merit kind {kind!r}")


@dataclass
class EvaluationRecord:
    index: int
    superiteration: int
    coefficients: np.ndarray
    value: float
    sigma: float
    running_best: float


@dataclass
class OptimizationResult:
    best_pulse: PulseWaveform
    best_fidelity: FidelityEstimate
    records: list[EvaluationRecord]
    ledger: DcrabLedger
    loop_kind: str = "closed-loop"
    data_kind: str = "experimental-sim"

    @property
    def fom_trace(self) -> np.ndarray:
        """Raw per-evaluation measured figure of merit (the 'red' trace)."""
        return np.array([r.value for r in self.records])

    @property
    def running_best_trace(self) -> np.ndarray:
        """Non-decreasing best-so-far trace (the 'blue' trace)."""
        return np.array([r.running_best for r in self.records])

    @property
    def n_evaluations(self) -> int:
        return len(self.records)


def run_dcrab(
    plant: PlantInterface,
    fom,
    config: DcrabConfig,
) -> OptimizationResult:
    """Run the full closed loop against ``plant``.

    ``fom`` is either a selector string ('state-transfer' or 'gate') or a
    callable (plant, pulse) -> FidelityEstimate.  Each super-iteration
    starts from zero active coefficients, so its first evaluation reproduces
    the previous best pulse exactly; completed terms are frozen verbatim.
    A failed evaluation scores 0 and is logged, never aborting the loop.
    """
    if isinstance(fom, str):
        fom = make_fom(fom)
    rng = np.random.default_rng(config.seed)
    params = plant.nominal
    ledger = DcrabLedger(duration=params.duration)

    records: list[EvaluationRecord] = []
    best_value = -math.inf
    best_estimate: FidelityEstimate | None = None
    best_pulse: PulseWaveform | None = None
    superiteration = 0

    def objective(coeffs: np.ndarray) -> float:
        nonlocal best_value, best_estimate, best_pulse
        pulse = assemble_pulse(ledger, coeffs, params, config.n_t)
        try:
            estimate = fom(plant, pulse)
        except FitFailure as err:
            log.warning("evaluation failed (%s); scoring 0", err)
            estimate = FidelityEstimate(0.0, 0.0, 0)
        if estimate.value > best_value:
            best_value = estimate.value
            best_estimate = estimate
            best_pulse = pulse
        records.append(
            EvaluationRecord(
                index=len(records),
                superiteration=superiteration,
                coefficients=np.asarray(coeffs, dtype=float).copy(),
                value=estimate.value,
                sigma=estimate.sigma,
                running_best=best_value,
            )
        )
        return estimate.value

    for superiteration in range(config.superiterations):
        ledger.active = draw_basis(config.n_components, params.duration, rng)
        nm = nelder_mead(
            objective,
            np.zeros(4 * config.n_components),
            config.coefficient_scale,
            config.max_evals_per_superiteration,
            config.simplex_tol,
            target=config.target_fidelity,
        )
        ledger.frozen.append(ledger.active.with_coeffs(nm.best_x))
        ledger.active = None
        if best_value >= config.target_fidelity:
            break

    assert best_pulse is not None and best_estimate is not None
    return OptimizationResult(
        best_pulse=best_pulse,
        best_fidelity=best_estimate,
        records=records,
        ledger=ledger,
    )


def evaluate_pulse_open_loop(
    pulse: PulseWaveform,
    params: PlantParams,
    fom: str = "state-transfer",
    ideal_gate: np.ndarray | None = None,
    amplitude_scale: float = 1.0,
) -> FidelityEstimate:
    """Exact noiseless model evaluation of a fixed pulse.

    Used for the open-loop comparison: the pulse is judged against the given
    (possibly perturbed) parameters without any feedback.  A non-unit
    ``amplitude_scale`` distorts the channels exactly as the simulated drive
    chain would, including re-clipping.
    """
    if amplitude_scale != 1.0:
        x, y = clip_amplitudes(amplitude_scale * pulse.x, amplitude_scale * pulse.y)
        pulse = PulseWaveform(pulse.duration, x, y)
    u = total_propagator(pulse, params)
    if fom == "state-transfer":
        value = abs(u[1, 0]) ** 2
    elif fom == "gate":
        gate = GATE_G if ideal_gate is None else ideal_gate
        probs = []
        for idx in PreparationIndex:
            psi = idx.state_vector()
            probs.append(abs(psi.conj() @ gate.conj().T @ u @ psi) ** 2)
        value = float(np.mean(probs))
    else:
        raise ContractError(f"unknown figure-of-merit kind {fom!r}")
    return FidelityEstimate(value=value, sigma=0.0, evaluations=0)
