"""Reproduction harness: parameter scans, demo runs, and file outputs.

Everything here is plumbing around the library: deterministic per-cell
seeding, flat-file outputs (CSV / JSON / JSON-lines), and manifests that
make every run reproducible bit-for-bit in noiseless mode.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dcrab import (
    DcrabConfig,
    OptimizationResult,
    evaluate_pulse_open_loop,
    run_dcrab,
)
from .plant import SimPlant, SimPlantConfig
from .qubit import ContractError, PlantParams, PulseWaveform
from .tomography import (
    ChiMatrix,
    analytic_chi_of_unitary,
    chi_construction_discrepancy,
    process_tomography,
)
from .qubit import GATE_G

DEFAULT_RABI_FREQUENCY = 1.0  # MHz; dynamics depend only on the relative quantities

DEFAULT_T_REL_GRID = (0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 2.5, 3.0)
DEFAULT_DET_REL_GRID = (0.0, 0.2, 0.5, 1.0, 2.0, 4.0, 6.0, 10.0)


def derived_seed(master: int, *key: int) -> int:
    """Deterministic child seed from a master seed and integer coordinates."""
    return int(np.random.SeedSequence(entropy=(master, *key)).generate_state(1)[0])


def params_from_relative(t_rel: float, det_rel: float, rabi: float = DEFAULT_RABI_FREQUENCY) -> PlantParams:
    t_pi = 1.0 / (2.0 * rabi)
    return PlantParams(rabi_frequency=rabi, detuning=det_rel * rabi, duration=t_rel * t_pi)


# ---------------------------------------------------------------------------
# Pulse CSV round trip


def save_pulse_csv(pulse: PulseWaveform, path: Path | str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_us", "X", "Y"])
        for t, x, y in zip(pulse.times, pulse.x, pulse.y):
            writer.writerow([repr(float(t)), repr(float(x)), repr(float(y))])


def load_pulse_csv(path: Path | str) -> PulseWaveform:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["t_us", "X", "Y"]:
            raise ContractError(f"unexpected pulse CSV header {header!r}")
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.array(rows)
    t = data[:, 0]
    if t.size < 2 or not np.all(np.diff(t) > 0.0):
        raise ContractError("pulse CSV times must be strictly increasing")
    dt = t[1] - t[0]
    if not np.allclose(np.diff(t), dt, rtol=1e-9, atol=1e-12):
        raise ContractError("pulse CSV requires a uniform time grid")
    return PulseWaveform(float(t[-1] + dt), data[:, 1], data[:, 2])


# ---------------------------------------------------------------------------
# Optimization-result outputs


def write_trace_jsonl(result: OptimizationResult, path: Path | str) -> None:
    with open(path, "w") as fh:
        for rec in result.records:
            fh.write(
                json.dumps(
                    {
                        "index": rec.index,
                        "superiteration": rec.superiteration,
                        "coefficients": rec.coefficients.tolist(),
                        "fom": rec.value,
                        "sigma": rec.sigma,
                        "running_best": rec.running_best,
                    }
                )
                + "\n"
            )


def write_summary_json(result: OptimizationResult, path: Path | str, extra: dict | None = None) -> None:
    summary = {
        "loop_kind": result.loop_kind,
        "data_kind": result.data_kind,
        "best_fidelity": result.best_fidelity.value,
        "best_sigma": result.best_fidelity.sigma,
        "n_evaluations": result.n_evaluations,
        "frozen_terms": [
            {
                "freqs_x": term.freqs_x.tolist(),
                "freqs_y": term.freqs_y.tolist(),
                "coeffs": term.coeffs.tolist(),
            }
            for term in result.ledger.frozen
        ],
    }
    if extra:
        summary.update(extra)
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2)


def write_manifest(path: Path | str, **resolved) -> None:
    with open(path, "w") as fh:
        json.dump(resolved, fh, indent=2, default=str)


def write_chi_json(chi: ChiMatrix, path: Path | str, extra: dict | None = None) -> None:
    payload = chi.to_json_dict()
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


# ---------------------------------------------------------------------------
# Demo runs


def run_state_transfer_demo(
    config: DcrabConfig,
    det_rel: float,
    t_rel: float,
    noisy: bool = False,
    shots: int = 10_000,
    out_dir: Path | str | None = None,
    plant_seed: int | None = None,
) -> OptimizationResult:
    params = params_from_relative(t_rel, det_rel)
    plant = SimPlant(
        params,
        SimPlantConfig(
            noiseless=not noisy,
            repetitions=shots,
            seed=derived_seed(config.seed, 1) if plant_seed is None else plant_seed,
        ),
    )
    result = run_dcrab(plant, "state-transfer", config)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_trace_jsonl(result, out / "trace.jsonl")
        write_summary_json(result, out / "summary.json")
        save_pulse_csv(result.best_pulse, out / "best_pulse.csv")
        write_manifest(
            out / "manifest.json",
            command="invert",
            det_rel=det_rel,
            t_rel=t_rel,
            noisy=noisy,
            shots=shots,
            rabi_frequency=params.rabi_frequency,
            dcrab=vars(config).copy() if hasattr(config, "__dict__") else config.__dict__,
            plant_seed=plant.config.seed,
        )
    return result


def run_gate_demo(
    config: DcrabConfig,
    det_rel: float,
    noisy: bool = False,
    shots: int = 10_000,
    t_rel: float = 1.5,
    out_dir: Path | str | None = None,
    plant_seed: int | None = None,
) -> tuple[OptimizationResult, ChiMatrix]:
    params = params_from_relative(t_rel, det_rel)
    plant = SimPlant(
        params,
        SimPlantConfig(
            noiseless=not noisy,
            repetitions=shots,
            seed=derived_seed(config.seed, 2) if plant_seed is None else plant_seed,
        ),
    )
    result = run_dcrab(plant, "gate", config)
    chi = process_tomography(plant, result.best_pulse)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_trace_jsonl(result, out / "trace.jsonl")
        write_summary_json(result, out / "summary.json")
        save_pulse_csv(result.best_pulse, out / "best_pulse.csv")
        write_chi_json(
            chi,
            out / "chi.json",
            extra={
                "ideal_chi": analytic_chi_of_unitary(GATE_G).to_json_dict(),
                "published_formula_identity_deviation": chi_construction_discrepancy(),
            },
        )
        write_manifest(
            out / "manifest.json",
            command="gate",
            det_rel=det_rel,
            t_rel=t_rel,
            noisy=noisy,
            shots=shots,
            rabi_frequency=params.rabi_frequency,
            dcrab=config.__dict__,
            plant_seed=plant.config.seed,
        )
    return result, chi


# ---------------------------------------------------------------------------
# Parameter scan


@dataclass(frozen=True)
class ScanSpec:
    t_rels: tuple[float, ...] = DEFAULT_T_REL_GRID
    det_rels: tuple[float, ...] = DEFAULT_DET_REL_GRID
    runs: int = 20
    base_config: DcrabConfig = field(default_factory=DcrabConfig)
    master_seed: int = 0
    rabi_frequency: float = DEFAULT_RABI_FREQUENCY

    def __post_init__(self) -> None:
        if not self.t_rels or not self.det_rels:
            raise ContractError("scan grids must be non-empty")
        if any(v < 0 for v in self.t_rels) or any(v < 0 for v in self.det_rels):
            raise ContractError("grid values must be >= 0")
        if self.runs < 1:
            raise ContractError("runs must be >= 1")


@dataclass
class ScanResult:
    t_rels: tuple[float, ...]
    det_rels: tuple[float, ...]
    mean: np.ndarray
    std: np.ndarray
    best: np.ndarray
    runs: int
    failed: np.ndarray
    best_pulses: dict[tuple[int, int], PulseWaveform] = field(default_factory=dict)

    def to_csv(self, path: Path | str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t_rel", "det_rel", "mean", "std", "best"])
            for i, t in enumerate(self.t_rels):
                for j, d in enumerate(self.det_rels):
                    writer.writerow(
                        [t, d, repr(self.mean[i, j]), repr(self.std[i, j]), repr(self.best[i, j])]
                    )


def _scan_run(args) -> tuple[int, int, int, float, float, np.ndarray, np.ndarray]:
    (i, j, run, t_rel, det_rel, rabi, master_seed, config_dict) = args
    params = params_from_relative(t_rel, det_rel, rabi)
    config = DcrabConfig(**{**config_dict, "seed": derived_seed(master_seed, i, j, run)})
    plant = SimPlant(params, SimPlantConfig(noiseless=True, seed=0))
    try:
        result = run_dcrab(plant, "state-transfer", config)
    except Exception:  # individual failures score 0, flagged in aggregation
        return (i, j, run, 0.0, math.nan, np.array([]), np.array([]))
    pulse = result.best_pulse
    return (i, j, run, result.best_fidelity.value, pulse.duration, pulse.x, pulse.y)


def run_scan(spec: ScanSpec, workers: int = 1, out_dir: Path | str | None = None) -> ScanResult:
    """Seeded DCRAB state-transfer runs over the (T/T_pi, Delta/Omega) grid.

    Per-run seeds derive from (master seed, cell coordinates, run index), so
    results are independent of execution order and worker count.
    """
    config_dict = dict(spec.base_config.__dict__)
    config_dict.pop("seed", None)
    jobs = [
        (i, j, run, t_rel, det_rel, spec.rabi_frequency, spec.master_seed, config_dict)
        for i, t_rel in enumerate(spec.t_rels)
        for j, det_rel in enumerate(spec.det_rels)
        for run in range(spec.runs)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_scan_run, jobs, chunksize=1))
    else:
        outcomes = [_scan_run(job) for job in jobs]

    shape = (len(spec.t_rels), len(spec.det_rels))
    values = np.zeros(shape + (spec.runs,))
    failed = np.zeros(shape, dtype=int)
    best_pulses: dict[tuple[int, int], PulseWaveform] = {}
    best_values: dict[tuple[int, int], float] = {}
    for (i, j, run, value, duration, x, y) in outcomes:
        values[i, j, run] = value
        if math.isnan(duration):
            failed[i, j] += 1
            continue
        if value > best_values.get((i, j), -1.0):
            best_values[(i, j)] = value
            best_pulses[(i, j)] = PulseWaveform(duration, x, y)

    result = ScanResult(
        t_rels=spec.t_rels,
        det_rels=spec.det_rels,
        mean=values.mean(axis=2),
        std=values.std(axis=2),
        best=values.max(axis=2),
        runs=spec.runs,
        failed=failed,
        best_pulses=best_pulses,
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.to_csv(out / "scan.csv")
        for (i, j), pulse in best_pulses.items():
            save_pulse_csv(pulse, out / f"pulse_t{spec.t_rels[i]:g}_d{spec.det_rels[j]:g}.csv")
        write_manifest(
            out / "manifest.json",
            command="scan",
            t_rels=list(spec.t_rels),
            det_rels=list(spec.det_rels),
            runs=spec.runs,
            master_seed=spec.master_seed,
            rabi_frequency=spec.rabi_frequency,
            dcrab={**config_dict, "seed": spec.master_seed},
        )
    return result


# ---------------------------------------------------------------------------
# Open-loop vs closed-loop comparison


def run_openloop_comparison(
    scan_dir: Path | str,
    amplitude_scale: float,
    detuning_offset_rel: float,
    config: DcrabConfig | None = None,
    runs: int = 5,
    master_seed: int = 7,
    t_rel: float = 1.5,
    out_path: Path | str | None = None,
) -> list[dict]:
    """Compare nominal-optimized pulses on a perturbed plant to closed-loop runs.

    Loads the best pulse per detuning from a completed nominal scan
    (``t_rel`` row), evaluates it open-loop under the perturbation, and runs
    fresh closed-loop optimizations against the perturbed plant.
    """
    scan_dir = Path(scan_dir)
    manifest_path = scan_dir / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no scan manifest in {scan_dir}")
    manifest = json.loads(manifest_path.read_text())
    rabi = manifest["rabi_frequency"]
    det_rels = manifest["det_rels"]
    config = config or DcrabConfig()
    rows = []
    for j, det_rel in enumerate(det_rels):
        pulse_path = scan_dir / f"pulse_t{t_rel:g}_d{det_rel:g}.csv"
        if not pulse_path.exists():
            raise FileNotFoundError(f"missing scan pulse {pulse_path}")
        pulse = load_pulse_csv(pulse_path)
        nominal = params_from_relative(t_rel, det_rel, rabi)
        perturbed = PlantParams(
            rabi_frequency=nominal.rabi_frequency,
            detuning=nominal.detuning + detuning_offset_rel * rabi,
            duration=nominal.duration,
        )
        open_loop = evaluate_pulse_open_loop(
            pulse, perturbed, "state-transfer", amplitude_scale=amplitude_scale
        )
        closed_vals = []
        for run in range(runs):
            plant = SimPlant(
                nominal,
                SimPlantConfig(
                    noiseless=True,
                    detuning_offset=detuning_offset_rel * rabi,
                    amplitude_scale=amplitude_scale,
                    seed=0,
                ),
            )
            cfg = DcrabConfig(**{**config.__dict__, "seed": derived_seed(master_seed, j, run)})
            closed_vals.append(run_dcrab(plant, "state-transfer", cfg).best_fidelity.value)
        rows.append(
            {
                "det_rel": det_rel,
                "open_loop_fidelity": open_loop.value,
                "closed_loop_mean": float(np.mean(closed_vals)),
                "closed_loop_std": float(np.std(closed_vals)),
                "runs": runs,
            }
        )
    if out_path is not None:
        with open(out_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
    return rows
