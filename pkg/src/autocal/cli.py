"""Command-line front end.

Verbs: invert, gate, scan, compare-openloop, qpt.  Exit codes: 0 success,
2 configuration error, 3 runtime failure.  Options given on the command
line win over values from a config file.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from pathlib import Path

from .dcrab import DcrabConfig
from .harness import (
    DEFAULT_DET_REL_GRID,
    DEFAULT_T_REL_GRID,
    ScanSpec,
    load_pulse_csv,
    params_from_relative,
    run_gate_demo,
    run_openloop_comparison,
    run_scan,
    run_state_transfer_demo,
    write_chi_json,
    write_manifest,
)
from .plant import SimPlant, SimPlantConfig
from .qubit import ContractError, GATE_G
from .tomography import analytic_chi_of_unitary, chi_construction_discrepancy, process_tomography

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _add_dcrab_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--superiterations", type=int, default=6)
    parser.add_argument("--components", type=int, default=1)
    parser.add_argument("--max-evals", type=int, default=40, help="per super-iteration")
    parser.add_argument("--target", type=float, default=0.99)
    parser.add_argument("--samples", type=int, default=1000, help="waveform samples")


def _dcrab_config(args, overrides: dict) -> DcrabConfig:
    merged = {
        "n_components": args.components,
        "superiterations": args.superiterations,
        "max_evals_per_superiteration": args.max_evals,
        "target_fidelity": args.target,
        "seed": args.seed,
        "n_t": args.samples,
    }
    merged.update(overrides.get("dcrab", {}))
    return DcrabConfig(**merged)


def _read_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ContractError(f"cannot read config file {path}")
    out: dict = {}
    if parser.has_section("dcrab"):
        sec = parser["dcrab"]
        out["dcrab"] = {}
        for key, cast in [
            ("n_components", int),
            ("superiterations", int),
            ("max_evals_per_superiteration", int),
            ("target_fidelity", float),
            ("simplex_tol", float),
            ("coefficient_scale", float),
            ("seed", int),
            ("n_t", int),
        ]:
            if key in sec:
                out["dcrab"][key] = cast(sec[key])
    if parser.has_section("scan"):
        sec = parser["scan"]
        out["scan"] = {}
        if "t_rels" in sec:
            out["scan"]["t_rels"] = tuple(float(v) for v in sec["t_rels"].split(","))
        if "det_rels" in sec:
            out["scan"]["det_rels"] = tuple(float(v) for v in sec["det_rels"].split(","))
        if "runs" in sec:
            out["scan"]["runs"] = int(sec["runs"])
        if "master_seed" in sec:
            out["scan"]["master_seed"] = int(sec["master_seed"])
    if parser.has_section("plant"):
        sec = parser["plant"]
        out["plant"] = {k: float(sec[k]) for k in sec}
    if parser.has_section("output"):
        out["output"] = dict(parser["output"])
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="autocal")
    sub = parser.add_subparsers(dest="command", required=True)

    invert = sub.add_parser("invert", help="closed-loop state-transfer calibration")
    invert.add_argument("--dt-rel", type=float, default=1.5, help="T / T_pi")
    invert.add_argument("--detuning-rel", type=float, default=0.0, help="Delta / Omega")
    invert.add_argument("--noise", action="store_true")
    invert.add_argument("--shots", type=int, default=10_000)
    invert.add_argument("--out", type=Path, default=Path("autocal-invert"))
    _add_dcrab_options(invert)

    gate = sub.add_parser("gate", help="closed-loop Hadamard-like gate calibration")
    gate.add_argument("--detuning-rel", type=float, default=0.0)
    gate.add_argument("--dt-rel", type=float, default=1.5)
    gate.add_argument("--noise", action="store_true")
    gate.add_argument("--shots", type=int, default=10_000)
    gate.add_argument("--out", type=Path, default=Path("autocal-gate"))
    _add_dcrab_options(gate)
    gate.set_defaults(target=0.98)

    scan = sub.add_parser("scan", help="state-transfer robustness scan")
    scan.add_argument("--config", type=str, default=None)
    scan.add_argument("--workers", type=int, default=1)
    scan.add_argument("--runs", type=int, default=None)
    scan.add_argument("--out", type=Path, default=Path("autocal-scan"))
    _add_dcrab_options(scan)

    cmp = sub.add_parser("compare-openloop", help="open-loop vs closed-loop on a perturbed plant")
    cmp.add_argument("--scan", type=Path, required=True, help="directory of a completed scan")
    cmp.add_argument("--amp-scale", type=float, default=1.2)
    cmp.add_argument("--detuning-offset-rel", type=float, default=0.5)
    cmp.add_argument("--runs", type=int, default=5)
    cmp.add_argument("--out", type=Path, default=Path("autocal-compare.csv"))
    _add_dcrab_options(cmp)

    qpt = sub.add_parser("qpt", help="process tomography of a pulse file")
    qpt.add_argument("--pulse", type=Path, required=True)
    qpt.add_argument("--detuning-rel", type=float, default=0.0)
    qpt.add_argument("--noise", action="store_true")
    qpt.add_argument("--shots", type=int, default=10_000)
    qpt.add_argument("--seed", type=int, default=0)
    qpt.add_argument("--out", type=Path, default=Path("autocal-chi.json"))
    return parser


def _cmd_invert(args) -> int:
    config = _dcrab_config(args, {})
    result = run_state_transfer_demo(
        config,
        det_rel=args.detuning_rel,
        t_rel=args.dt_rel,
        noisy=args.noise,
        shots=args.shots,
        out_dir=args.out,
    )
    print(
        f"best fidelity {result.best_fidelity.value:.4f} "
        f"+/- {result.best_fidelity.sigma:.4f} after {result.n_evaluations} evaluations"
    )
    print(f"outputs written to {args.out}")
    return EXIT_OK


def _cmd_gate(args) -> int:
    config = _dcrab_config(args, {})
    result, _chi = run_gate_demo(
        config,
        det_rel=args.detuning_rel,
        t_rel=args.dt_rel,
        noisy=args.noise,
        shots=args.shots,
        out_dir=args.out,
    )
    print(
        f"best gate fidelity {result.best_fidelity.value:.4f} "
        f"+/- {result.best_fidelity.sigma:.4f} after {result.n_evaluations} evaluations"
    )
    print(f"outputs written to {args.out}")
    return EXIT_OK


def _cmd_scan(args) -> int:
    overrides = _read_config_file(args.config)
    config = _dcrab_config(args, overrides)
    scan_kwargs = dict(overrides.get("scan", {}))
    if args.runs is not None:
        scan_kwargs["runs"] = args.runs
    scan_kwargs.setdefault("t_rels", DEFAULT_T_REL_GRID)
    scan_kwargs.setdefault("det_rels", DEFAULT_DET_REL_GRID)
    scan_kwargs.setdefault("master_seed", args.seed)
    spec = ScanSpec(base_config=config, **scan_kwargs)
    result = run_scan(spec, workers=args.workers, out_dir=args.out)
    print(f"scan of {len(spec.t_rels)}x{len(spec.det_rels)} cells, {spec.runs} runs each")
    print(f"grid mean fidelity {result.mean.mean():.4f}; outputs written to {args.out}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    config = _dcrab_config(args, {})
    rows = run_openloop_comparison(
        args.scan,
        amplitude_scale=args.amp_scale,
        detuning_offset_rel=args.detuning_offset_rel,
        config=config,
        runs=args.runs,
        master_seed=args.seed,
        out_path=args.out,
    )
    for row in rows:
        print(
            f"det_rel {row['det_rel']:>5}: open-loop {row['open_loop_fidelity']:.4f}  "
            f"closed-loop {row['closed_loop_mean']:.4f} +/- {row['closed_loop_std']:.4f}"
        )
    print(f"table written to {args.out}")
    return EXIT_OK


def _cmd_qpt(args) -> int:
    pulse = load_pulse_csv(args.pulse)
    rabi = 1.0
    t_rel = pulse.duration * 2.0 * rabi
    params = params_from_relative(t_rel, args.detuning_rel, rabi)
    plant = SimPlant(
        params,
        SimPlantConfig(noiseless=not args.noise, repetitions=args.shots, seed=args.seed),
    )
    chi = process_tomography(plant, pulse)
    write_chi_json(
        chi,
        args.out,
        extra={
            "ideal_chi": analytic_chi_of_unitary(GATE_G).to_json_dict(),
            "published_formula_identity_deviation": chi_construction_discrepancy(),
        },
    )
    write_manifest(
        Path(str(args.out) + ".manifest.json"),
        command="qpt",
        pulse=str(args.pulse),
        detuning_rel=args.detuning_rel,
        noise=args.noise,
        shots=args.shots,
        seed=args.seed,
    )
    print(f"chi matrix written to {args.out}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    handlers = {
        "invert": _cmd_invert,
        "gate": _cmd_gate,
        "scan": _cmd_scan,
        "compare-openloop": _cmd_compare,
        "qpt": _cmd_qpt,
    }
    try:
        return handlers[args.command](args)
    except (ContractError, FileNotFoundError, configparser.Error) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as err:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
