import math

import numpy as np
import pytest

from autocal.dcrab import (
    BasisTerm,
    DcrabConfig,
    DcrabLedger,
    assemble_pulse,
    draw_basis,
    evaluate_pulse_open_loop,
    nelder_mead,
    run_dcrab,
)
from autocal.plant import SimPlant, SimPlantConfig
from autocal.qubit import ContractError, PlantParams, PulseWaveform
from autocal.tomography import FidelityEstimate


def make_plant(t_rel=1.5, det_rel=0.0):
    params = PlantParams(1.0, det_rel, t_rel * 0.5)
    return SimPlant(params, SimPlantConfig())


class TestConfig:
    def test_defaults_valid(self):
        cfg = DcrabConfig()
        assert cfg.n_components == 1
        assert cfg.superiterations == 6

    def test_budget_must_cover_simplex(self):
        with pytest.raises(ContractError):
            DcrabConfig(n_components=2, max_evals_per_superiteration=8)

    def test_target_range(self):
        with pytest.raises(ContractError):
            DcrabConfig(target_fidelity=0.0)
        with pytest.raises(ContractError):
            DcrabConfig(target_fidelity=1.5)


class TestDrawBasis:
    def test_single_component_band(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            term = draw_basis(1, 1.0, rng)
            assert abs(term.freqs_x[0]) < math.pi
            assert abs(term.freqs_y[0]) < math.pi

    def test_multi_component_disjoint_bands(self):
        rng = np.random.default_rng(1)
        duration = 2.0
        for _ in range(50):
            term = draw_basis(3, duration, rng)
            for freqs in (term.freqs_x, term.freqs_y):
                for n, w in enumerate(freqs):
                    lo = 2 * math.pi * (n - 0.5) / duration
                    hi = 2 * math.pi * (n + 0.5) / duration
                    assert lo < w < hi

    def test_seed_determinism(self):
        t1 = draw_basis(2, 1.5, np.random.default_rng(7))
        t2 = draw_basis(2, 1.5, np.random.default_rng(7))
        assert np.array_equal(t1.freqs_x, t2.freqs_x)
        assert np.array_equal(t1.freqs_y, t2.freqs_y)

    def test_zero_initial_coefficients(self):
        term = draw_basis(2, 1.0, np.random.default_rng(3))
        assert np.array_equal(term.coeffs, np.zeros(8))

    def test_coeff_length_checked(self):
        term = draw_basis(2, 1.0, np.random.default_rng(3))
        with pytest.raises(ContractError):
            term.with_coeffs(np.zeros(5))


class TestAssemblePulse:
    PARAMS = PlantParams(1.0, 0.0, 1.0)

    def ledger_with_zero_freq_term(self):
        ledger = DcrabLedger(duration=1.0)
        ledger.active = BasisTerm(
            freqs_x=np.array([0.0]), freqs_y=np.array([0.0]), coeffs=np.zeros(4)
        )
        return ledger

    def test_zero_coefficients_zero_waveform(self):
        ledger = self.ledger_with_zero_freq_term()
        pulse = assemble_pulse(ledger, np.zeros(4), self.PARAMS, 200)
        assert np.all(pulse.x == 0.0)
        assert np.all(pulse.y == 0.0)

    def test_constant_term_yields_window(self):
        # b0 = 1 at frequency zero on X gives X(t) = sin(pi t / T)
        ledger = self.ledger_with_zero_freq_term()
        pulse = assemble_pulse(ledger, np.array([0.0, 1.0, 0.0, 0.0]), self.PARAMS, 200)
        times = np.arange(200) / 200.0
        assert np.allclose(pulse.x, np.sin(math.pi * times), atol=1e-12)
        assert np.all(pulse.y == 0.0)
        assert pulse.x[0] == 0.0  # window vanishes at t = 0
        assert abs(np.max(pulse.x) - 1.0) < 1e-4  # peak ~1 at T/2

    def test_constraint_enforced_by_rescaling(self):
        ledger = self.ledger_with_zero_freq_term()
        pulse = assemble_pulse(ledger, np.array([0.0, 2.0, 0.0, 1.0]), self.PARAMS, 200)
        assert np.max(np.abs(pulse.x + pulse.y)) <= 1.0 + 1e-12
        # below-constraint samples keep the raw 2:1 channel ratio
        small = np.abs(pulse.x + pulse.y) < 0.999
        assert np.allclose(pulse.x[small & (pulse.y != 0)], 2 * pulse.y[small & (pulse.y != 0)])

    def test_update_vanishes_at_boundaries(self):
        rng = np.random.default_rng(9)
        ledger = DcrabLedger(duration=1.0)
        ledger.active = draw_basis(2, 1.0, rng)
        pulse = assemble_pulse(ledger, rng.normal(size=8), self.PARAMS, 500)
        assert pulse.x[0] == 0.0 and pulse.y[0] == 0.0

    def test_wrong_coeff_length(self):
        ledger = self.ledger_with_zero_freq_term()
        with pytest.raises(ContractError):
            assemble_pulse(ledger, np.zeros(6), self.PARAMS, 100)


class TestNelderMead:
    def test_quadratic_bowl(self):
        objective = lambda v: -((v[0] - 1.0) ** 2 + (v[1] - 2.0) ** 2)
        res = nelder_mead(objective, np.zeros(2), 1.0, 200, 1e-8)
        assert res.n_evals < 200
        assert np.allclose(res.best_x, [1.0, 2.0], atol=1e-4)

    def test_constant_objective_terminates_early(self):
        res = nelder_mead(lambda v: 0.5, np.zeros(3), 1.0, 500, 1e-6)
        assert res.best_value == 0.5
        assert res.n_evals < 500

    def test_rosenbrock_running_best_monotone(self):
        objective = lambda v: -(
            100.0 * (v[1] - v[0] ** 2) ** 2
            + (1.0 - v[0]) ** 2
            + 100.0 * (v[3] - v[2] ** 2) ** 2
            + (1.0 - v[2]) ** 2
        )
        res = nelder_mead(objective, np.zeros(4), 1.0, 500, 1e-12)
        running = np.maximum.accumulate(res.trace)
        assert res.best_value == running[-1]
        assert res.best_value > res.trace[0]

    def test_nan_objective_scored_zero(self):
        calls = {"n": 0}

        def objective(v):
            calls["n"] += 1
            return math.nan if calls["n"] == 2 else float(-np.sum(v**2))

        res = nelder_mead(objective, np.zeros(2), 1.0, 50, 1e-8)
        assert res.trace[1] == 0.0

    def test_target_stops_search(self):
        res = nelder_mead(lambda v: 1.0, np.zeros(4), 1.0, 500, 1e-8, target=0.9)
        assert res.n_evals == 1

    def test_budget_respected(self):
        objective = lambda v: float(np.sin(np.sum(v)))
        res = nelder_mead(objective, np.zeros(4), 1.0, 17, 1e-15)
        assert res.n_evals <= 17


class TestRunDcrab:
    def run_once(self, seed=0, **kwargs):
        config = DcrabConfig(seed=seed, **kwargs)
        return run_dcrab(make_plant(), "state-transfer", config)

    def test_running_best_non_decreasing(self):
        result = self.run_once()
        running = result.running_best_trace
        assert np.all(np.diff(running) >= 0.0)
        assert running[-1] == result.best_fidelity.value

    def test_superiteration_continuity(self):
        # with zero-initialized active coefficients, the first evaluation of
        # each super-iteration replays the previous one's best vertex exactly
        result = self.run_once(seed=5, target_fidelity=1.0, superiterations=3)
        by_si = {}
        for rec in result.records:
            by_si.setdefault(rec.superiteration, []).append(rec.value)
        for k in range(1, len(by_si)):
            assert by_si[k][0] == max(by_si[k - 1])

    def test_frozen_terms_match_recorded_best(self):
        result = self.run_once(seed=2, target_fidelity=1.0, superiterations=3)
        for k, term in enumerate(result.ledger.frozen):
            recs = [r for r in result.records if r.superiteration == k]
            best = max(recs, key=lambda r: r.value)
            assert np.array_equal(term.coeffs, best.coefficients)

    def test_best_pulse_satisfies_constraint(self):
        result = self.run_once(seed=3)
        pulse = result.best_pulse
        assert np.max(np.abs(pulse.x + pulse.y)) <= 1.0 + 1e-12

    def test_bit_exact_reproducibility(self):
        r1 = self.run_once(seed=11)
        r2 = self.run_once(seed=11)
        assert np.array_equal(r1.fom_trace, r2.fom_trace)
        assert np.array_equal(r1.best_pulse.x, r2.best_pulse.x)
        assert np.array_equal(r1.best_pulse.y, r2.best_pulse.y)
        assert r1.best_fidelity.value == r2.best_fidelity.value

    def test_early_exit_on_target(self):
        result = self.run_once(seed=1, target_fidelity=0.8)
        assert result.best_fidelity.value >= 0.8
        assert result.n_evaluations < 6 * 40

    def test_trap_escape_statistics(self):
        # synthetic landscape needing two distinct frequencies on X: one
        # super-iteration (single component) plateaus, basis changes unlock it
        duration = 1.0
        times = np.arange(400) * (duration / 400)
        window = np.sin(math.pi * times / duration)
        tx = window * (
            0.45 * np.sin(2 * math.pi * 0.15 * times / duration + 0.4)
            + 0.35 * np.sin(2 * math.pi * 0.45 * times / duration + 1.9)
        )
        ty = window * (
            0.40 * np.sin(2 * math.pi * 0.35 * times / duration + 2.6)
            + 0.30 * np.sin(2 * math.pi * 0.05 * times / duration + 0.9)
        )

        def profile_fom(plant, pulse):
            err = float(np.mean((pulse.x - tx) ** 2) + np.mean((pulse.y - ty) ** 2))
            return FidelityEstimate(value=max(0.0, 1.0 - 5.0 * err), sigma=0.0)

        params = PlantParams(1.0, 0.0, duration)
        escapes = 0
        for seed in range(50):
            config = DcrabConfig(
                seed=seed,
                superiterations=6,
                target_fidelity=1.0,
                n_t=400,
                simplex_tol=1e-3,
            )
            plant = SimPlant(params, SimPlantConfig())
            result = run_dcrab(plant, profile_fom, config)
            plateau = max(r.value for r in result.records if r.superiteration == 0)
            if result.best_fidelity.value > plateau + 1e-3:
                escapes += 1
        assert escapes >= 45


class TestOpenLoopEvaluation:
    def test_matches_closed_loop_best(self):
        config = DcrabConfig(seed=4)
        plant = make_plant()
        result = run_dcrab(plant, "state-transfer", config)
        reval = evaluate_pulse_open_loop(result.best_pulse, plant.nominal)
        assert abs(reval.value - result.best_fidelity.value) < 1e-9

    def test_amplitude_scale_overrotation(self):
        # half-amplitude pi-pulse scaled by 1.2 rotates by 1.2 pi
        pulse = PulseWaveform.constant(0.5, 0.0, 1.0)
        fom = evaluate_pulse_open_loop(
            pulse, PlantParams(1.0, 0.0, 1.0), amplitude_scale=1.2
        )
        assert fom.value == pytest.approx(math.sin(0.6 * math.pi) ** 2, abs=1e-9)

    def test_gate_kind(self):
        pulse = PulseWaveform.constant(1.0, 0.0, 0.25)
        fom = evaluate_pulse_open_loop(pulse, PlantParams(1.0, 0.0, 0.25), fom="gate")
        assert fom.value == pytest.approx(1.0, abs=1e-9)

    def test_unknown_kind_rejected(self):
        pulse = PulseWaveform.zero(1.0)
        with pytest.raises(ContractError):
            evaluate_pulse_open_loop(pulse, PlantParams(1.0, 0.0, 1.0), fom="energy")
