import logging
import math

import numpy as np
import pytest

from dickeprep import cvstate, oracle, protocol, synth
from dickeprep.cvstate import PolyGaussian
from dickeprep.exceptions import ScheduleMismatchError
from dickeprep.ops import Displacement, ThetaParams
from dickeprep.protocol import AcceptanceStrategy, OutcomeGrid
from dickeprep.schedule import Schedule, Step
from dickeprep.synth import TargetSpec

INV_SQRT2 = 1 / math.sqrt(2)
EPS_REF = 0.25 * math.exp(-2.0)
SUPERPOSITION = [INV_SQRT2, INV_SQRT2]


def deficit(a: PolyGaussian, b: PolyGaussian) -> float:
    ov = cvstate.overlap(a, b)
    return 1.0 - abs(ov) ** 2 / (cvstate.norm_sq(a) * cvstate.norm_sq(b))


@pytest.fixture(scope="module")
def two_photon():
    return synth.schedule_real(TargetSpec.from_amplitudes([0, 0, 1]), kappa=0.5, r=-1.0)


@pytest.fixture(scope="module")
def superposition():
    return synth.schedule_real(TargetSpec.from_amplitudes(SUPERPOSITION), kappa=0.5, r=1.0)


class TestExecute:
    def test_one_photon_state(self):
        s = synth.schedule_real(TargetSpec.from_amplitudes([0, 1]), kappa=0.5, r=1.0)
        out, dens = protocol.execute(s, [0.0])
        assert deficit(out, PolyGaussian([0.0, 1.0], 1 + EPS_REF, 0.0)) < 1e-12
        assert dens == pytest.approx(cvstate.norm_sq(out))

    def test_empty_schedule(self):
        out, dens = protocol.execute(Schedule(()), np.zeros(0))
        assert dens == pytest.approx(1.0, abs=1e-14)
        assert deficit(out, cvstate.vacuum()) < 1e-14

    def test_batched_matches_single(self, two_photon):
        pts = np.array([[0.1, -0.3], [0.0, 0.0], [1.2, 0.4]])
        batch, dens = protocol.execute(two_photon, pts)
        assert batch.batch_shape == (3,)
        for i, p in enumerate(pts):
            single, d = protocol.execute(two_photon, p)
            assert dens[i] == pytest.approx(d, rel=1e-13)
            assert np.allclose(batch[i].coeffs, single.coeffs)

    def test_wrong_outcome_count(self, two_photon):
        with pytest.raises(ScheduleMismatchError):
            protocol.execute(two_photon, [0.0])
        with pytest.raises(ScheduleMismatchError):
            protocol.execute(two_photon, 0.0)

    def test_matches_fock_oracle(self, two_photon):
        mine, dens = protocol.execute(two_photon, [0.4, -0.2])
        ref, ref_dens = oracle.simulate_schedule(two_photon, [0.4, -0.2])
        amps = cvstate.to_fock(mine, ref.size - 1).amps
        assert 1 - oracle.state_fidelity(amps, ref) < 1e-8
        assert abs(dens - ref_dens) / ref_dens < 1e-5


class TestOutcomeGrid:
    def test_points_and_weights(self):
        g = OutcomeGrid(L=1.0, h=0.5, dims=2)
        assert g.points().shape == (25, 2)
        assert g.weights().sum() == pytest.approx(4.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            OutcomeGrid(h=0.0)
        with pytest.raises(ValueError):
            OutcomeGrid(dims=4)

    def test_default_widens_for_squeezed_light(self, superposition, two_photon):
        assert OutcomeGrid.default(superposition).L > 6.0
        g = OutcomeGrid.default(two_photon)
        assert (g.L, g.h, g.dims) == (6.0, 0.05, 2)

    def test_dimension_mismatch(self, two_photon):
        with pytest.raises(ScheduleMismatchError):
            protocol.completeness_check(two_photon, OutcomeGrid(dims=1))


class TestCompleteness:
    def test_single_step(self, superposition):
        assert protocol.completeness_check(superposition) == pytest.approx(1.0, abs=2e-4)

    def test_vacuum_light(self):
        step = Step(Displacement(0.3), ThetaParams(0.5, 0.0), light=cvstate.vacuum())
        assert protocol.completeness_check(Schedule((step,))) == pytest.approx(1.0, abs=2e-4)

    def test_two_steps(self, two_photon):
        assert protocol.completeness_check(two_photon) == pytest.approx(1.0, abs=5e-4)

    def test_narrow_grid_misses_mass(self, superposition):
        # six units are not enough for the exp(r)-wide outcome density at r = 1
        short = protocol.completeness_check(superposition, OutcomeGrid(L=6.0))
        assert 1 - short > 2e-4

    def test_workers_do_not_change_result(self, two_photon):
        a = protocol.completeness_check(two_photon, workers=1)
        b = protocol.completeness_check(two_photon, workers=3)
        assert a == b


class TestFeedback:
    def test_target_needs_no_correction(self):
        state = cvstate.number_state(1)
        delta, fid = protocol.feedback_displacement(state, [0, 1])
        assert abs(delta.alpha) < 1e-5
        assert fid == pytest.approx(1.0, abs=1e-10)

    def test_recovers_planted_shift(self):
        state = protocol.ops.displace(Displacement(0.3), cvstate.number_state(1))
        delta, fid = protocol.feedback_displacement(state, [0, 1])
        assert delta.alpha == pytest.approx(-0.3, abs=1e-5)
        assert fid == pytest.approx(1.0, abs=1e-9)

    def test_real_only(self):
        state = protocol.ops.displace(Displacement(0.2j), cvstate.number_state(1))
        delta, _ = protocol.feedback_displacement(state, [0, 1], real_only=True)
        assert delta.alpha.imag == 0.0

    def test_improves_off_centre_outcome(self):
        state = protocol.ops.theta_s(ThetaParams(0.5, 1.0, p_L=0.5), cvstate.vacuum())
        state = protocol.ops.displace(Displacement(-0.5), state)
        before = protocol._fidelity_after(state, cvstate.norm_sq(state), protocol._unit(SUPERPOSITION), 0.0)
        _, after = protocol.feedback_displacement(state, SUPERPOSITION)
        assert after > float(before) + 1e-6

    def test_batched(self):
        states = protocol.ops.displace(
            Displacement(np.array([0.1, -0.2])), cvstate.number_state(1)
        )
        delta, fid = protocol.feedback_displacement(states, [0, 1])
        assert np.allclose(delta.alpha, [-0.1, 0.2], atol=1e-5)
        assert np.all(fid > 1 - 1e-9)


@pytest.fixture(scope="module")
def evaluations(superposition):
    plain = protocol.evaluate_grid(superposition, SUPERPOSITION)
    fb = protocol.evaluate_grid(superposition, SUPERPOSITION, feedback=True)
    return plain, fb


class TestTradeoff:
    def test_basic_small_window_fidelity(self, superposition, evaluations):
        plain, _ = evaluations
        curve = protocol.tradeoff_from_evaluation(plain, AcceptanceStrategy("basic"), [0.011])
        out, _ = protocol.execute(superposition, [0.0])
        out = cvstate.rescale_quadrature(out, superposition.rescale_factor)
        assert curve.fidelity[0] == pytest.approx(cvstate.fidelity_pure(out, SUPERPOSITION), abs=1e-12)
        assert curve.fidelity[0] >= 1 - 1e-10

    @pytest.mark.parametrize("kind,feedback", [("basic", False), ("advanced", False), ("advanced", True)])
    def test_curve_well_formed(self, evaluations, kind, feedback):
        ev = evaluations[1 if feedback else 0]
        curve = protocol.tradeoff_from_evaluation(ev, AcceptanceStrategy(kind, feedback))
        P = curve.probability
        assert np.all(np.diff(P) >= 0)
        assert np.all((P > 0) & (P <= 1))
        assert np.all((curve.fidelity >= 0) & (curve.fidelity <= 1))
        assert np.all(ev.density >= 0)

    @pytest.mark.parametrize("feedback", [False, True])
    def test_advanced_monotone(self, evaluations, feedback):
        ev = evaluations[1 if feedback else 0]
        curve = protocol.tradeoff_from_evaluation(ev, AcceptanceStrategy("advanced", feedback))
        assert np.all(np.diff(curve.fidelity) <= 1e-12)

    def test_ordering(self, evaluations):
        plain, fb = evaluations
        basic = protocol.tradeoff_from_evaluation(plain, AcceptanceStrategy("basic"))
        adv = protocol.tradeoff_from_evaluation(plain, AcceptanceStrategy("advanced"))
        adv_fb = protocol.tradeoff_from_evaluation(fb, AcceptanceStrategy("advanced", True))
        assert protocol.dominance_gap(basic, adv) <= 1e-3
        assert protocol.dominance_gap(adv, adv_fb) <= 1e-3

    def test_empty_region_skipped(self, caplog):
        ev = protocol.GridEvaluation(
            np.array([[-0.1], [0.0], [0.1]]), np.full(3, 0.1), np.ones(3), np.array([0.8, 0.95, 0.8]), None
        )
        with caplog.at_level(logging.WARNING, logger="dickeprep.protocol"):
            curve = protocol.tradeoff_from_evaluation(ev, AcceptanceStrategy("advanced"), [0.99, 0.9])
        assert curve.skipped == [0.99]
        assert len(curve.points) == 1
        assert "empty" in caplog.text

    def test_invalid_sweep(self, evaluations):
        plain, _ = evaluations
        with pytest.raises(ValueError):
            protocol.tradeoff_from_evaluation(plain, AcceptanceStrategy("basic"), [0.0])
        with pytest.raises(ValueError):
            protocol.tradeoff_from_evaluation(plain, AcceptanceStrategy("advanced"), [1.5])

    def test_unknown_strategy(self):
        with pytest.raises(ValueError):
            AcceptanceStrategy("greedy")

    def test_fidelity_at_outside_range(self, evaluations):
        curve = protocol.tradeoff_from_evaluation(evaluations[0], AcceptanceStrategy("advanced"))
        assert math.isnan(curve.fidelity_at(curve.probability[0] / 2))

    def test_meta_records_rescale(self, superposition):
        ev = protocol.evaluate_grid(superposition, SUPERPOSITION, OutcomeGrid(L=1.0, h=0.1), rescale=False)
        assert ev.meta["rescale"] is False and ev.meta["rescale_factor"] == 1.0

    def test_anti_squeezed_light_wins_at_low_probability(self):
        target = TargetSpec.from_amplitudes(SUPERPOSITION)
        fids = {}
        for r in (-1.0, 1.0):
            s = synth.schedule_real(target, kappa=0.5, r=r)
            curve = protocol.tradeoff(s, SUPERPOSITION, AcceptanceStrategy("advanced", True))
            fids[r] = float(curve.fidelity_at(0.02))
        assert fids[-1.0] > fids[1.0]


MAP_GRID = OutcomeGrid(L=3.0, h=0.1, dims=2)


@pytest.fixture(scope="module")
def plain_map(two_photon):
    return protocol.fidelity_map(two_photon, [0, 0, 1], MAP_GRID, feedback=False)


class TestFidelityMap:
    GRID = MAP_GRID

    def test_reflection_symmetry(self, plain_map):
        n = self.GRID.axis.size
        dens = plain_map.density.reshape(n, n)
        # (p1, p2) -> (-p2, -p1)
        mirrored = dens[::-1, ::-1].T
        assert np.max(np.abs(dens - mirrored)) < 1e-12 * dens.max()

    def test_mass_is_completeness(self, two_photon, plain_map):
        assert plain_map.mass == pytest.approx(protocol.completeness_check(two_photon, self.GRID), rel=1e-13)

    def test_origin_is_exact(self, two_photon):
        m = protocol.fidelity_map(two_photon, [0, 0, 1], OutcomeGrid(L=0.1, h=0.1, dims=2))
        centre = [f for p1, p2, _, f in m.rows() if p1 == 0 and p2 == 0]
        assert centre[0] >= 1 - 1e-8

    def test_needs_two_steps(self, superposition):
        with pytest.raises(ScheduleMismatchError):
            protocol.fidelity_map(superposition, SUPERPOSITION)

    def test_peak_location_on_grid(self, plain_map):
        p1, p2 = plain_map.max_density_location()
        assert abs(p1) <= 3.0 and abs(p2) <= 3.0
