import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from rlskf.errors import OutOfHorizon, ParseError
from rlskf.model import ModelSpec, simulate_ideal
from rlskf.numerics import RngStream, gaussian_sample
from rlskf.scenario import (
    AO_BUMP,
    AO_TIMES,
    AoPatch,
    IoEvent,
    Scenario,
    SoRandom,
    contaminate,
    parse_scenario,
    reference_scenario,
)


def ideal(T=50, seed=9):
    return simulate_ideal(ModelSpec.steady_state(), T, RngStream(seed))


class TestContaminate:
    def test_empty_scenario_identity(self):
        traj = ideal()
        out = contaminate(traj, Scenario.empty(), ModelSpec.steady_state(), RngStream(1))
        assert_array_equal(out.states, traj.states)
        assert_array_equal(out.observations, traj.observations)
        assert out.marks == traj.marks

    def test_ao_replace_non_propagating(self):
        traj = ideal()
        sc = Scenario(ao_patches=(AoPatch(10, "replace", [14.0]),))
        out = contaminate(traj, sc, ModelSpec.steady_state(), RngStream(1))
        assert out.observations[9, 0] == 14.0
        assert_array_equal(out.states, traj.states)  # states bit-identical
        mask = np.ones(50, dtype=bool)
        mask[9] = False
        assert_array_equal(out.observations[mask], traj.observations[mask])
        assert out.marks[9] == "ao"

    def test_ao_add(self):
        traj = ideal()
        sc = Scenario(ao_patches=(AoPatch(3, "add", [2.5]),))
        out = contaminate(traj, sc, ModelSpec.steady_state(), RngStream(1))
        assert out.observations[2, 0] == pytest.approx(traj.observations[2, 0] + 2.5)

    def test_level_shift_matches_resimulation_oracle(self):
        # oracle: re-simulate the states with the same noise draws, injecting
        # +m into the innovation at t_start (random walk: the shift persists)
        model = ModelSpec.steady_state()
        T, m_shift, t0, t1 = 50, 8.0, 37, 42
        stream = RngStream(33)
        traj = simulate_ideal(model, T, stream.child(0))
        sc = Scenario(io_events=(IoEvent(t0, t1, "level-shift", [m_shift]),))
        out = contaminate(traj, sc, model, stream.child(1))

        sim = stream.child(0)
        s_x0, s_v, s_eps = sim.child(0), sim.child(1), sim.child(2)
        states = np.empty(T + 1)
        states[0] = gaussian_sample(model.a0, model.Q0, s_x0)[0]
        for t in range(1, T + 1):
            v = gaussian_sample(np.zeros(1), model.Q_at(t), s_v)[0]
            inject = m_shift if t == t0 else 0.0
            states[t] = states[t - 1] + v + inject
        obs = np.empty(T)
        for t in range(1, T + 1):
            eps = gaussian_sample(np.zeros(1), model.V_at(t), s_eps)[0]
            obs[t - 1] = states[t] + eps
        assert_allclose(out.states[:, 0], states, atol=1e-12)
        assert_allclose(out.observations[:, 0], obs, atol=1e-12)
        # the +m offset holds exactly on the window and persists afterwards
        assert_allclose(out.states[t0 : t1 + 1, 0] - traj.states[t0 : t1 + 1, 0], m_shift)
        assert_allclose(out.states[t1 + 1 :, 0] - traj.states[t1 + 1 :, 0], m_shift)

    def test_linear_trend_offsets(self):
        model = ModelSpec.steady_state()
        traj = ideal()
        sc = Scenario(io_events=(IoEvent(20, 25, "linear-trend", [2.0]),))
        out = contaminate(traj, sc, model, RngStream(1))
        for k, t in enumerate(range(20, 26), start=1):
            assert out.states[t, 0] - traj.states[t, 0] == pytest.approx(2.0 * k)
        # random-walk transition: the final trend level persists
        assert out.states[30, 0] - traj.states[30, 0] == pytest.approx(12.0)
        assert out.marks[19:25] == ["io"] * 6

    def test_zero_magnitude_identity(self):
        traj = ideal()
        sc = Scenario(io_events=(IoEvent(10, 20, "level-shift", [0.0]),))
        out = contaminate(traj, sc, ModelSpec.steady_state(), RngStream(1))
        assert_allclose(out.states, traj.states)
        assert_allclose(out.observations, traj.observations)

    def test_differs_only_from_first_event(self):
        traj = ideal()
        sc = Scenario(
            ao_patches=(AoPatch(30, "add", [5.0]),),
            io_events=(IoEvent(15, 18, "level-shift", [3.0]),),
        )
        out = contaminate(traj, sc, ModelSpec.steady_state(), RngStream(1))
        assert_array_equal(out.states[:15], traj.states[:15])
        assert_array_equal(out.observations[:14], traj.observations[:14])
        assert not np.array_equal(out.observations[14:], traj.observations[14:])

    def test_decaying_transition_offset_fades(self):
        model = ModelSpec(p=1, q=1, F=0.5, Z=1.0, Q=1.0, V=1.0, a0=0.0, Q0=1.0)
        traj = simulate_ideal(model, 30, RngStream(3))
        sc = Scenario(io_events=(IoEvent(10, 12, "level-shift", [4.0]),))
        out = contaminate(traj, sc, model, RngStream(1))
        assert_allclose(out.states[10:13, 0] - traj.states[10:13, 0], 4.0)
        assert out.states[14, 0] - traj.states[14, 0] == pytest.approx(1.0)  # 4 * 0.5^2

    def test_random_so_replaces_observations(self):
        model = ModelSpec.steady_state()
        traj = ideal(T=400, seed=10)
        sc = Scenario(so_random=SoRandom(r=0.25, law="point", params=(99.0,)))
        out = contaminate(traj, sc, model, RngStream(77))
        hits = np.flatnonzero(out.observations[:, 0] == 99.0)
        assert 60 <= hits.size <= 140  # Binomial(400, 0.25)
        assert_array_equal(out.states, traj.states)
        assert all(out.marks[i] == "ao" for i in hits)

    def test_so_gauss_reproducible(self):
        model = ModelSpec.steady_state()
        traj = ideal(T=100, seed=11)
        sc = Scenario(so_random=SoRandom(r=0.1, law="gauss", params=(0.0, 10.0)))
        a = contaminate(traj, sc, model, RngStream(5))
        b = contaminate(traj, sc, model, RngStream(5))
        assert_array_equal(a.observations, b.observations)

    def test_out_of_horizon(self):
        traj = ideal()
        with pytest.raises(OutOfHorizon):
            contaminate(traj, Scenario(ao_patches=(AoPatch(60, "add", [1.0]),)),
                        ModelSpec.steady_state(), RngStream(1))
        with pytest.raises(OutOfHorizon):
            contaminate(traj, Scenario(io_events=(IoEvent(45, 60, "level-shift", [1.0]),)),
                        ModelSpec.steady_state(), RngStream(1))


class TestParseScenario:
    def test_ao_directive(self):
        sc = parse_scenario("ao replace 10 14.0\n")
        assert sc.ao_patches == (AoPatch(10, "replace", np.array([14.0])),)

    def test_io_directive(self):
        sc = parse_scenario("io level-shift 37 42 8.0\n")
        ev = sc.io_events[0]
        assert (ev.t_start, ev.t_end, ev.kind) == (37, 42, "level-shift")
        assert_array_equal(ev.magnitude, [8.0])

    def test_so_directive(self):
        sc = parse_scenario("so 0.1 gauss 0 10\n")
        assert sc.so_random == SoRandom(r=0.1, law="gauss", params=(0.0, 10.0))

    def test_comments_and_blanks(self):
        sc = parse_scenario("# header\n\nao add 5 1.0 # inline\n")
        assert len(sc.ao_patches) == 1

    def test_unknown_directive_with_line_number(self):
        with pytest.raises(ParseError) as err:
            parse_scenario("ao add 5 1.0\nwobble 3\n")
        assert err.value.line == 2

    def test_bad_mode(self):
        with pytest.raises(ParseError):
            parse_scenario("ao smudge 5 1.0\n")

    def test_duplicate_so(self):
        with pytest.raises(ParseError):
            parse_scenario("so 0.1 point 1.0\nso 0.2 point 2.0\n")

    def test_multidimensional_vectors(self):
        sc = parse_scenario("ao add 4 1.0 2.0 3.0\nio linear-trend 5 9 0.5 0.5\n")
        assert sc.ao_patches[0].value.shape == (3,)
        assert sc.io_events[0].magnitude.shape == (2,)


class TestReferenceScenario:
    def test_ideal_empty(self):
        assert reference_scenario("ideal").is_empty()

    def test_ao_patch_times(self):
        sc = reference_scenario("ao")
        assert tuple(p.t for p in sc.ao_patches) == AO_TIMES == (10, 15, 23)
        assert not sc.io_events

    def test_io_windows(self):
        sc = reference_scenario("io")
        kinds = {(ev.kind, ev.t_start, ev.t_end) for ev in sc.io_events}
        assert kinds == {("linear-trend", 20, 25), ("level-shift", 37, 42)}
        assert not sc.ao_patches

    def test_combined_and_coincidence(self):
        sc = reference_scenario("io-and-ao")
        assert sc.ao_patches and sc.io_events
        assert sc.coincident_times() == (23,)

    def test_ao_magnitude_in_innovation_units(self):
        assert AO_BUMP == pytest.approx(8.0 * np.sqrt((1 + np.sqrt(5)) / 2 + 1))

    def test_unknown_variant(self):
        from rlskf.errors import DomainError

        with pytest.raises(DomainError):
            reference_scenario("bogus")
