import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flexgait import neuro
from flexgait.errors import ConfigurationError, IntegrationBlowupError

from oracles import sustained_peaks, peak_interval_period


def single_neuron_spec(**kw):
    params = dict(t0=0.052, gamma=0.03, a=2.0, b=0.3, kappa=4.0, u0=1.0, c=0.0, d=0.0)
    params.update(kw)
    return neuro.NetworkSpec([neuro.NeuronParams(**params)], np.zeros((1, 1)))


def inhibition_pair(w=1.0, **kw):
    params = dict(t0=0.052, gamma=0.05, a=1.6, b=0.1, kappa=3.0, u0=0.5, c=1.1, d=0.9)
    params.update(kw)
    p = neuro.NeuronParams(**params)
    return neuro.NetworkSpec([p, p], np.array([[0.0, -w], [-w, 0.0]]))


def random_cpg_params(rng):
    w = lambda: rng.uniform(-1.8, 1.8)
    return neuro.CpgParams(
        gamma=rng.uniform(0.01, 0.1), a=rng.uniform(0.2, 2.0), b=rng.uniform(0.02, 0.2),
        kappa=rng.uniform(0.5, 5.0), u0=rng.uniform(0.1, 1.0),
        c_in=rng.uniform(1.1, 2.0), c_a=rng.uniform(1.1, 2.0), c_b=rng.uniform(1.1, 2.0),
        d_in=rng.uniform(-0.9, 0.9), d_a=rng.uniform(-0.9, 0.9), d_b=rng.uniform(-0.9, 0.9),
        w_in_to_a=w(), w_a_to_in=w(), w_in_to_b=w(), w_b_to_in=w(), w_a_to_b=w(), w_b_to_a=w(),
        w_ipsi_front_to_hind=w(), w_ipsi_hind_to_front=w(), w_contra_front=w(),
        w_contra_hind=w(), w_diag_front_to_hind=w(), w_diag_hind_to_front=w(),
    )


class TestSynapticInput:
    def test_all_below_threshold_gives_zero(self):
        spec = neuro.NetworkSpec(
            [neuro.NeuronParams(), neuro.NeuronParams()], np.array([[0.0, 0.7], [0.4, 0.0]])
        )
        state = neuro.NetworkState(np.array([-1.0, 0.0]), np.zeros(2))
        assert np.array_equal(neuro.synaptic_input(spec, state), np.zeros(2))

    def test_hand_evaluated_single_link(self):
        spec = neuro.NetworkSpec(
            [neuro.NeuronParams(), neuro.NeuronParams()], np.array([[0.0, 0.5], [0.0, 0.0]])
        )
        state = neuro.NetworkState(np.array([0.0, 2.0]), np.zeros(2))
        cur = neuro.synaptic_input(spec, state)
        assert cur[0] == pytest.approx(1.0)
        assert cur[1] == 0.0

    def test_threshold_exactly_met_contributes_zero(self):
        tau = np.array([[0.0, 0.15], [0.0, 0.0]])
        spec = neuro.NetworkSpec(
            [neuro.NeuronParams(), neuro.NeuronParams()], np.array([[0.0, 2.0], [0.0, 0.0]]), tau
        )
        state = neuro.NetworkState(np.array([0.0, 0.15]), np.zeros(2))
        assert neuro.synaptic_input(spec, state)[0] == 0.0

    def test_external_input_scales_with_sensitivity(self):
        spec = neuro.NetworkSpec([neuro.NeuronParams(G=-0.5)], np.zeros((1, 1)))
        state = neuro.zero_state(1)
        cur = neuro.synaptic_input(spec, state, neuro.StepInput(i_ext=2.0))
        assert cur[0] == pytest.approx(-1.0)

    def test_feedback_dimension_mismatch_rejected(self):
        spec = single_neuron_spec()
        with pytest.raises(ConfigurationError):
            neuro.synaptic_input(spec, neuro.zero_state(1), neuro.StepInput(i_fb=np.zeros(3)))


class TestStepping:
    def test_zero_state_is_fixed_point_both_models(self):
        spec = single_neuron_spec(c=0.0, d=0.0)
        state = neuro.zero_state(1)
        for step in (neuro.step_modified, neuro.step_classic):
            out = step(spec, state)
            assert np.all(out.u == 0.0) and np.all(out.v == 0.0)

    def test_oscillating_neuron_produces_sustained_peaks(self):
        # a self-oscillating point of the decoded parameter space (the
        # nullcline-fold condition holds and the recovery slope is shallow)
        spec = single_neuron_spec(gamma=0.056, a=1.613, b=0.073, kappa=3.959, u0=0.573, c=1.234)
        assert neuro.check_oscillation_condition(spec.neuron(0))
        trace = neuro.simulate(spec, None, 20.0)
        assert sustained_peaks(trace.out[:, 0], neuro.DT_CPG, t_start=5.0) >= 5

    def test_low_bias_neuron_settles(self):
        spec = single_neuron_spec(c=0.5)
        assert not neuro.check_oscillation_condition(spec.neuron(0))
        trace = neuro.simulate(spec, None, 10.0)
        assert sustained_peaks(trace.out[:, 0], neuro.DT_CPG, t_start=5.0) == 0

    def test_blowup_carries_neuron_index(self):
        spec = single_neuron_spec()
        state = neuro.NetworkState(np.array([1e308]), np.array([0.0]))
        with pytest.raises(IntegrationBlowupError) as exc:
            neuro.step_modified(spec, state, neuro.StepInput(i_dc=1e308), dt=1.0)
        assert exc.value.neuron_index == 0

    def test_classic_period_insensitive_modified_sensitive(self):
        spec = inhibition_pair()
        i1 = 0.5
        drive = 1.1 + 0.9 * i1
        i2 = (1.5 * drive - 1.1) / 0.9  # raises c + d*I_DC by exactly 50%
        periods = {}
        for model in ("classic", "modified"):
            vals = []
            for i_dc in (i1, i2):
                trace = neuro.simulate(
                    spec, neuro.StepInput(i_dc=i_dc), 30.0, model=model,
                    state=neuro.NetworkState(np.array([0.5, 0.1]), np.zeros(2)),
                )
                keep = trace.t > 15.0
                vals.append(peak_interval_period(trace.out[keep, 0], trace.t[keep]))
            periods[model] = vals
        classic_change = abs(periods["classic"][1] - periods["classic"][0]) / periods["classic"][0]
        modified_change = abs(periods["modified"][1] - periods["modified"][0]) / periods["modified"][0]
        assert classic_change < 0.05
        assert modified_change >= 0.05

    def test_convergence_is_first_order(self):
        spec = single_neuron_spec(gamma=0.056, a=1.613, b=0.073, kappa=3.959, u0=0.573, c=1.234)
        state = neuro.NetworkState(np.array([0.3]), np.array([0.1]))
        finals = []
        for dt in (0.008, 0.004, 0.002):
            trace = neuro.simulate(spec, None, 10.0, dt=dt, state=state.copy())
            finals.append(np.array([trace.u[-1, 0], trace.v[-1, 0]]))
        e1 = np.linalg.norm(finals[0] - finals[1])
        e2 = np.linalg.norm(finals[1] - finals[2])
        assert 1.5 <= e1 / e2 <= 2.5


class TestOscillationCondition:
    def test_holds_by_direct_substitution(self):
        p = neuro.NeuronParams(c=2.0, d=0.0, u0=1.0, kappa=4.0)
        assert neuro.check_oscillation_condition(p) is True

    def test_equality_is_false(self):
        p = neuro.NeuronParams(c=1.5, d=0.0, u0=1.0, kappa=4.0)
        assert neuro.check_oscillation_condition(p) is False

    def test_drive_coupled_case(self):
        p = neuro.NeuronParams(c=1.1, d=0.9, u0=1.0, kappa=0.5)
        assert neuro.check_oscillation_condition(p, i_dc=1.0) is False

    def test_kappa_must_be_positive(self):
        p = neuro.NeuronParams(kappa=0.0)
        object.__setattr__(p, "kappa", -1.0)
        with pytest.raises(ConfigurationError):
            neuro.check_oscillation_condition(p)


class TestSimulate:
    def test_zero_duration_gives_empty_series(self):
        trace = neuro.simulate(single_neuron_spec(), None, 0.0)
        assert trace.t.size == 0 and trace.u.size == 0

    def test_determinism(self):
        spec = inhibition_pair()
        state = neuro.NetworkState(np.array([0.2, 0.7]), np.zeros(2))
        a = neuro.simulate(spec, neuro.StepInput(i_dc=0.5), 5.0, state=state.copy())
        b = neuro.simulate(spec, neuro.StepInput(i_dc=0.5), 5.0, state=state.copy())
        assert np.array_equal(a.u, b.u) and np.array_equal(a.v, b.v)

    def test_mirrored_initial_conditions_mirror_trajectories(self):
        rng = np.random.default_rng(3)
        spec = neuro.build_cpg_spec(random_cpg_params(rng))
        assert neuro.is_laterally_symmetric(spec)
        state = neuro.random_state(spec.n, rng)
        mirrored = neuro.mirror_state(state)
        inp = neuro.StepInput(i_dc=0.5)
        a = neuro.simulate(spec, inp, 5.0, state=state)
        b = neuro.simulate(spec, inp, 5.0, state=mirrored)
        perm = neuro.MIRROR_PERMUTATION
        assert np.allclose(a.u[:, perm], b.u, atol=1e-9)
        assert np.allclose(a.v[:, perm], b.v, atol=1e-9)


class TestCpgSpec:
    def test_twelve_neurons_four_identical_limbs(self):
        rng = np.random.default_rng(0)
        spec = neuro.build_cpg_spec(random_cpg_params(rng))
        assert spec.n == 12
        assert not np.any(spec.tau)
        assert np.all(spec.G == 0.0)
        for limb in range(1, 4):
            base = 3 * limb
            for name in ("c", "d", "gamma", "a"):
                arr = getattr(spec, name)
                assert np.array_equal(arr[base : base + 3], arr[0:3])

    def test_interlimb_links_only_between_interneurons(self):
        rng = np.random.default_rng(1)
        spec = neuro.build_cpg_spec(random_cpg_params(rng))
        for i in range(12):
            for j in range(12):
                if i // 3 != j // 3 and spec.w[i, j] != 0.0:
                    assert i % 3 == 0 and j % 3 == 0

    def test_no_self_connections_enforced(self):
        with pytest.raises(ConfigurationError):
            neuro.NetworkSpec([neuro.NeuronParams()], np.array([[0.5]]))

    def test_json_round_trip(self):
        rng = np.random.default_rng(5)
        spec = neuro.build_cpg_spec(random_cpg_params(rng))
        again = neuro.NetworkSpec.from_json(spec.to_json())
        assert again.n == spec.n and again.roles == spec.roles
        assert np.array_equal(again.w, spec.w)
        for name in ("t0", "gamma", "a", "b", "kappa", "u0", "c", "d", "G"):
            assert np.array_equal(getattr(again, name), getattr(spec, name))


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=8))
def test_rectifier_nonnegative(values):
    assert np.all(neuro.rectify(np.array(values)) >= 0.0)


@settings(deadline=None, max_examples=25)
@given(st.integers(0, 10_000))
def test_recovery_variable_stays_nonnegative(seed):
    rng = np.random.default_rng(seed)
    spec = inhibition_pair(w=rng.uniform(0.0, 1.8))
    state = neuro.NetworkState(rng.uniform(-1, 1, 2), rng.uniform(0, 1, 2))
    for _ in range(200):
        state = neuro.step_modified(spec, state, neuro.StepInput(i_dc=rng.uniform(0, 1)))
        assert np.all(state.v >= 0.0)
