import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import ndimage

from dnftrack.core import run
from dnftrack.events import bin_events
from dnftrack.harness import cue_from_davis, run_dnf1d, run_tracker
from dnftrack.models import (CueSpec, Dnf1dConfig, InputBump, TrackerConfig, build_dnf_1d,
                             build_tracker, dump_config, input_schedule, load_config, replace)
from dnftrack.readout import davis_to_grid, rect_filter_steps
from dnftrack.synth import SceneObject, SyntheticSceneSpec, gen_synthetic_events, ground_truth


def field_synapses(dn):
    s = dn.net.synapses
    keep = (s.src < dn.cfg.n) & (s.dst < dn.cfg.n)
    return s.src[keep], s.dst[keep], s.weight[keep]


class TestDnf1dBuild:
    def test_input_driven_table(self):
        cfg = Dnf1dConfig.input_driven()
        assert (cfg.v_threshold, cfg.tau_v, cfg.tau_i) == (3000 * 64, 150, 10)
        assert (cfg.exc_weight, cfg.inh_weight, cfg.input_weight) == (200, -160, 200)
        assert (cfg.input_rate, cfg.noise_rate, cfg.kernel_sigma) == (60.0, 2.0, 1.5)
        assert not cfg.self_excitation

    def test_self_sustained_table(self):
        cfg = Dnf1dConfig.self_sustained()
        assert (cfg.exc_weight, cfg.inh_weight) == (150, -75)
        assert cfg.self_excitation

    @pytest.mark.parametrize("regime", ["input_driven", "self_sustained"])
    def test_field_weights(self, regime):
        cfg = getattr(Dnf1dConfig, regime)()
        src, dst, w = field_synapses(build_dnf_1d(cfg))
        scale = 2 ** cfg.recurrent_weight_exponent
        W = np.zeros((12, 12), dtype=np.int64)
        np.add.at(W, (src, dst), w)
        for i in range(12):
            for j in range(12):
                d = abs(i - j)
                exc = 0
                if d <= 5 and (i != j or cfg.self_excitation):
                    exc = math.floor(cfg.exc_weight * scale * math.exp(-d * d / 4.5) + 0.5)
                inh = cfg.inh_weight * scale if i != j else 0
                assert W[i, j] == exc + inh, (i, j)

    def test_self_synapse_presence(self):
        for cfg, has in ((Dnf1dConfig.input_driven(), False), (Dnf1dConfig.self_sustained(), True)):
            src, dst, _ = field_synapses(build_dnf_1d(cfg))
            assert bool(np.any(src == dst)) is has

    def test_single_neuron_has_no_lateral(self):
        src, _, _ = field_synapses(build_dnf_1d(Dnf1dConfig.input_driven(n=1)))
        assert len(src) == 0

    def test_noise_and_input_channels(self):
        dn = build_dnf_1d(Dnf1dConfig.input_driven(), [InputBump(3, 0, 100)], seed=1)
        s = dn.net.synapses
        ext = s.src >= 12
        assert set(s.weight[ext].tolist()) == {200}
        assert len(dn.net.generators) == 24
        assert [len(t) > 0 for t in dn.input_spikes] == [False, False, True, True, True] + [False] * 7

    def test_invalid(self):
        with pytest.raises(ValueError):
            Dnf1dConfig(regime="bogus")
        with pytest.raises(ValueError):
            Dnf1dConfig(n=0)


def test_input_bump_profile():
    r = InputBump(5, 0, 10).rates(12)
    assert np.count_nonzero(r) == 3 and r[5] == 60.0
    assert r[4] == r[6] == pytest.approx(60 * math.exp(-0.5))


def test_input_schedule_seeded_and_windowed():
    a = input_schedule(12, [InputBump(3, 100, 200)], 1e-3, seed=5)
    b = input_schedule(12, [InputBump(3, 100, 200)], 1e-3, seed=5)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert all(((t >= 100) & (t < 200)).all() for t in a)


class TestTrackerBuild:
    tn = build_tracker(TrackerConfig())

    def test_table_values(self):
        cfg = TrackerConfig()
        assert cfg.layer_neuron.v_threshold == 40960
        assert cfg.pool_neuron.v_threshold == 57344
        assert (cfg.tau_v, cfg.tau_i, cfg.refractory, cfg.refractory_inh) == (20, 20, 12, 7)
        assert (cfg.exc_weight_l1, cfg.inh_weight_l1, cfg.exc_weight_l2, cfg.inh_weight_l2) == \
            (152, -41, 230, -41)
        assert (cfg.weight_to_pool, cfg.pool_weight_l1, cfg.pool_weight_l2) == (5, -20, -90)
        assert (cfg.weight_l1_to_l2, cfg.w_on, cfg.w_off) == (740, 70, -50)
        assert (cfg.p_connect, cfg.n_inh) == (0.6, 40)
        assert (cfg.input_sigma, cfg.exc_sigma, cfg.inh_sigma) == (1.5, 2.0, 4.0)

    def test_neuron_count(self):
        assert self.tn.net.n_neurons == 2 * 4096 + 2 * 40 == 8272

    def test_pool_weights_per_layer(self):
        s = self.tn.net.synapses
        for pool, layer, w in ((self.tn.pool1, self.tn.layer1, -20),
                               (self.tn.pool2, self.tn.layer2, -90)):
            back = (s.src >= pool.start) & (s.src < pool.stop)
            assert set(s.weight[back].tolist()) == {w}
            assert np.all((s.dst[back] >= layer.start) & (s.dst[back] < layer.stop))

    def test_no_pool_synapses_at_p_zero(self):
        tn = build_tracker(TrackerConfig(p_connect=0.0))
        s = tn.net.synapses
        pools = range(tn.pool1.start, tn.pool2.stop)
        touch = np.isin(s.src, pools) | np.isin(s.dst, pools)
        assert not touch.any()
        l1_to_l2 = (s.src < 4096) & (s.dst >= 4096) & (s.dst < 8192)
        assert l1_to_l2.sum() == 4096 and set(s.weight[l1_to_l2].tolist()) == {740}
        assert np.array_equal(s.dst[l1_to_l2] - 4096, s.src[l1_to_l2])

    def test_camera_drives_layer1_and_cue_layer2(self):
        spec = SyntheticSceneSpec.dot(center=(120.0, 90.0), velocity=(50.0, 0.0), duration=0.05)
        binned = bin_events(gen_synthetic_events(spec), 1e-3, 50)
        tn = build_tracker(TrackerConfig(), binned)
        s = tn.net.synapses
        groups = tn.net.populations
        for name in ("gen:on", "gen:off"):
            r = groups[name]
            m = (s.src >= r.start) & (s.src < r.stop)
            assert m.any() and np.all(s.dst[m] < 4096)
        r = groups["gen:cue"]
        m = (s.src >= r.start) & (s.src < r.stop)
        assert np.all((s.dst[m] >= 4096) & (s.dst[m] < 8192))

    def test_lateral_self_flags(self):
        for flag in (False, True):
            tn = build_tracker(TrackerConfig(self_connection_l1=flag, self_connection_l2=flag))
            s = tn.net.synapses
            assert bool(np.any((s.src == s.dst) & (s.src < 8192))) is flag


class TestCue:
    def test_invalid(self):
        with pytest.raises(ValueError):
            CueSpec(duration=0)
        with pytest.raises(ValueError):
            build_tracker(TrackerConfig(), cue=CueSpec((64, 3)))
        with pytest.raises(ValueError):
            build_tracker(TrackerConfig(), cue=CueSpec((-1, 3)))

    def test_amplitude_zero_has_no_effect(self):
        spec = SyntheticSceneSpec.dot(center=(100.0, 90.0), velocity=(60.0, 0.0), duration=0.2)
        binned = bin_events(gen_synthetic_events(spec, seed=2), 1e-3, 200)
        zero = run(build_tracker(TrackerConfig(), binned, CueSpec(amplitude=0)).net, 200)
        never = run(build_tracker(TrackerConfig(), binned, CueSpec(onset=10_000)).net, 200)
        assert zero.spikes == never.spikes

    def test_window(self):
        tn = build_tracker(TrackerConfig(), cue=CueSpec((10, 10), duration=7, onset=3))
        g = tn.net.generators[tn.net.populations["gen:cue"].start - tn.net.n_neurons]
        assert g.spike_times == tuple(range(3, 10))

    @pytest.mark.parametrize("which", [0, 1])
    def test_cue_selects_object(self, which):
        objs = [SceneObject(7.0, (60.0, 50.0), velocity=(60.0, 0.0)),
                SceneObject(7.0, (60.0, 130.0), velocity=(60.0, 0.0))]
        spec = SyntheticSceneSpec(objs, duration=0.3, events_per_crossing=3.0)
        ev = gen_synthetic_events(spec, seed=0)
        gt = ground_truth(spec, which)
        res = run_tracker(TrackerConfig(), ev, 300, cue=cue_from_davis(gt.x[0], gt.y[0]))
        got = res.trajectory.at(0.2)
        want = davis_to_grid(gt).at(0.2)
        assert np.hypot(*(got - want)) <= 3

    def test_single_step_cue_persists(self):
        """Duration-1 cue with strong amplitude; no camera input."""
        tn = build_tracker(TrackerConfig(), cue=CueSpec((32, 32), amplitude=3000, duration=1))
        l2 = run(tn.net, 600).spikes.select(tn.layer2)
        assert np.count_nonzero(l2.t >= 300) > 0

    @pytest.mark.parametrize("self2", [False, True])
    def test_sustained_cue_persists(self, self2):
        cfg = TrackerConfig(self_connection_l2=self2)
        tn = build_tracker(cfg, cue=CueSpec((32, 32), duration=50))
        l2 = run(tn.net, 600).spikes.select(tn.layer2).relabel(tn.layer2.start)
        late = l2.neuron[l2.t >= 300]
        assert len(late) > 100
        x, y = tn.layout.to_coord(late)
        assert abs(x.mean() - 32) < 2 and abs(y.mean() - 32) < 2


# --- regime properties --------------------------------------------------------

def window_frac(spikes, centre, t_min=200):
    post = spikes.neuron[spikes.t >= t_min]
    return float(np.mean(np.abs(post - centre) <= 2)) if len(post) else 0.0


@pytest.mark.parametrize("seed", range(6))
def test_selection(seed):
    res = run_dnf1d(Dnf1dConfig.input_driven(), "bimodal", seed=seed)
    assert max(window_frac(res.spikes, 3), window_frac(res.spikes, 8)) >= 0.95


@pytest.mark.parametrize("seed", range(4))
def test_first_come_persistence(seed):
    sp = run_dnf1d(Dnf1dConfig.input_driven(), "staggered", seed=seed).spikes
    assert len(sp) > 0
    assert np.mean(np.abs(sp.neuron - 8) <= 1) < 0.02


def test_input_driven_decays():
    cfg = Dnf1dConfig.input_driven()
    sp = run_dnf1d(cfg, "removal", seed=0).spikes
    assert np.count_nonzero(sp.t < 500) > 0
    assert np.count_nonzero(sp.t >= 500 + 5 * cfg.tau_v) == 0


def test_self_sustained_holds_position():
    sp = run_dnf1d(Dnf1dConfig.self_sustained(), "removal", seed=0).spikes
    before = sp.neuron[(sp.t >= 400) & (sp.t < 500)].mean()
    after = sp.neuron[sp.t >= 1000]
    assert len(after) > 0 and sp.t.max() >= 1499
    assert abs(after.mean() - before) <= 1


def active_regions(log, step, thresh=2):
    c = rect_filter_steps(log, 4096, step, 50).reshape(64, 64)
    return ndimage.label(c >= thresh)[1]


@pytest.mark.parametrize("k", [1, 3, 5])
def test_multi_bump_layer1_single_layer2(k):
    spec = SyntheticSceneSpec.ring_of_dots(n_dots=k, duration=0.5, events_per_crossing=3.0)
    ev = gen_synthetic_events(spec, seed=k)
    x, y = spec.objects[0].position(0.0)
    res = run_tracker(TrackerConfig(), ev, 500, cue=cue_from_davis(float(x), float(y)))
    for step in (300, 499):
        assert active_regions(res.layer1, step) == k
        assert active_regions(res.layer2, step) == 1


# --- config files ---------------------------------------------------------------

def test_dump_format():
    text = dump_config(TrackerConfig())
    lines = text.splitlines()
    assert lines[0] == "kind = tracker"
    assert "v_threshold = 40960" in lines and "cue_center = 32,32" in lines
    assert "self_connection_l2 = false" in lines


def test_load_errors():
    with pytest.raises(ValueError, match="kind"):
        load_config("n = 3\n")
    with pytest.raises(ValueError, match="unknown config key"):
        load_config("kind = dnf1d\nbogus = 1\n")
    with pytest.raises(ValueError, match="line 2"):
        load_config("kind = dnf1d\nno equals sign\n")
    with pytest.raises(ValueError):
        load_config("kind = dnf1d\nself_excitation = maybe\n")


def test_load_comments_and_partial():
    cfg = load_config("# tuned\nkind = dnf1d\nregime = self_sustained  # column\nn = 20\n")
    assert cfg == Dnf1dConfig(regime="self_sustained", n=20)


finite = dict(allow_nan=False, allow_infinity=False)


@settings(max_examples=100, deadline=None)
@given(n=st.integers(1, 64), regime=st.sampled_from(["input_driven", "self_sustained"]),
       w=st.integers(-500, 500), rate=st.floats(0, 1e3, **finite),
       flag=st.booleans(), exp=st.integers(0, 6), dt=st.floats(1e-6, 1.0, **finite))
def test_dnf1d_config_roundtrip(n, regime, w, rate, flag, exp, dt):
    cfg = Dnf1dConfig(n=n, regime=regime, exc_weight=w, noise_rate=rate, self_excitation=flag,
                      recurrent_weight_exponent=exp, dt=dt)
    assert load_config(dump_config(cfg)) == cfg


@settings(max_examples=100, deadline=None)
@given(side=st.integers(1, 128), w=st.integers(-1000, 1000), p=st.floats(0, 1, **finite),
       flags=st.tuples(st.booleans(), st.booleans()), cx=st.integers(0, 63),
       cy=st.integers(0, 63), amp=st.integers(-500, 500), sigma=st.floats(0.1, 10, **finite),
       dur=st.integers(1, 10_000), dt=st.floats(1e-6, 1.0, **finite))
def test_tracker_config_roundtrip(side, w, p, flags, cx, cy, amp, sigma, dur, dt):
    cfg = TrackerConfig(width=side, height=side + 1, exc_weight_l2=w, p_connect=p,
                        self_connection_l1=flags[0], self_connection_l2=flags[1], dt=dt,
                        cue=CueSpec((cx, cy), amp, sigma, dur, onset=dur // 2))
    text = dump_config(cfg)
    assert load_config(text) == cfg
    assert dump_config(load_config(text)) == text


def test_replace():
    cfg = replace(TrackerConfig(), dt=5e-4)
    assert cfg.dt == 5e-4 and TrackerConfig().dt == 1e-3
