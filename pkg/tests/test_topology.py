import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dnftrack.core import NetworkError, NeuronParams, Synapses
from dnftrack.topology import (InhibitionPoolSpec, KernelSpec, NetworkBuilder, PopulationLayout,
                               connect_direct_global_inhibition, connect_global_inhibition,
                               connect_lateral, connect_one_to_one, gaussian_fanout,
                               kernel_weight, round_half_away, weight_matrix,
                               write_connectivity_csv)

POOL = NeuronParams(896 * 64, 20, 20, 7)


def brute_weight(a_exc, s_exc, a_inh, s_inh, d):
    w = a_exc * math.exp(-d * d / (2 * s_exc * s_exc))
    if a_inh:
        w -= a_inh * math.exp(-d * d / (2 * s_inh * s_inh))
    return int(math.copysign(math.floor(abs(w) + 0.5), w))


def brute_lateral(dims, spec):
    if len(dims) == 1:
        coords = [(i,) for i in range(dims[0])]
    else:
        coords = [(x, y) for y in range(dims[1]) for x in range(dims[0])]
    out = {}
    for i, a in enumerate(coords):
        for j, b in enumerate(coords):
            d = math.dist(a, b)
            if d > spec.cutoff_radius or (i == j and not spec.include_self):
                continue
            w = brute_weight(spec.a_exc, spec.sigma_exc, spec.a_inh, spec.sigma_inh, d)
            if w:
                out[(i, j)] = w
    return out


def as_dict(syn):
    return {(s.src, s.dst): s.weight for s in syn}


class TestKernelWeight:
    def test_examples(self):
        assert kernel_weight(KernelSpec(200, 1.5), 0) == 200
        assert kernel_weight(KernelSpec(200, 1.5), 1.5) == 121
        assert kernel_weight(KernelSpec(152, 2, 41, 4), 2) == 56

    def test_self_and_cutoff(self):
        spec = KernelSpec(200, 1.5, include_self=False)
        assert kernel_weight(spec, 0) == 0
        assert spec.cutoff_radius == 5
        assert kernel_weight(spec, 5.01) == 0
        assert KernelSpec(1, 2, 1, 4).cutoff_radius == 12

    def test_invalid(self):
        with pytest.raises(NetworkError):
            KernelSpec(1, 0)
        with pytest.raises(NetworkError):
            KernelSpec(1, 2, 1, 1)
        with pytest.raises(NetworkError):
            kernel_weight(KernelSpec(1, 1), -1)

    def test_round_half_away(self):
        x = np.array([0.5, -0.5, 1.5, -1.5, 2.4999, -2.5])
        assert round_half_away(x).tolist() == [1, -1, 2, -2, 2, -3]

    @pytest.mark.parametrize("a_exc", [152, 230])
    def test_mexican_hat_single_crossover(self, a_exc):
        spec = KernelSpec(a_exc, 2, 41, 4)
        d = np.linspace(0, spec.cutoff_radius, 2001)
        pos = np.array([kernel_weight(spec, float(x)) > 0 for x in d])
        assert pos[0] and not pos[-1]
        assert np.count_nonzero(pos[1:] != pos[:-1]) == 1


class TestLateral:
    def test_empty_single_neuron(self):
        assert len(connect_lateral(PopulationLayout.line(1), KernelSpec(200, 1.5,
                                                                         include_self=False))) == 0

    def test_table1_1d_matches_brute_force(self):
        spec = KernelSpec(200, 1.5, include_self=False)
        syn = connect_lateral(PopulationLayout.line(12), spec)
        assert as_dict(syn) == brute_lateral((12,), spec)
        assert len(syn) == len(brute_lateral((12,), spec))

    @pytest.mark.parametrize("dims,spec", [
        ((16, 16), KernelSpec(152, 2, 41, 4)),
        ((9, 5), KernelSpec(230, 2, 41, 4, include_self=False)),
        ((7, 12), KernelSpec(70, 1.5)),
    ])
    def test_2d_matches_brute_force(self, dims, spec):
        syn = connect_lateral(PopulationLayout(dims), spec)
        assert as_dict(syn) == brute_lateral(dims, spec)

    def test_translation_covariance(self):
        layout = PopulationLayout.grid(30, 30)
        spec = KernelSpec(152, 2, 41, 4, cutoff_radius=6)
        W = weight_matrix(layout.size, layout.size, connect_lateral(layout, spec))

        def profile(x, y):
            return W[layout.to_id(x, y)].reshape(30, 30)[y - 6:y + 7, x - 6:x + 7]
        ref = profile(6, 6)
        for x, y in [(10, 8), (23, 23), (15, 6)]:
            assert np.array_equal(profile(x, y), ref)

    def test_boundary_truncation(self):
        layout = PopulationLayout.grid(10, 10)
        syn = connect_lateral(layout, KernelSpec(100, 1.0))
        corner = syn.dst[syn.src == 0]
        centre = syn.dst[syn.src == layout.to_id(5, 5)]
        assert len(corner) < len(centre)
        assert set(corner.tolist()) <= set(range(100))


@settings(max_examples=100, deadline=None)
@given(w=st.integers(1, 12), h=st.integers(1, 12), a=st.floats(1, 300),
       se=st.floats(0.5, 3), ratio=st.floats(1.1, 3), ai=st.floats(0, 100),
       self_=st.booleans())
def test_lateral_symmetry(w, h, a, se, ratio, ai, self_):
    layout = PopulationLayout.grid(w, h)
    spec = KernelSpec(a, se, ai, se * ratio if ai > 0 else 0.0, include_self=self_)
    W = weight_matrix(layout.size, layout.size, connect_lateral(layout, spec))
    assert np.array_equal(W, W.T)
    if not self_:
        assert np.all(np.diag(W) == 0)


class TestLayout:
    def test_bijection(self):
        layout = PopulationLayout.grid(7, 5)
        ids = np.arange(layout.size)
        x, y = layout.to_coord(ids)
        assert np.array_equal(layout.to_id(x, y), ids)
        assert layout.coords()[8].tolist() == [1, 1]

    def test_contains(self):
        layout = PopulationLayout.grid(64, 64)
        assert layout.contains(0, 63) and not layout.contains(64, 0)
        assert not layout.contains(-1, 3)

    def test_invalid(self):
        with pytest.raises(Exception):
            PopulationLayout.line(0)


class TestInhibition:
    layout = PopulationLayout.grid(64, 64)

    def pool(self, p, n_inh=40):
        return InhibitionPoolSpec(n_inh, p, 5, -90, POOL)

    def test_p_zero(self):
        ip = connect_global_inhibition(self.layout, self.pool(0.0))
        assert len(ip.to_pool) == len(ip.from_pool) == 0

    def test_p_one(self):
        ip = connect_global_inhibition(self.layout, self.pool(1.0))
        assert len(ip.to_pool) == len(ip.from_pool) == 4096 * 40
        assert set(ip.to_pool.weight.tolist()) == {5}
        assert set(ip.from_pool.weight.tolist()) == {-90}

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_binomial_counts(self, seed):
        ip = connect_global_inhibition(self.layout, self.pool(0.6), seed=seed)
        for syn in (ip.to_pool, ip.from_pool):
            assert abs(len(syn) - 98304) < 800

    def test_directions_independent(self):
        ip = connect_global_inhibition(self.layout, self.pool(0.6), seed=4)
        fwd = set(zip(ip.to_pool.src.tolist(), ip.to_pool.dst.tolist()))
        back = set(zip(ip.from_pool.dst.tolist(), ip.from_pool.src.tolist()))
        assert fwd != back
        # overlap of two independent 0.6 masks is about 0.36 of all pairs
        assert abs(len(fwd & back) / 163840 - 0.36) < 0.01

    def test_seeded(self):
        a = connect_global_inhibition(self.layout, self.pool(0.6), seed=9)
        b = connect_global_inhibition(self.layout, self.pool(0.6), seed=9)
        assert np.array_equal(a.to_pool.src, b.to_pool.src)

    def test_invalid_spec(self):
        with pytest.raises(NetworkError):
            self.pool(1.5)
        with pytest.raises(NetworkError):
            InhibitionPoolSpec(40, 0.5, 5, 3, POOL)

    def test_direct(self):
        syn = connect_direct_global_inhibition(PopulationLayout.line(12), -160)
        assert len(syn) == 132 and set(syn.weight.tolist()) == {-160}
        assert np.all(syn.src != syn.dst)
        assert len(connect_direct_global_inhibition(PopulationLayout.line(1), -160)) == 0
        assert len(connect_direct_global_inhibition(PopulationLayout.line(12), 0)) == 0
        assert len(connect_direct_global_inhibition(PopulationLayout.line(3), -1, True)) == 9
        with pytest.raises(NetworkError):
            connect_direct_global_inhibition(PopulationLayout.line(12), 5)


class TestOneToOne:
    def test_table2(self):
        L = PopulationLayout.grid(64, 64)
        syn = connect_one_to_one(L, L, 740)
        assert len(syn) == 4096 and set(syn.weight.tolist()) == {740}

    def test_zero_weight_and_identity(self):
        L = PopulationLayout.grid(2, 2)
        syn = connect_one_to_one(L, L, 0)
        assert list(zip(syn.src.tolist(), syn.dst.tolist())) == [(0, 0), (1, 1), (2, 2), (3, 3)]
        assert syn.weight.tolist() == [0, 0, 0, 0]

    def test_mismatch(self):
        with pytest.raises(NetworkError):
            connect_one_to_one(PopulationLayout.grid(2, 2), PopulationLayout.grid(4, 1), 1)


def test_gaussian_fanout_signs():
    L = PopulationLayout.grid(64, 64)
    on = gaussian_fanout(L, 70, 1.5)
    off = gaussian_fanout(L, -50, 1.5)
    c = L.to_id(32, 32)
    w_on = dict(zip(on.dst[on.src == c].tolist(), on.weight[on.src == c].tolist()))
    assert w_on[c] == 70 and w_on[L.to_id(33, 32)] == brute_weight(70, 1.5, 0, 0, 1)
    assert np.all(off.weight < 0)


def test_builder_shifts_ids():
    b = NetworkBuilder()
    a = b.add_population("a", 3, NeuronParams(64, 2, 2))
    c = b.add_population("c", 2, NeuronParams(128, 2, 2))
    g = b.add_generators("g", [("poisson", 5.0), ("scripted", [1, 4])])
    b.connect("a", "c", Synapses([2], [1], [7]))
    b.connect("g", "a", Synapses([1], [0], [3]))
    b.connect("a", "a", Synapses([0], [1], [0]))  # zero weight dropped
    net = b.build()
    assert a == range(0, 3) and c == range(3, 5) and g == range(0, 2)
    assert net.populations["gen:g"] == range(5, 7)
    assert sorted(zip(net.synapses.src.tolist(), net.synapses.dst.tolist(),
                      net.synapses.weight.tolist())) == [(2, 4, 7), (6, 0, 3)]
    assert net.v_threshold.tolist() == [64, 64, 64, 128, 128]
    assert net.generators[1].spike_times == (1, 4)
    with pytest.raises(NetworkError):
        b.add_population("a", 1, NeuronParams(64, 2, 2))
    with pytest.raises(NetworkError):
        b.connect("nope", "a", Synapses())


def test_connectivity_csv(tmp_path):
    write_connectivity_csv(tmp_path / "c.csv", Synapses([0, 1], [1, 0], [5, -3], [0, 2]))
    assert (tmp_path / "c.csv").read_text() == "src,dst,weight,delay\n0,1,5,0\n1,0,-3,2\n"
