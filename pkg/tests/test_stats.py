import logging
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import channel_for
from oracles import TX, enumerate_mixture

from mcvd.channel import ChannelParams, NetworkLayout, arrival_probability
from mcvd.errors import DomainError
from mcvd.simulator import SimConfig, simulate_arrival, simulate_frames
from mcvd.stats import (
    Allocation,
    MomentMode,
    Schedule,
    intra_frame_leak_prob,
    iui_leak_prob,
    leak_variance,
    link_stats,
    link_table,
    slot_offset,
)

PAPER, CORR = MomentMode.PAPER_EXACT, MomentMode.CORRECTED_MIXTURE


def far_layout():
    # sources so far away that nothing ever arrives
    return NetworkLayout(np.array([[1.0, 0, 0], [2.0, 0, 0], [3.0, 0, 0]]))


class TestTypes:
    def test_schedule(self):
        s = Schedule([1e-3, 2e-3])
        assert s.r == 2 and s.frame_length == pytest.approx(3e-3)
        assert Schedule.uniform(9e-3, 3).slot_durations.tolist() == pytest.approx([3e-3] * 3)
        for bad in ([], [0.0], [-1.0], [math.nan]):
            with pytest.raises(DomainError):
                Schedule(bad)

    def test_allocation(self):
        assert Allocation.uniform(600, 3).molecules.tolist() == [200.0] * 3
        with pytest.raises(DomainError):
            Allocation([-1.0])

    def test_mode_parse(self):
        assert MomentMode.parse("paper") is PAPER
        assert MomentMode.parse("Corrected") is CORR
        with pytest.raises(DomainError):
            MomentMode.parse("exact")


class TestSlotOffset:
    def test_examples(self):
        t = Schedule([1.0, 1.0, 1.0])
        assert slot_offset(1, 3, 1, t) == 2.0
        assert slot_offset(2, 1, 3, t) == 9.0

    @pytest.mark.parametrize("u,j,s", [(1, 3, 0), (0, 1, 1), (1, 4, 1), (1, 0, 2)])
    def test_index_errors(self, u, j, s):
        with pytest.raises(DomainError):
            slot_offset(u, j, s, Schedule([1.0, 1.0, 1.0]))

    @given(st.lists(st.floats(1e-4, 1e-2), min_size=1, max_size=5), st.integers(1, 4), st.data())
    def test_matches_definition(self, ts, u, data):
        sch = Schedule(ts)
        r = sch.r
        j = data.draw(st.integers(1, r))
        s = data.draw(st.integers(1, r))
        expected = (u - 1) * sum(ts) + sum(ts[j - 1 :]) + sum(ts[:s])
        assert slot_offset(u, j, s, sch) == pytest.approx(expected, rel=1e-14)


class TestLeakProbabilities:
    def test_zero_channel(self):
        ch, lay, sch = channel_for(), far_layout(), Schedule.uniform(4.5e-3, 3)
        assert iui_leak_prob(1, 2, 1, sch, ch, lay) == 0.0
        assert intra_frame_leak_prob(1, 3, sch, ch, lay) == 0.0

    def test_same_tx_vanishing_slot(self):
        ch, lay = channel_for(), NetworkLayout(TX)
        sch = Schedule([1.5e-3, 1.5e-3, 1e-12])
        assert iui_leak_prob(1, 3, 3, sch, ch, lay) < 1e-6

    def test_intra_dispersal(self):
        ch, lay = channel_for(), NetworkLayout(TX)
        assert intra_frame_leak_prob(2, 3, Schedule([1e-3, 1e-3, 50.0]), ch, lay) < 1e-12

    def test_intra_order_error(self):
        ch, lay, sch = channel_for(), NetworkLayout(TX), Schedule.uniform(4.5e-3, 3)
        for j, s in ((2, 2), (3, 1)):
            with pytest.raises(DomainError):
                intra_frame_leak_prob(j, s, sch, ch, lay)

    def test_clamp_is_logged(self, caplog):
        ch, lay, sch = channel_for(), NetworkLayout(TX), Schedule.uniform(4.5e-3, 3)
        with caplog.at_level(logging.WARNING, logger="mcvd.stats"):
            assert iui_leak_prob(1, 2, 1, sch, ch, lay) == 0.0
        assert any("clamped" in rec.message for rec in caplog.records)

    def _mc_difference(self, ch, first, t_first, second, t_second, seed):
        cfg = SimConfig(n_particles=400_000, seed=seed)
        a = simulate_arrival(ch, first, t_first, cfg, stream=1)
        b = simulate_arrival(ch, second, t_second, cfg, stream=2)
        return a.prob - b.prob, math.hypot(a.stderr, b.stderr)

    def test_iui_against_particles(self):
        ch, lay, sch = channel_for(), NetworkLayout(TX), Schedule.uniform(4.5e-3, 3)
        lam = slot_offset(1, 2, 1, sch)
        diff, se = self._mc_difference(ch, TX[1], lam, TX[0], lam - 1.5e-3, seed=8)
        y = iui_leak_prob(1, 2, 1, sch, ch, lay)
        # the difference is negative here and the model clamps it
        assert diff + 3 * se < 0 and y == 0.0
        lam = slot_offset(1, 1, 3, sch)
        diff, se = self._mc_difference(ch, TX[0], lam, TX[2], lam - 1.5e-3, seed=9)
        assert abs(iui_leak_prob(1, 1, 3, sch, ch, lay) - diff) <= 3 * se

    def test_intra_against_particles(self):
        ch, lay, sch = channel_for(), NetworkLayout(TX), Schedule.uniform(4.5e-3, 3)
        diff, se = self._mc_difference(ch, TX[0], 3e-3, TX[1], 1.5e-3, seed=10)
        assert abs(intra_frame_leak_prob(1, 2, sch, ch, lay) - diff) <= 3 * se


class TestLinkStats:
    def test_no_memory_first_slot(self):
        ch, lay, sch = channel_for(), NetworkLayout(TX), Schedule.uniform(4.5e-3, 3)
        st_ = link_stats(1, sch, Allocation([300, 200, 100]), ch, lay, 0)
        p = arrival_probability(ch, TX[0], 1.5e-3)
        assert (st_.mu0, st_.var0) == (0.0, 0.0)
        assert st_.mu1 == pytest.approx(300 * p)
        assert st_.var1 == pytest.approx(300 * p * (1 - p))

    def test_single_active_link(self):
        ch, lay, sch = channel_for(), NetworkLayout(TX), Schedule.uniform(4.5e-3, 3)
        st_ = link_stats(3, sch, Allocation([0, 0, 400]), ch, lay, 0)
        p = arrival_probability(ch, TX[2], 1.5e-3)
        assert st_.as_tuple() == pytest.approx((0.0, 400 * p, 0.0, 400 * p * (1 - p)))

    def test_errors(self):
        ch, lay, sch = channel_for(), NetworkLayout(TX), Schedule.uniform(4.5e-3, 3)
        with pytest.raises(DomainError):
            link_stats(1, sch, Allocation([1, 2]), ch, lay, 1)
        with pytest.raises(DomainError):
            link_stats(4, sch, Allocation([1, 2, 3]), ch, lay, 1)
        with pytest.raises(DomainError):
            link_stats(1, sch, Allocation([1, 2, 3]), ch, lay, -1)

    def test_leak_variance_modes_differ(self):
        assert leak_variance(10, 0.3, CORR) == pytest.approx(0.5 * 3 * 0.7 + 0.25 * 100 * 0.09)
        assert leak_variance(10, 0.3, PAPER) == pytest.approx(0.5 * (3 - 10 * 0.09 * (0.5 - 12.5)))
        assert leak_variance(10, 0.3, PAPER) != pytest.approx(leak_variance(10, 0.3, CORR))

    def test_kernel_table_matches_composition(self):
        ch, lay = channel_for(), NetworkLayout(TX)
        sch, al = Schedule([1e-3, 2.5e-3, 4e-3]), Allocation([150, 320, 700])
        for mode in (PAPER, CORR):
            tab = link_table(sch, al, ch, lay, 3, mode)
            for s in range(1, 4):
                assert tab[s - 1] == pytest.approx(link_stats(s, sch, al, ch, lay, 3, mode).as_tuple(), rel=1e-13)


def _r2_setup():
    ch = channel_for()
    lay = NetworkLayout(TX[[0, 2]])
    return ch, lay


class TestBruteForce:
    @pytest.mark.parametrize("ts", [[1e-3, 2e-3], [2e-3, 0.5e-3], [4e-3, 6e-3]])
    @pytest.mark.parametrize("A", [[120, 480], [300, 300], [37, 800]])
    def test_r2_u1_enumeration(self, ts, A):
        ch, lay = _r2_setup()
        sch, al = Schedule(ts), Allocation(A)
        for s in (1, 2):
            leaks = [(A[j - 1], iui_leak_prob(1, j, s, sch, ch, lay)) for j in (1, 2)]
            leaks += [(A[j - 1], intra_frame_leak_prob(j, s, sch, ch, lay)) for j in range(1, s)]
            p = arrival_probability(ch, lay.positions[s - 1], ts[s - 1])
            m0, v0 = enumerate_mixture(leaks)
            own_only = enumerate_mixture(leaks + [(A[s - 1], p)])
            # condition on the own bit being 1: remove the own term's bit variance
            m1 = m0 + A[s - 1] * p
            v1 = v0 + A[s - 1] * p * (1 - p)
            got = link_stats(s, sch, al, ch, lay, 1, CORR)
            assert got.mu0 == pytest.approx(m0, rel=1e-12, abs=1e-12)
            assert got.var0 == pytest.approx(v0, rel=1e-12, abs=1e-12)
            assert got.mu1 == pytest.approx(m1, rel=1e-12, abs=1e-12)
            assert got.var1 == pytest.approx(v1, rel=1e-12, abs=1e-12)
            # sanity of the oracle itself: the unconditional mixture adds the own term as a fair bit
            assert own_only[0] == pytest.approx(m0 + 0.5 * A[s - 1] * p, abs=1e-12)

    def test_published_variance_differs_from_enumeration(self):
        ch, lay = _r2_setup()
        sch, al = Schedule([2e-3, 2e-3]), Allocation([300, 300])
        got = link_stats(2, sch, al, ch, lay, 1, PAPER)
        leaks = [(300, iui_leak_prob(1, j, 2, sch, ch, lay)) for j in (1, 2)]
        leaks.append((300, intra_frame_leak_prob(1, 2, sch, ch, lay)))
        _, v0 = enumerate_mixture(leaks)
        assert v0 > 0 and abs(got.var0 - v0) > 1e-3 * v0


positive_t = st.floats(1e-4, 8e-3)


class TestProperties:
    @given(st.tuples(positive_t, positive_t, positive_t), st.tuples(*[st.floats(0, 900)] * 3),
           st.integers(0, 4), st.integers(1, 3), st.sampled_from([PAPER, CORR]))
    def test_structure(self, ts, A, U, s, mode):
        ch, lay = channel_for(), NetworkLayout(TX)
        st_ = link_stats(s, Schedule(ts), Allocation(A), ch, lay, U, mode)
        p = arrival_probability(ch, TX[s - 1], ts[s - 1])
        assert st_.mu1 - st_.mu0 == pytest.approx(A[s - 1] * p, rel=1e-12, abs=1e-9)
        assert st_.var1 - st_.var0 == pytest.approx(A[s - 1] * p * (1 - p), rel=1e-12, abs=1e-9)
        other = link_stats(s, Schedule(ts), Allocation(A), ch, lay, U, CORR if mode is PAPER else PAPER)
        assert (other.mu0, other.mu1) == (st_.mu0, st_.mu1)

    @given(st.tuples(positive_t, positive_t, positive_t), st.integers(1, 3), st.sampled_from([PAPER, CORR]))
    def test_monotone_in_memory(self, ts, s, mode):
        ch, lay, al = channel_for(), NetworkLayout(TX), Allocation([200, 200, 200])
        prev = link_stats(s, Schedule(ts), al, ch, lay, 0, mode)
        for U in range(1, 6):
            cur = link_stats(s, Schedule(ts), al, ch, lay, U, mode)
            assert cur.mu0 >= prev.mu0 and cur.var0 >= prev.var0
            prev = cur


@pytest.mark.slow
def test_moments_against_simulation():
    ch, lay, sch, al = channel_for(), NetworkLayout(TX), Schedule.uniform(4.5e-3, 3), Allocation.uniform(600, 3)
    rep = simulate_frames(sch, al, ch, lay, SimConfig(n_frames=200_000, seed=21, leak_model="modeled"))
    for s in range(1, 4):
        st_ = link_stats(s, sch, al, ch, lay, 3, CORR)
        for est, ref, se in zip(
            (rep.mu0[s - 1], rep.mu1[s - 1], rep.var0[s - 1], rep.var1[s - 1]),
            st_.as_tuple(),
            (rep.mu0_se[s - 1], rep.mu1_se[s - 1], rep.var0_se[s - 1], rep.var1_se[s - 1]),
        ):
            assert abs(est - ref) <= max(4 * se, 1e-12)
