import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from conftest import channel_for
from oracles import TX, gaussian_ber, grid_argmin

from mcvd.channel import ChannelParams, NetworkLayout
from mcvd.detection import VAR_FLOOR, ThresholdedLink, ber, ber_vector, floored, ml_threshold, threshold_link
from mcvd.errors import DomainError
from mcvd.stats import Allocation, LinkStats, Schedule, link_stats

# root of the likelihood equality for (2, 8, 1, 4), 50-digit evaluation
ML_ROOT_2_8_1_4 = 4.224735788365136
# upper-tail normal probability at 5
Q5 = 2.866515718791939e-07


class TestThreshold:
    def test_symmetric(self):
        assert ml_threshold(LinkStats(0, 10, 1, 1)) == 5.0

    def test_frozen_root(self):
        assert ml_threshold(LinkStats(2, 8, 1, 4)) == pytest.approx(ML_ROOT_2_8_1_4, rel=1e-14)

    def test_grid_oracle(self):
        xs = np.linspace(2, 8, 100_001)[1:-1]
        x, _ = grid_argmin(lambda x: gaussian_ber(2, 8, 1, 4, x), xs)
        assert abs(ml_threshold(LinkStats(2, 8, 1, 4)) - x) <= xs[1] - xs[0]

    def test_shrinking_gap_tends_to_midpoint(self):
        for eps in (1.0, 1e-2, 1e-4):
            tau = ml_threshold(LinkStats(10 - eps, 10, 3.0, 3.0 + eps))
            assert 10 - eps < tau < 10
            assert abs(tau - (10 - eps / 2)) <= eps / 2

    def test_no_crossing_falls_back_inside(self):
        # a gap well below one molecule with unequal spread has no crossing between the means
        st_ = LinkStats(5.0, 5.2, 1.0, 9.0)
        tau = ml_threshold(st_)
        assert 5.0 < tau < 5.2
        grid = np.linspace(5.0, 5.2, 20001)[1:-1]
        x, v = grid_argmin(lambda x: gaussian_ber(5.0, 5.2, 1.0, 9.0, x), grid)
        assert ber(st_, tau) <= v + 1e-12

    @pytest.mark.parametrize("bad", [LinkStats(1, 1, 1, 1), LinkStats(2, 1, 1, 1), LinkStats(0, 1, 0, 1)])
    def test_preconditions(self, bad):
        with pytest.raises(DomainError):
            ml_threshold(bad)

    def test_thresholded_link_invariant(self):
        with pytest.raises(DomainError):
            ThresholdedLink(LinkStats(0, 10, 1, 1), 10.0)
        link = threshold_link(LinkStats(0, 10, 0, 1))
        assert link.stats.var0 == VAR_FLOOR and 0 < link.tau < 10


class TestBer:
    def test_reference_value(self):
        assert ber(LinkStats(0, 10, 1, 1), 5.0) == pytest.approx(Q5, rel=1e-9)

    def test_indistinguishable(self):
        for tau in (-3.0, 0.0, 7.5):
            assert ber(LinkStats(2, 2, 4, 4), tau) == pytest.approx(0.5, abs=1e-16)

    def test_threshold_far_below(self):
        assert ber(LinkStats(0, 10, 1, 1), -1e6) == 0.5

    def test_nonpositive_variance(self):
        with pytest.raises(DomainError):
            ber(LinkStats(0, 1, 0, 1), 0.5)

    def test_floored(self):
        assert floored(LinkStats(0, 1, 0, 2)).as_tuple() == (0, 1, VAR_FLOOR, 2)


moments = st.tuples(st.floats(-50, 50), st.floats(0.5, 100), st.floats(0.05, 50), st.floats(0.05, 50))


class TestProperties:
    @given(moments)
    def test_threshold_between_means(self, m):
        mu0, gap, v0, v1 = m
        tau = ml_threshold(LinkStats(mu0, mu0 + gap, v0, v1))
        assert mu0 < tau < mu0 + gap

    @given(moments, st.floats(-20, 20), st.floats(0.1, 10))
    def test_affine_covariance(self, m, a, b):
        mu0, gap, v0, v1 = m
        tau = ml_threshold(LinkStats(mu0, mu0 + gap, v0, v1))
        scaled = ml_threshold(LinkStats(a + b * mu0, a + b * (mu0 + gap), b * b * v0, b * b * v1))
        assert scaled == pytest.approx(a + b * tau, rel=1e-7, abs=1e-7 * (1 + abs(a) + b * abs(tau)))

    @given(moments)
    def test_ml_beats_midpoint(self, m):
        mu0, gap, v0, v1 = m
        st_ = LinkStats(mu0, mu0 + gap, v0, v1)
        assert ber(st_, ml_threshold(st_)) <= ber(st_, mu0 + gap / 2) + 1e-15

    @given(moments, st.floats(0.01, 0.99), st.floats(0.0, 20.0))
    def test_monotone_in_means(self, m, frac, delta):
        mu0, gap, v0, v1 = m
        tau = mu0 + frac * gap
        base = ber(LinkStats(mu0, mu0 + gap, v0, v1), tau)
        assume(0 < base < 0.5)
        assert ber(LinkStats(mu0, mu0 + gap + delta, v0, v1), tau) <= base + 1e-15
        assert ber(LinkStats(mu0 - delta, mu0 + gap, v0, v1), tau) <= base + 1e-15

    @given(moments)
    def test_range(self, m):
        mu0, gap, v0, v1 = m
        st_ = LinkStats(mu0, mu0 + gap, v0, v1)
        assert 0.0 <= ber(st_, ml_threshold(st_)) <= 0.5


class TestBerVector:
    def test_strong_single_link(self):
        ch = channel_for()
        lay = NetworkLayout(TX[:1])
        assert ber_vector(Schedule([1e-4]), Allocation([10_000]), ch, lay, 0)[0] < 1e-12

    def test_no_signal_is_half(self):
        ch, lay = channel_for(), NetworkLayout(TX)
        out = ber_vector(Schedule.uniform(4.5e-3, 3), Allocation([0, 0, 0]), ch, lay, 3)
        assert out.tolist() == [0.5, 0.5, 0.5]

    def test_relabelling_symmetry(self):
        # equidistant sources inside the sphere, no drift: every leak difference is negative and
        # clamps to zero, so a transmitter's BER depends only on its own slot and molecules
        ch = ChannelParams(4.5e-9, np.zeros(3), np.zeros(3), 45e-6)
        pos = 10e-6 * np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
        ts, A = np.array([1e-3, 2e-3, 3e-3]), np.array([5.0, 9.0, 14.0])
        base = ber_vector(Schedule(ts), Allocation(A), ch, NetworkLayout(pos), 3)
        for s in range(1, 4):
            assert link_stats(s, Schedule(ts), Allocation(A), ch, NetworkLayout(pos), 3).mu0 == 0.0
        for perm in ([2, 0, 1], [1, 0, 2], [2, 1, 0]):
            out = ber_vector(Schedule(ts[perm]), Allocation(A[perm]), ch, NetworkLayout(pos[perm]), 3)
            assert np.array_equal(out, base[perm])

    def test_matches_kernel(self, mode_model):
        ts, A = np.array([1e-3, 2e-3, 3e-3]), np.array([150.0, 300.0, 600.0])
        comp = ber_vector(Schedule(ts), Allocation(A), mode_model.channel, mode_model.layout, 3)
        assert comp == pytest.approx(mode_model.ber_vector(ts, A), rel=1e-12, abs=1e-300)
        assert math.isclose(mode_model.objective(ts, A), comp.mean(), rel_tol=1e-12)


@pytest.mark.slow
class TestAgainstFrames:
    def _run(self, T):
        from mcvd.simulator import SimConfig, simulate_frames

        ch, lay = channel_for(), NetworkLayout(TX)
        sch, al = Schedule.uniform(T, 3), Allocation.uniform(600, 3)
        analytic = ber_vector(sch, al, ch, lay, 3, "corrected")
        rep = simulate_frames(sch, al, ch, lay, SimConfig(n_frames=10**6, seed=31))
        se = np.sqrt(np.maximum(analytic * (1 - analytic), 1e-300) / rep.n_frames)
        return analytic, rep.ber, se

    def test_stsn_frame_4_5ms(self):
        # the Gaussian count approximation is off by several binomial errors for TX-2 here
        analytic, emp, se = self._run(4.5e-3)
        assert np.all(np.abs(emp - analytic) <= 3 * se), (analytic, emp)

    def test_stsn_frame_reference_length(self):
        analytic, emp, se = self._run(4.276e-3)
        assert np.all(np.abs(emp - analytic) <= 3 * se), (analytic, emp)
