import math

import numpy as np
import pytest

from simulator.channel import compute_gain_matrix, los_gain
from simulator.geometry import TransmitterLayout, build_bulb, build_cluster_layout, grid_receivers, make_receiver
from simulator.metrics import (
    average_sir,
    combine_optimal,
    combine_optimal_linear,
    ecdf,
    from_db,
    illumination_stats,
    layout_gains,
    mean_placement_sir,
    pair_sirs,
    room_size_sweep,
    sample_pair,
    sample_placements,
    sinr_at,
    sinr_cdf,
    sinr_field,
    sinr_linear,
    sinr_samples,
    sir_map,
    sir_two_receivers,
    three_region_surface,
    to_db,
)
from simulator.models import (
    ClusterType,
    NoiseModel,
    Partition,
    PdElement,
    SinrScenario,
    SirPolicy,
    SirStatus,
    TransmitterBoard,
)
from simulator.partition import bisector_partition
from simulator.rng import stream


def _down_board(board_id, x, y, power=1.0):
    return TransmitterBoard(
        id=board_id, position=(x, y, 3.0), orientation=(0.0, 0.0, -1.0),
        divergence_angle=90.0, half_intensity_angle=60.0, power=power,
    )


@pytest.fixture
def two_board_setup(small_room):
    boards = [_down_board(0, 1.0, 2.0, power=0.5), _down_board(1, 3.0, 2.0, power=0.8)]
    receivers = [make_receiver(1, 1.2, 2.0), make_receiver(2, 2.9, 2.3)]
    gains = compute_gain_matrix(boards, receivers, small_room)
    return boards, receivers, gains


class TestDecibels:
    def test_scalar(self):
        assert to_db(100.0) == pytest.approx(20.0)
        assert to_db(0.0) == -math.inf
        assert from_db(30.0) == pytest.approx(1000.0)

    def test_array(self):
        values = to_db(np.array([1.0, 10.0, 0.0]))
        assert values[:2] == pytest.approx([0.0, 10.0])
        assert values[2] == -np.inf
        assert from_db(np.array([0.0, 10.0])) == pytest.approx([1.0, 10.0])


class TestSirTwoReceivers:
    def test_matches_hand_expansion(self, two_board_setup, small_room):
        boards, receivers, gains = two_board_setup
        partition = bisector_partition((1.2, 2.0), (2.9, 2.3), boards, small_room)
        assert partition.boards_of(1) == {0}
        report = sir_two_receivers(partition, gains, boards, receivers)

        pd = PdElement()
        s11 = 0.5 * los_gain(boards[0], pd, (1.2, 2.0, 0.0))
        s12 = 0.8 * los_gain(boards[1], pd, (1.2, 2.0, 0.0))
        s22 = 0.8 * los_gain(boards[1], pd, (2.9, 2.3, 0.0))
        s21 = 0.5 * los_gain(boards[0], pd, (2.9, 2.3, 0.0))
        assert report.per_receiver_sir[1] == pytest.approx(s11 / s12, rel=1e-12)
        assert report.per_receiver_sir[2] == pytest.approx(s22 / s21, rel=1e-12)
        assert report.per_receiver[1].status == SirStatus.OK

        mean = average_sir(report)
        assert mean.value == pytest.approx((s11 / s12 + s22 / s21) / 2, rel=1e-12)
        assert mean.status == SirStatus.OK

    def test_flags(self, two_board_setup):
        boards, receivers, gains = two_board_setup
        partition = Partition(
            assignment={0: 2, 1: 2},
            receiver_positions_snapshot={1: (1.2, 2.0), 2: (2.9, 2.3)},
        )
        report = sir_two_receivers(partition, gains, boards, receivers)
        assert report.per_receiver[1].status == SirStatus.ZERO_SIGNAL
        assert report.per_receiver[1].sir == 0.0
        assert report.per_receiver[2].status == SirStatus.INFINITE
        assert report.per_receiver[2].sir == math.inf

        mean = average_sir(report, SirPolicy(sir_cap_db=30.0))
        assert mean.status == SirStatus.ZERO_SIGNAL
        assert mean.value == pytest.approx(500.0)

    def test_partition_must_cover_boards(self, two_board_setup):
        boards, receivers, gains = two_board_setup
        partial = Partition(assignment={0: 1}, receiver_positions_snapshot={1: (0.0, 0.0)})
        with pytest.raises(ValueError):
            sir_two_receivers(partial, gains, boards, receivers)

    def test_scaling_every_board_power_keeps_sir(self, two_board_setup, small_room):
        boards, receivers, gains = two_board_setup
        partition = bisector_partition((1.2, 2.0), (2.9, 2.3), boards, small_room)
        brighter = [b.model_copy(update={"power": b.power * 7.5}) for b in boards]
        base = sir_two_receivers(partition, gains, boards, receivers)
        scaled = sir_two_receivers(partition, gains, brighter, receivers)
        for rid, value in base.per_receiver.items():
            assert scaled.per_receiver[rid].sir == pytest.approx(value.sir, rel=1e-12)
            assert scaled.per_receiver[rid].status == value.status

    def test_sensitivity_hides_weak_boards(self, two_board_setup, small_room):
        boards, receivers, gains = two_board_setup
        partition = bisector_partition((1.2, 2.0), (2.9, 2.3), boards, small_room)
        report = sir_two_receivers(partition, gains, boards, receivers, SirPolicy(sensitivity_w=1.0))
        assert all(r.status == SirStatus.ZERO_SIGNAL for r in report.per_receiver.values())


class TestPlacements:
    def test_placements_are_reproducible(self, protocol):
        first_a, second_a = sample_placements(protocol)
        first_b, second_b = sample_placements(protocol)
        assert np.array_equal(first_a, first_b)
        assert np.array_equal(second_a, second_b)
        other, _ = sample_placements(protocol.model_copy(update={"seed": 4}))
        assert not np.array_equal(first_a, other)

    def test_placements_inside_room(self, protocol):
        first, second = sample_placements(protocol)
        for points in (first, second):
            assert np.all(points >= 0.0)
            assert np.all(points[:, 0] <= protocol.room.width)
            assert np.all(points[:, 1] <= protocol.room.depth)

    def test_placement_prefix_is_stable(self, protocol):
        longer = protocol.model_copy(update={"n_placements": 20})
        assert np.array_equal(sample_placements(protocol)[0], sample_placements(longer)[0][:12])

    def test_mean_sir_deterministic(self, protocol, bulb_factory):
        boards = build_bulb(bulb_factory(protocol.room))
        assert mean_placement_sir(boards, protocol) == mean_placement_sir(boards, protocol)

    def test_pair_sirs_empty(self, boards, room, protocol):
        means, zero = pair_sirs(boards, room, np.zeros((0, 2)), np.zeros((0, 2)), protocol)
        assert means.size == 0 and zero.size == 0


class TestRoomSweep:
    def test_one_row_per_dimension(self, bulb, protocol):
        rows = room_size_sweep(bulb, [4.0, 6.0], protocol)
        assert [r.floor_dim for r in rows] == [4.0, 6.0]
        assert all(r.mean_sir > 0 for r in rows)

    def test_rerun_identical(self, bulb, protocol):
        assert room_size_sweep(bulb, [5.0], protocol) == room_size_sweep(bulb, [5.0], protocol)


class TestThreeRegion:
    def test_sample_pair_lands_in_bins(self, room):
        pair = sample_pair(room, (1, 4), seed=2, sample_index=0, bin_width=0.5)
        assert pair is not None
        a, b = pair
        da = math.dist(a, room.floor_center)
        db = math.dist(b, room.floor_center)
        assert 0.5 <= da <= 1.0
        assert 2.0 <= db <= 2.5

    def test_sample_pair_swaps_with_bins(self, room):
        a, b = sample_pair(room, (1, 4), seed=2, sample_index=3, bin_width=0.5)
        c, d = sample_pair(room, (4, 1), seed=2, sample_index=3, bin_width=0.5)
        assert (a, b) == (d, c)

    def test_surface_is_symmetric(self, small_room, bulb_factory):
        bulb = bulb_factory(small_room)
        rows = three_region_surface(small_room, bulb, n_samples=3, seed=1, bin_width=0.5, max_distance=1.5)
        assert len(rows) == 9
        table = {(r.d1, r.d2): r.mean_sir for r in rows}
        for (d1, d2), value in table.items():
            assert table[(d2, d1)] == pytest.approx(value, rel=1e-12)

    def test_single_sample_matches_direct_pair_evaluation(self, small_room, bulb_factory):
        bulb = bulb_factory(small_room)
        boards = build_bulb(bulb)
        rows = three_region_surface(small_room, bulb, n_samples=1, seed=5, bin_width=0.5, max_distance=1.5)
        assert rows
        for row in rows:
            bins = (int(row.d1 / 0.5), int(row.d2 / 0.5))
            first, second = sample_pair(small_room, bins, 5, 0, 0.5)
            receivers = [make_receiver(1, *first), make_receiver(2, *second)]
            report = sir_two_receivers(
                bisector_partition(first, second, boards, small_room),
                compute_gain_matrix(boards, receivers, small_room),
                boards, receivers,
            )
            assert row.samples == 1
            assert row.mean_sir == pytest.approx(average_sir(report).value, rel=1e-9)

    def test_needs_samples(self, small_room, bulb_factory):
        with pytest.raises(ValueError):
            three_region_surface(small_room, bulb_factory(small_room), n_samples=0, seed=1)

    def test_sir_map(self, small_room, bulb_factory):
        values = sir_map(small_room, bulb_factory(small_room), fixed=(0.25, 0.25))
        xs, ys = small_room.floor_grid()
        assert values.shape == (len(ys), len(xs))
        assert math.isnan(values[0, 0])
        assert np.all(np.isfinite(values[1:, 1:]))


class TestSinr:
    def test_sinr_linear_closed_form(self):
        noise = NoiseModel(responsivity=0.5, bandwidth=1.0, thermal_variance=1e-3, shot_coefficient=0.0)
        value = sinr_linear(0.2, [0.1], noise)
        assert value == pytest.approx((0.5 * 0.2) ** 2 / (1e-3 + (0.5 * 0.1) ** 2))

    def test_default_shot_coefficient(self):
        noise = NoiseModel(responsivity=0.5)
        assert noise.shot_coefficient == pytest.approx(2 * 1.602176634e-19 * 0.5)

    def test_sinr_at_rejects_overlap(self, two_board_setup):
        boards, _, gains = two_board_setup
        with pytest.raises(ValueError):
            sinr_at(1, {0}, [0, 1], boards, gains, NoiseModel())

    def test_grouped_interferers_sum_before_squaring(self, small_room):
        boards = [_down_board(0, 1.0, 1.0), _down_board(1, 3.0, 3.0), _down_board(2, 3.0, 1.0)]
        gains = compute_gain_matrix(boards, [make_receiver(0, 1.0, 1.0)], small_room)
        noise = NoiseModel()
        grouped = sinr_at(0, {0}, [(1, 2)], boards, gains, noise)
        separate = sinr_at(0, {0}, [1, 2], boards, gains, noise)
        assert grouped < separate

    def test_removing_an_interferer_never_lowers_sinr(self, small_room):
        boards = [_down_board(i, x, y) for i, (x, y) in enumerate([(1.0, 1.0), (3.0, 1.0), (1.0, 3.0), (3.0, 3.0)])]
        receivers = [make_receiver(0, 1.5, 1.5), make_receiver(1, 2.5, 2.0)]
        gains = compute_gain_matrix(boards, receivers, small_room)
        noise = NoiseModel()
        for rid in (0, 1):
            for serving in range(4):
                others = [b for b in range(4) if b != serving]
                full = sinr_at(rid, {serving}, others, boards, gains, noise)
                for dropped in others:
                    fewer = [b for b in others if b != dropped]
                    assert sinr_at(rid, {serving}, fewer, boards, gains, noise) >= full - 1e-12

    def test_combining_identical_branches_scales_by_branch_count(self):
        noise = NoiseModel(responsivity=0.54)
        branch = (0.3, 0.05, 1e-3)
        single = combine_optimal([branch], noise)
        assert combine_optimal([branch] * 7, noise) == pytest.approx(single + 10.0 * math.log10(7.0), abs=1e-9)

        dark = [(0.0, 0.0, 1e-3)] * 6
        assert combine_optimal([branch, *dark], noise) == pytest.approx(single, abs=1e-12)
        mixed = [branch, (0.1, 0.2, 1e-3), (0.4, 0.0, 5e-4)]
        assert combine_optimal(mixed[::-1], noise) == pytest.approx(combine_optimal(mixed, noise), abs=1e-12)

    def test_combining_is_sum_of_branches(self):
        noise = NoiseModel(responsivity=1.0)
        branches = [(1.0, 0.5, 0.1), (0.5, 0.2, 0.1)]
        expected = 1.0 / (0.1 + 0.25) + 0.25 / (0.1 + 0.04)
        assert combine_optimal_linear(branches, noise) == pytest.approx(expected)
        assert combine_optimal(branches, noise) == pytest.approx(to_db(expected))
        with pytest.raises(ValueError):
            combine_optimal_linear([], noise)

    def test_combining_beats_weight_search(self):
        noise = NoiseModel(responsivity=0.54)
        R = noise.responsivity
        angles = np.linspace(0.0, math.pi / 2, 2001)
        for k in range(100):
            s1, s2, i1, i2 = stream(17, k).uniform(0.01, 1.0, size=4)
            n1, n2 = stream(18, k).uniform(1e-3, 0.1, size=2)
            branches = [(s1, i1, n1), (s2, i2, n2)]
            w1, w2 = np.cos(angles), np.sin(angles)
            signal = (R * (w1 * s1 + w2 * s2)) ** 2
            impairment = w1 ** 2 * (n1 + (R * i1) ** 2) + w2 ** 2 * (n2 + (R * i2) ** 2)
            best_grid = float(to_db(signal / impairment).max())
            combined = combine_optimal(branches, noise)
            assert best_grid <= combined + 1e-9
            assert combined - best_grid < 0.1


class TestSinrField:
    @pytest.fixture
    def field_setup(self, small_room):
        layout = build_cluster_layout(ClusterType.SEVEN_LED, rows=2, cols=2, room=small_room)
        receivers = grid_receivers(small_room.model_copy(update={"floor_grid_resolution": 1.0}),
                                   diversity=True, fov_deg=60.0)
        gains = layout_gains(small_room, layout, receivers, max_order=0)
        return layout, receivers, gains

    def test_single_led_serving_never_beats_cluster_serving(self, field_setup):
        layout, receivers, gains = field_setup
        field = sinr_field(layout, receivers, gains, NoiseModel())
        assert np.all(np.sort(field[SinrScenario.S2]) <= np.sort(field[SinrScenario.S1]) + 1e-9)

    def test_cluster_serving_treats_other_clusters_as_single_streams(self, field_setup):
        layout, receivers, gains = field_setup
        field = sinr_field(layout, receivers, gains, NoiseModel())
        clusters = [layout.clusters[c] for c in sorted(layout.clusters)]
        for i, receiver in enumerate(receivers):
            expected = max(
                sinr_at(receiver.id, serving, [tuple(other) for other in clusters if other is not serving],
                        layout.boards, gains, NoiseModel())
                for serving in clusters
            )
            actual = float(field[SinrScenario.S1][i])
            if math.isinf(expected):
                assert actual == expected
            else:
                assert actual == pytest.approx(expected, abs=1e-9)

    def test_singleton_clusters_make_both_rules_agree(self, field_setup):
        layout, receivers, gains = field_setup
        singletons = TransmitterLayout(boards=layout.boards, clusters={b.id: (b.id,) for b in layout.boards})
        field = sinr_field(singletons, receivers, gains, NoiseModel())
        np.testing.assert_allclose(field[SinrScenario.S1], field[SinrScenario.S2], rtol=1e-12)

    @pytest.mark.parametrize("scenario", list(SinrScenario))
    def test_cdf_of_the_field(self, field_setup, small_room, scenario):
        layout, receivers, gains = field_setup
        expected = ecdf(sinr_field(layout, receivers, gains, NoiseModel())[scenario])
        cdf = sinr_cdf(small_room, layout, scenario, NoiseModel(), max_order=0, receivers=receivers)
        np.testing.assert_array_equal(cdf.values, expected.values)
        np.testing.assert_array_equal(cdf.probabilities, expected.probabilities)
        assert np.all(np.diff(cdf.probabilities) > 0)
        assert np.all(np.diff(cdf.values[np.isfinite(cdf.values)]) >= 0)
        assert cdf.probabilities[-1] == 1.0

    def test_cdf_builds_its_own_receiver_grid(self, small_room):
        room = small_room.model_copy(update={"floor_grid_resolution": 1.0})
        layout = build_cluster_layout(ClusterType.THREE_LED, rows=1, cols=1, room=room)
        cdf = sinr_cdf(room, layout, SinrScenario.S1, NoiseModel(), fov_deg=60.0, max_order=0)
        assert len(cdf.values) == 16

    def test_combining_never_hurts(self, field_setup):
        layout, receivers, gains = field_setup
        field = sinr_field(layout, receivers, gains, NoiseModel())
        assert np.all(field[SinrScenario.S2_COMBINED] >= field[SinrScenario.S2] - 1e-9)

    def test_samples(self, field_setup):
        layout, receivers, gains = field_setup
        samples = sinr_samples(receivers, sinr_field(layout, receivers, gains, NoiseModel()))
        assert len(samples) == len(receivers) == 16
        assert set(samples[0].per_scenario) == set(SinrScenario)


class TestDistributions:
    def test_ecdf(self):
        cdf = ecdf([3.0, 1.0, 2.0, 4.0])
        assert cdf.values.tolist() == [1.0, 2.0, 3.0, 4.0]
        assert cdf.probabilities.tolist() == [0.25, 0.5, 0.75, 1.0]
        assert cdf.median == 2.0
        assert cdf.quantile(1.0) == 4.0
        assert np.all(np.diff(cdf.probabilities) > 0)
        with pytest.raises(ValueError):
            cdf.quantile(1.5)
        with pytest.raises(ValueError):
            ecdf([])

    def test_illumination_stats_population_std(self):
        stats = illumination_stats(np.array([[1.0, 2.0], [3.0, 4.0]]))
        assert stats.mean == 2.5
        assert stats.std == pytest.approx(math.sqrt(1.25))
        assert stats.variance == pytest.approx(1.25)
        assert (stats.min, stats.max) == (1.0, 4.0)

    def test_illumination_stats_small_maps(self):
        uniform = illumination_stats(np.full((3, 4), 2.5))
        assert (uniform.mean, uniform.std, uniform.min, uniform.max) == (2.5, 0.0, 2.5, 2.5)
        pair = illumination_stats(np.array([1.0, 3.0]))
        assert pair.mean == 2.0
        assert pair.std == 1.0

    def test_illumination_stats_match_two_pass(self):
        values = stream(9).uniform(0.0, 5.0, size=(10, 12))
        flat = [float(v) for v in values.ravel()]
        mean = math.fsum(flat) / len(flat)
        std = math.sqrt(math.fsum((v - mean) ** 2 for v in flat) / len(flat))
        stats = illumination_stats(values)
        assert stats.mean == pytest.approx(mean, rel=1e-12)
        assert stats.std == pytest.approx(std, rel=1e-12)
