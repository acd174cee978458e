import numpy as np
import pytest

from platoonloc.channel import (
    ChannelRealization,
    bs_los_columns,
    ground_truth_sparse,
    los_gain,
    received_signal,
    reference_gain,
    ris_los_columns,
    sample_platoon,
    synthesize_scene,
    true_offsets,
)
from platoonloc.config import desk_preset
from platoonloc.errors import InvalidDimensionError, TrajectoryOverflowError
from platoonloc.geometry import OffsetEstimate


def scene_fixture(seed=0, **kw):
    return synthesize_scene(desk_preset(**kw), seed=seed)


class TestSamplePlatoon:
    def test_gap_invariant_every_slot(self):
        cfg = desk_preset(n_vue=2)
        for seed in range(20):
            rng = np.random.default_rng(seed)
            traj = sample_platoon(cfg, rng)
            gaps = np.diff(traj.grid_indices, axis=1)
            assert np.all(gaps >= cfg.platoon_q0)

    def test_mean_drift_matches_speed(self):
        cfg = desk_preset(n_vue=1, n_grid=240, n_slots=100, slot_interval=0.1)
        cfg.platoon_q0 = 1
        drifts = []
        for seed in range(30):
            traj = sample_platoon(cfg, np.random.default_rng(seed))
            drifts.append(
                (traj.positions[-1, 0, 0] - traj.positions[0, 0, 0])
                / ((cfg.n_slots - 1) * cfg.slot_interval)
            )
        assert np.mean(drifts) == pytest.approx(-18.0, abs=1.5)

    def test_spacing_mode_matches_gamma_law(self):
        # continuous spacing mode is q0 + (varpi - 1) lambda = q0 + 1.5; the
        # integer spacing law puts its mode at q0 + 1 or q0 + 2
        cfg = desk_preset(n_vue=2, n_grid=200)
        gaps = []
        for seed in range(4000):
            traj = sample_platoon(cfg, np.random.default_rng(seed))
            gaps.append(traj.grid_indices[0, 1] - traj.grid_indices[0, 0])
        counts = np.bincount(gaps)
        assert counts.argmax() in (cfg.platoon_q0 + 1, cfg.platoon_q0 + 2)

    def test_overflow_raises(self):
        cfg = desk_preset(n_grid=8)
        with pytest.raises(TrajectoryOverflowError):
            sample_platoon(cfg, np.random.default_rng(0))

    def test_positions_match_quantization(self):
        scene = scene_fixture()
        traj = scene.trajectory
        for t in (0, 10, 19):
            for m in range(2):
                p = (
                    scene.grid.grid_points[traj.grid_indices[t, m]]
                    + traj.road_offsets[t, m] * scene.grid.road_direction
                )
                np.testing.assert_allclose(p, traj.positions[t, m], atol=1e-9)


class TestChannelSynthesis:
    def test_los_only_reduction(self):
        cfg = desk_preset()
        cfg.nlos.l_bs = 0
        cfg.nlos.l_ris = 0
        scene = synthesize_scene(cfg, seed=1)
        ch = scene.channels[0]
        pts = scene.trajectory.positions[0]
        a_bs, d_bs = bs_los_columns(pts, np.asarray(cfg.bs_position), cfg.n_bs_antennas)
        for m in range(cfg.n_vue):
            expected = ch.beta[m] * a_bs[:, m]
            np.testing.assert_allclose(ch.h_bs[m], expected, rtol=1e-12)

    def test_gain_law_amplitude(self):
        # amplitude = reference gain times d^-zeta
        g = los_gain(10.0, 7e9, 3.0)
        assert abs(g) == pytest.approx(reference_gain(7e9, 3.0) * 1e-3, rel=1e-12)

    def test_nlos_gain_variance_monte_carlo(self):
        cfg = desk_preset(n_vue=1, n_slots=1)
        cfg.platoon_q0 = 1
        cfg.nlos.l_bs = 1
        cfg.nlos.l_ris = 0
        rel = 10 ** (cfg.nlos.rel_power_db / 10)
        draws = []
        for seed in range(3000):
            scene = synthesize_scene(cfg, seed=seed)
            st = scene.channels[0].bs_nlos[0]
            beta = scene.channels[0].beta[0]
            draws.append(np.abs(st.gains[st.active][0]) ** 2 / (rel * abs(beta) ** 2))
        assert np.mean(draws) == pytest.approx(1.0, abs=0.05)

    def test_noise_energy_consistency(self):
        scene = scene_fixture()
        kg = scene.config.n_bs_antennas * scene.config.n_pilots
        # Monte-Carlo over the generated slots plus fresh scenes
        samples = [np.vdot(n, n).real / scene.sigma2 for n in scene.noise]
        for seed in range(1, 25):
            s = scene_fixture(seed=seed)
            samples += [np.vdot(n, n).real / s.sigma2 for n in s.noise]
        assert np.mean(samples) == pytest.approx(kg, rel=0.02)

    def test_support_counts_at_first_slot(self):
        cfg = desk_preset()
        cfg.nlos.l_bs = 2
        cfg.nlos.l_ris = 3
        scene = synthesize_scene(cfg, seed=3)
        ch = scene.channels[0]
        for m in range(cfg.n_vue):
            assert ch.bs_nlos[m].active.sum() == 2
            assert ch.ris_nlos[m].active.sum() == 3

    def test_initial_burst_contiguous(self):
        cfg = desk_preset()
        cfg.nlos.l_ris = 3
        scene = synthesize_scene(cfg, seed=5)
        for m in range(cfg.n_vue):
            idx = np.where(scene.channels[0].ris_nlos[m].active)[0]
            assert np.all(np.diff(idx) == 1)


class TestReceivedSignal:
    def test_zero_channels_gives_noise(self):
        scene = scene_fixture()
        cfg = scene.config
        ch = scene.channels[0]
        zero = ChannelRealization(
            h_bs=np.zeros_like(ch.h_bs),
            h_ris=np.zeros_like(ch.h_ris),
            beta=ch.beta * 0,
            eta=ch.eta * 0,
            bs_nlos=ch.bs_nlos,
            ris_nlos=ch.ris_nlos,
        )
        noise = scene.noise[0]
        y = received_signal(zero, scene.ris, scene.pilots, scene.h_rb, noise)
        np.testing.assert_allclose(y, noise)

    def test_single_vue_single_pilot_definition(self):
        cfg = desk_preset(n_vue=1, n_pilots=1, n_slots=1)
        cfg.platoon_q0 = 1
        scene = synthesize_scene(cfg, seed=2)
        ch = scene.channels[0]
        pilots = np.ones((1, 1), dtype=complex)
        y = received_signal(ch, scene.ris, pilots, scene.h_rb)
        h_tilde = scene.h_rb * scene.ris.theta[None, :]
        expected = h_tilde @ ch.h_ris[0] + ch.h_bs[0]
        np.testing.assert_allclose(y, expected, rtol=1e-12)

    def test_dimension_mismatch(self):
        scene = scene_fixture()
        with pytest.raises(InvalidDimensionError):
            received_signal(
                scene.channels[0], scene.ris, np.ones((5, 3), dtype=complex), scene.h_rb
            )


class TestSensingConsistency:
    def test_reconstruction_over_random_scenes(self):
        # the [PRIMARY] cross-module oracle at small scale: noiseless signal
        # equals F z + Xi v at the true offsets
        worst = 0.0
        for seed in range(10):
            scene = scene_fixture(seed=seed)
            for t in (0, 7, 19):
                off = true_offsets(scene.trajectory, scene.channels[t], scene.grid, t)
                mats = scene.sensing_at(off)
                z, v = ground_truth_sparse(
                    scene.trajectory, scene.channels[t], scene.grid, t
                )
                rel = np.linalg.norm(
                    scene.y_clean[t] - mats.F @ z - mats.Xi @ v
                ) / np.linalg.norm(scene.y_clean[t])
                worst = max(worst, rel)
        assert worst < 1e-9

    def test_shapes(self):
        scene = scene_fixture()
        cfg = scene.config
        mats = scene.sensing_at(OffsetEstimate.zeros(cfg.n_vue, scene.grid))
        kg = cfg.n_bs_antennas * cfg.n_pilots
        assert mats.F.shape == (kg, 2 * cfg.n_grid * cfg.n_vue)
        n_tilde = scene.grid.n_ris_angles
        k_tilde = scene.grid.n_bs_angles
        assert mats.Xi.shape == (kg, (n_tilde + k_tilde) * cfg.n_vue)

    def test_zero_offsets_columns_are_grid_steering(self):
        scene = scene_fixture()
        cfg = scene.config
        mats = scene.sensing_at(OffsetEstimate.zeros(cfg.n_vue, scene.grid))
        a_bs, _ = bs_los_columns(
            scene.grid.grid_points, np.asarray(cfg.bs_position), cfg.n_bs_antennas
        )
        col = mats.f_bs[:, mats.z_column("B", 0, 4) - cfg.n_vue * cfg.n_grid]
        expected = np.outer(scene.pilots[0], a_bs[:, 4]).reshape(-1)
        np.testing.assert_allclose(col, expected, rtol=1e-12)

    def test_group_and_burst_sparsity(self):
        for seed in range(5):
            scene = scene_fixture(seed=seed)
            cfg = scene.config
            z, v = ground_truth_sparse(scene.trajectory, scene.channels[0], scene.grid, 0)
            U, M = cfg.n_grid, cfg.n_vue
            for m in range(M):
                zr = z[m * U : (m + 1) * U]
                zb = z[U * M + m * U : U * M + (m + 1) * U]
                assert np.count_nonzero(zr) == 1
                assert np.count_nonzero(zb) == 1
                assert np.flatnonzero(zr)[0] == np.flatnonzero(zb)[0]
                vr = v[m * scene.grid.n_ris_angles : (m + 1) * scene.grid.n_ris_angles]
                assert np.count_nonzero(vr) == cfg.nlos.l_ris

    def test_bs_column_norms(self):
        scene = scene_fixture()
        cfg = scene.config
        mats = scene.sensing_at(OffsetEstimate.zeros(cfg.n_vue, scene.grid))
        kg = cfg.n_bs_antennas * cfg.n_pilots
        norms = np.linalg.norm(mats.f_bs, axis=0)
        np.testing.assert_allclose(norms, np.sqrt(kg), rtol=1e-12)

    def test_column_map_roundtrip(self):
        scene = scene_fixture()
        mats = scene.sensing_at(OffsetEstimate.zeros(2, scene.grid))
        cmap = mats.column_map()
        j = mats.z_column("R", 1, 7)
        assert cmap["z"]["branch"][j] == "R"
        assert cmap["z"]["vue"][j] == 1
        assert cmap["z"]["grid"][j] == 7

    def test_pilot_rows_orthogonal(self):
        scene = scene_fixture()
        g = scene.pilots @ scene.pilots.conj().T
        off = g - np.diag(np.diag(g))
        assert np.abs(off).max() < 1e-9


class TestDeterminism:
    def test_same_seed_same_scene(self):
        a = scene_fixture(seed=11)
        b = scene_fixture(seed=11)
        assert np.array_equal(a.trajectory.positions, b.trajectory.positions)
        for ya, yb in zip(a.y, b.y):
            assert np.array_equal(ya, yb)

    def test_different_seed_differs(self):
        a = scene_fixture(seed=11)
        b = scene_fixture(seed=12)
        assert not np.array_equal(a.trajectory.positions, b.trajectory.positions)
