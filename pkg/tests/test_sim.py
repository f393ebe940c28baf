"""Trajectory replay, synthetic scene generation, and metrics reporting."""

import hashlib
import json
import numpy as np
import pytest

from splatmap.cli import main as cli_main
from splatmap.errors import Malformed
from splatmap.sim import (
    METRICS_HEADER,
    ReplayConfig,
    SyntheticScene,
    generate_synthetic,
    report,
    run_replay,
)


def tiny_scene(tmp_path, length=16.0, topology="straight", seed=7, density=0.5):
    scene = SyntheticScene(corridor_length_m=length, density_per_m3=density,
                           keyframe_spacing_m=4.0, seed=seed, topology=topology)
    out = tmp_path / f"scene-{topology}-{seed}"
    trajectory, frames = generate_synthetic(scene, out)
    return out, trajectory, frames


def tiny_replay_config(dataset, out_csv, **overrides):
    defaults = dict(
        trajectory=dataset / "trajectory.txt",
        images_dir=dataset / "images",
        depth_dir=dataset / "depth",
        out=out_csv,
        chunk_size=10.0,
        gaussian_budget=800,
        keyframe_budget=4,
        grid_resolution=200.0,
        steps_per_frame=2,
        seed=3,
        samples_per_keyframe=120,
        max_distance=60.0,
        refine_iters=4,
    )
    defaults.update(overrides)
    return ReplayConfig(**defaults)


class TestSynthetic:
    def test_zero_length_single_keyframe_at_origin(self, tmp_path):
        out, trajectory, frames = tiny_scene(tmp_path, length=0.0)
        assert frames == 1
        line = trajectory.read_text().strip().split()
        assert [float(v) for v in line[1:4]] == [0.0, 0.0, 0.0]
        assert (out / "images" / "000000.png").exists()
        assert (out / "depth" / "000000.npy").exists()
        assert json.loads((out / "intrinsics.json").read_text())["width"] == 64

    def test_loop_topology_closes(self, tmp_path):
        scene = SyntheticScene(corridor_length_m=40.0, density_per_m3=0.5,
                               keyframe_spacing_m=4.0, seed=1, topology="loop")
        out = tmp_path / "loop"
        trajectory, frames = generate_synthetic(scene, out)
        rows = [l.split() for l in trajectory.read_text().splitlines()]
        first = np.array([float(v) for v in rows[0][1:4]])
        last = np.array([float(v) for v in rows[-1][1:4]])
        assert np.linalg.norm(first - last) <= scene.keyframe_spacing_m

    def test_seeds_change_content(self, tmp_path):
        _, t1, _ = tiny_scene(tmp_path, seed=1)
        _, t2, _ = tiny_scene(tmp_path, seed=2)
        h1 = hashlib.sha256((t1.parent / "images" / "000000.png").read_bytes()).hexdigest()
        h2 = hashlib.sha256((t2.parent / "images" / "000000.png").read_bytes()).hexdigest()
        assert h1 != h2

    def test_same_seed_identical_bytes(self, tmp_path):
        out1, _, _ = tiny_scene(tmp_path / "a")
        out2, _, _ = tiny_scene(tmp_path / "b")
        for rel in ("trajectory.txt", "images/000001.png", "depth/000002.npy"):
            assert (out1 / rel).read_bytes() == (out2 / rel).read_bytes()


class TestReplay:
    def test_empty_trajectory(self, tmp_path):
        traj = tmp_path / "empty.txt"
        traj.write_text("")
        (tmp_path / "img").mkdir()
        (tmp_path / "dep").mkdir()
        cfg = ReplayConfig(trajectory=traj, images_dir=tmp_path / "img",
                           depth_dir=tmp_path / "dep", out=tmp_path / "m.csv")
        summary = run_replay(cfg)
        assert summary.exit_code == 0
        assert (tmp_path / "m.csv").read_text() == METRICS_HEADER + "\n"

    def test_corridor_rows_and_budget(self, tmp_path):
        dataset, _, frames = tiny_scene(tmp_path)
        cfg = tiny_replay_config(dataset, tmp_path / "m.csv")
        summary = run_replay(cfg)
        assert summary.exit_code == 0
        assert summary.frames == frames
        lines = (tmp_path / "m.csv").read_text().splitlines()
        assert lines[0] == METRICS_HEADER
        assert len(lines) == 1 + frames * cfg.steps_per_frame
        for line in lines[1:]:
            parts = line.split(",")
            assert int(parts[2]) <= cfg.gaussian_budget  # active_gaussians
            assert int(parts[4]) <= cfg.keyframe_budget  # active_keyframes
            if parts[10]:
                assert 0.0 <= float(parts[10]) <= 1.0

    def test_determinism_byte_identical(self, tmp_path):
        dataset, _, _ = tiny_scene(tmp_path)
        run_replay(tiny_replay_config(dataset, tmp_path / "m1.csv",
                                      store_dir=tmp_path / "s1"))
        run_replay(tiny_replay_config(dataset, tmp_path / "m2.csv",
                                      store_dir=tmp_path / "s2"))
        assert (tmp_path / "m1.csv").read_bytes() == (tmp_path / "m2.csv").read_bytes()

    def test_loop_closure_run_audits_clean(self, tmp_path):
        dataset, _, frames = tiny_scene(tmp_path, length=24.0, topology="loop")
        corrections = tmp_path / "corrections.txt"
        yaw = np.deg2rad(4.0)
        qw, qz = np.cos(yaw / 2), np.sin(yaw / 2)
        lines = []
        for kid in range(frames - 2, frames):
            tag = " junction" if kid == frames - 2 else ""
            lines.append(f"{kid} 6.0 0.5 0.0 {qw:.17g} 0 0 {qz:.17g}{tag}")
        corrections.write_text("\n".join(lines) + "\n")
        cfg = tiny_replay_config(dataset, tmp_path / "lc.csv", loop_closures=corrections)
        summary = run_replay(cfg)
        assert summary.exit_code == 0
        assert summary.misplaced == 0
        assert summary.post_run_moves == 0
        assert summary.correction is not None
        assert summary.correction.report.transformed > 0
        n_lines = len((tmp_path / "lc.csv").read_text().splitlines())
        assert n_lines == 1 + frames * cfg.steps_per_frame + cfg.refine_iters

    def test_total_grows_monotonically(self, tmp_path):
        dataset, _, _ = tiny_scene(tmp_path)
        cfg = tiny_replay_config(dataset, tmp_path / "m.csv")
        summary = run_replay(cfg)
        assert summary.total_gaussians > 0

    def test_resident_candidates_trigger_zero_loads(self, tmp_path):
        # spatial-locality contract: when everything fits the budget, no
        # optimization step ever reads a chunk back from disk
        dataset, _, _ = tiny_scene(tmp_path)
        cfg = tiny_replay_config(dataset, tmp_path / "m.csv", gaussian_budget=100_000)
        run_replay(cfg)
        rows = [l.split(",") for l in (tmp_path / "m.csv").read_text().splitlines()[1:]]
        assert all(int(r[5]) == 0 for r in rows)   # loads column
        assert all(int(r[6]) == 0 for r in rows)   # evictions column
        overlaps = [float(r[10]) for r in rows if r[10] != ""]
        assert overlaps and all(v == 1.0 for v in overlaps)


class TestReport:
    def write_csv(self, path, rows):
        body = "\n".join(",".join(str(v) for v in r) for r in rows)
        path.write_text(METRICS_HEADER + "\n" + body + ("\n" if body else ""))

    def test_zero_io_fraction(self, tmp_path):
        path = tmp_path / "z.csv"
        self.write_csv(path, [[0, 0, 10, 1, 1, 0, 0, 0, 100, 0, 0.5, 0.1]])
        assert "io_fraction: 0.0000" in report(path)

    def test_quarter_io_fraction(self, tmp_path):
        path = tmp_path / "q.csv"
        self.write_csv(path, [[0, i, 10, 1, 1, 0, 0, 1, 4, 0, 0.5, 0.1] for i in range(8)])
        assert "io_fraction: 0.2500" in report(path)

    def test_plateau_reads_steady_state_max(self, tmp_path):
        path = tmp_path / "p.csv"
        rows = [[0, i, v, 1, 1, 0, 0, 1, 4, 0, "", 0.1]
                for i, v in enumerate([10, 20, 900, 50, 60, 55])]
        self.write_csv(path, rows)
        assert "plateau active_gaussians (steady-state window): 60" in report(path)

    def test_missing_header_is_malformed(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("not,a,metrics,file\n")
        with pytest.raises(Malformed):
            report(path)

    def test_bad_cell_is_malformed(self, tmp_path):
        path = tmp_path / "bad2.csv"
        path.write_text(METRICS_HEADER + "\n0,0,x,1,1,0,0,0,1,0,,0.1\n")
        with pytest.raises(Malformed):
            report(path)

    def test_empty_body(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text(METRICS_HEADER + "\n")
        assert "empty run" in report(path)


class TestCli:
    def test_synth_replay_report_pipeline(self, tmp_path, capsys):
        out = tmp_path / "ds"
        assert cli_main(["synth", "--length", "8", "--spacing", "4", "--density", "0.5",
                         "--seed", "5", "--out", str(out)]) == 0
        csv = tmp_path / "metrics.csv"
        assert cli_main([
            "replay", "--trajectory", str(out / "trajectory.txt"),
            "--images", str(out / "images"), "--depth", str(out / "depth"),
            "--out", str(csv), "--gaussian-budget", "500", "--keyframe-budget", "4",
            "--steps-per-frame", "1", "--seed", "2", "--samples-per-frame", "80",
        ]) == 0
        assert cli_main(["report", str(csv)]) == 0
        captured = capsys.readouterr()
        assert "io_fraction" in captured.out

    def test_replay_missing_trajectory_fails_cleanly(self, tmp_path, capsys):
        rc = cli_main([
            "replay", "--trajectory", str(tmp_path / "nope.txt"),
            "--images", str(tmp_path), "--depth", str(tmp_path),
            "--out", str(tmp_path / "m.csv"),
        ])
        assert rc == 1
        assert "error:" in capsys.readouterr().err
