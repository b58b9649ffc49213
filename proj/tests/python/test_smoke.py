"""Smoke tests for the python bindings and the CLI."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

import spherecal as sc

CLI = os.environ.get("SPHERECAL_CLI", "")


def make_camera():
    return sc.CameraIntrinsics(fx=500, fy=500, cx=320, cy=240, width=640, height=480)


def test_project_point():
    k = make_camera()
    uv = sc.project_point(np.array([0.1, 0.0, 1.0]), k)
    assert np.allclose(uv, [370.0, 240.0])
    with pytest.raises(sc.CalibrationError):
        sc.project_point(np.array([0.0, 0.0, -1.0]), k)


def test_outline_and_compensation_close_the_loop():
    k = make_camera()
    sphere = sc.SphereParams(center=np.array([0.5, 0.0, 2.0]), radius=0.1)
    outline = sc.sphere_outline_ellipse(sphere, k)
    assert outline.a > outline.b
    comp = sc.compensate_center(outline, k)
    truth = sc.project_point(sphere.center, k)
    assert np.linalg.norm(comp - truth) < 0.1


def test_ellipse_fit_roundtrip():
    t = np.linspace(0.0, 2 * np.pi, 60, endpoint=False)
    x = 100 + 40 * np.cos(t) * np.cos(0.3) - 20 * np.sin(t) * np.sin(0.3)
    y = 120 + 40 * np.cos(t) * np.sin(0.3) + 20 * np.sin(t) * np.cos(0.3)
    fit = sc.fit_ellipse_direct(np.stack([x, y], axis=1))
    assert np.allclose(fit.center, [100, 120], atol=1e-6)
    assert fit.a == pytest.approx(40, abs=1e-6)
    assert fit.b == pytest.approx(20, abs=1e-6)


def test_sphere_fit_and_degenerate():
    pts = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    fit = sc.fit_sphere_4pts(pts)
    assert fit is not None
    assert np.linalg.norm(fit.center) < 1e-12
    assert fit.radius == pytest.approx(1.0)
    flat = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype=float)
    assert sc.fit_sphere_4pts(flat) is None


def small_scene(seed=3):
    spec = sc.SceneSpec()
    spec.sphere = sc.SphereParams(center=np.array([2.5, 0.2, 0.1]), radius=0.1)
    t = sc.RigidTransform()
    t.rotation = np.array([[0, -1, 0], [0, 0, -1], [1, 0, 0]], dtype=float)
    t.translation = np.array([0.05, -0.1, 0.1])
    spec.t_gt = t
    spec.k = sc.CameraIntrinsics(fx=700, fy=700, cx=512, cy=384, width=1024, height=768)
    spec.frames = 25
    spec.seed = seed
    return spec


def test_mask_detection_on_rendered_scene():
    spec = small_scene()
    mask, true_center, outline = sc.render_mask(spec)
    assert mask.dtype == np.uint8 and mask.shape == (768, 1024)
    det = sc.detect_ellipse(mask)
    assert det.verdict == sc.Verdict.ValidIntact
    comp = sc.compensate_center(det.ellipse, spec.k)
    assert np.linalg.norm(comp - true_center) < 0.5


def test_lidar_extraction_on_generated_scan():
    spec = small_scene()
    points, labels = sc.generate_scan(spec)
    assert points.shape[1] == 3
    assert (labels == 1).sum() > 0  # sphere points present
    cfg = sc.LidarConfig()
    cfg.az_res_deg = spec.pattern.az_res_deg
    cfg.el_res_deg = spec.pattern.ring_spacing_deg()
    out = sc.extract_sphere_center(points, "spinning", cfg)
    assert np.linalg.norm(out.center - spec.sphere.center) < 2e-3
    assert out.hypotheses > 0


def test_end_to_end_calibration_via_bindings():
    rig = None
    lidar_centers, cam_centers = [], []
    rng = np.random.default_rng(7)
    for i in range(8):
        spec = small_scene(seed=40 + i)
        # Spread the placements over a 3D volume (a collinear set would make
        # the pose ambiguous).
        spec.sphere = sc.SphereParams(
            center=np.array(
                [
                    rng.uniform(2.0, 4.0),
                    rng.uniform(-0.5, 0.5),
                    rng.uniform(-0.1, 0.3),
                ]
            ),
            radius=0.1,
        )
        rig = spec.t_gt
        mask, _, _ = sc.render_mask(spec)
        got = sc.extract_center_2d([mask], spec.k)
        assert got is not None
        center2d, det, _ = got
        points, _ = sc.generate_scan(spec)
        cfg = sc.LidarConfig()
        cfg.az_res_deg = spec.pattern.az_res_deg
        cfg.el_res_deg = spec.pattern.ring_spacing_deg()
        out = sc.extract_sphere_center(points, "spinning", cfg)
        lidar_centers.append(out.center)
        cam_centers.append(center2d)

    result = sc.calibrate(
        np.array(lidar_centers), np.array(cam_centers), small_scene().k
    )
    assert result.converged
    metrics = sc.evaluate_against_truth(result, rig)
    assert metrics.trans_err_m < 0.005
    assert metrics.rot_err_deg < 0.1


@pytest.mark.skipif(not CLI, reason="SPHERECAL_CLI not set")
def test_cli_simulate_calibrate_evaluate(tmp_path):
    ds = tmp_path / "ds"
    run = [
        CLI,
        "simulate",
        "--seed",
        "21",
        "--set",
        "sim.n_scenes=8",
        "--set",
        "sim.frames=30",
        "--out",
        str(ds),
    ]
    proc = subprocess.run(run, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    manifest = ds / "manifest.json"
    assert manifest.exists()
    assert len(json.loads(manifest.read_text())["scenes"]) == 8

    report = tmp_path / "report.json"
    proc = subprocess.run(
        [CLI, "calibrate", "--manifest", str(manifest), "--out", str(report),
         "--jobs", "2"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    doc = json.loads(report.read_text())
    assert doc["converged"]
    assert len(doc["pairs"]) == 8
    assert "config" in doc and "camera.sample_size" in doc["config"]

    csv = tmp_path / "metrics.csv"
    proc = subprocess.run(
        [CLI, "evaluate", str(report), "--truth", str(manifest), "--out",
         str(csv)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    lines = [l for l in csv.read_text().splitlines() if l]
    assert len(lines) == 2  # header + one row
    trans_err = float(lines[1].split(",")[1])
    assert trans_err < 0.01


@pytest.mark.skipif(not CLI, reason="SPHERECAL_CLI not set")
def test_cli_error_paths(tmp_path):
    # Unwritable output directory -> exit 2 with a machine-readable record.
    proc = subprocess.run(
        [CLI, "simulate", "--out", "/proc/nope/dir"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 2
    err = json.loads(proc.stderr.splitlines()[-1])
    assert err["error"] == "IoFailure"

    # Missing truth file -> SchemaMismatch, exit 2.
    report = tmp_path / "r.json"
    report.write_text(json.dumps({"transform": [1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1]}))
    proc = subprocess.run(
        [CLI, "evaluate", str(report), "--truth", str(tmp_path / "missing.json")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 2

    # Too few scenes for the pair gate -> exit 1.
    ds = tmp_path / "tiny"
    subprocess.run(
        [CLI, "simulate", "--seed", "5", "--set", "sim.n_scenes=3",
         "--set", "sim.frames=20", "--out", str(ds)],
        capture_output=True,
    )
    proc = subprocess.run(
        [CLI, "calibrate", "--manifest", str(ds / "manifest.json"),
         "--set", "solver.min_pairs=6", "--out", str(tmp_path / "r2.json")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 1
    err = json.loads(proc.stderr.splitlines()[-1])
    assert err["error"] == "TooFewPairs"


@pytest.mark.skipif(not CLI, reason="SPHERECAL_CLI not set")
def test_cli_seed_beats_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("sim.seed = 1\nsim.n_scenes = 1\nsim.frames = 5\n")
    base = subprocess.run(
        [CLI, "simulate", "--config", str(cfg), "--out", str(tmp_path / "a")],
        capture_output=True, text=True)
    override = subprocess.run(
        [CLI, "simulate", "--config", str(cfg), "--seed", "2", "--out",
         str(tmp_path / "b")],
        capture_output=True, text=True)
    assert base.returncode == 0 and override.returncode == 0
    a = (tmp_path / "a" / "scene_000.ply").read_bytes()
    b = (tmp_path / "b" / "scene_000.ply").read_bytes()
    assert a != b

    # Same config, no override: byte-identical.
    again = subprocess.run(
        [CLI, "simulate", "--config", str(cfg), "--out", str(tmp_path / "c")],
        capture_output=True, text=True)
    assert again.returncode == 0
    assert (tmp_path / "c" / "scene_000.ply").read_bytes() == a


def write_pgm(path, mask):
    header = f"P5\n{mask.shape[1]} {mask.shape[0]}\n255\n".encode()
    path.write_bytes(header + mask.astype(np.uint8).tobytes())


@pytest.mark.skipif(not CLI, reason="SPHERECAL_CLI not set")
def test_calibrate_skips_planted_invalid_masks(tmp_path):
    ds = tmp_path / "ds"
    proc = subprocess.run(
        [CLI, "simulate", "--seed", "33", "--set", "sim.n_scenes=8",
         "--set", "sim.frames=30", "--out", str(ds)],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr

    # Replace two masks with rectangles (non-sphere objects).
    for name in ("scene_001.pgm", "scene_005.pgm"):
        rect = np.zeros((768, 1024), dtype=np.uint8)
        rect[300:500, 400:700] = 255
        write_pgm(ds / name, rect)

    report = tmp_path / "report.json"
    proc = subprocess.run(
        [CLI, "calibrate", "--manifest", str(ds / "manifest.json"),
         "--out", str(report), "--jobs", "2"],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    doc = json.loads(report.read_text())
    skipped = [s for s in doc["scenes"] if not s["ok"]]
    assert {s["id"] for s in skipped} == {"scene_001", "scene_005"}
    assert all(s["reason"] == "InvalidMask" for s in skipped)
    assert len(doc["pairs"]) == 6
    assert doc["converged"]
    assert doc["truth_metrics"]["trans_err_m"] < 0.01
