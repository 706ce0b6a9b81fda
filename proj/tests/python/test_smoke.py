import json

import numpy as np
import pytest

import imdyn


@pytest.fixture()
def demo(tmp_path):
    path = tmp_path / "demo"
    imdyn.demo_scene(str(path))
    return path


def test_bundle_summary(demo):
    s = imdyn.load_bundle(str(demo))
    assert (s["width"], s["height"]) == (512, 512)
    assert [o["primitive"] for o in s["objects"]] == ["circle", "polygon"]
    assert len(s["fingerprint"]) == 64


def test_fit_mask():
    yy, xx = np.mgrid[0:64, 0:64]
    disk = ((xx + 0.5 - 32) ** 2 + (yy + 0.5 - 32) ** 2 <= 20**2).astype(np.uint8)
    assert imdyn.fit_mask(disk)["kind"] == "circle"
    bar = np.zeros((64, 128), np.uint8)
    bar[30:35, 10:110] = 1
    fit = imdyn.fit_mask(bar)
    assert fit["kind"] == "polygon"
    assert fit["circle_iou"] < 0.85


def test_simulate_and_preview(demo):
    t = imdyn.simulate(str(demo))
    assert t["states"].shape == (121, 2, 6)
    assert t["body_ids"] == [1, 2]
    pushed = imdyn.simulate(str(demo), [{"id": 2, "applied_force": [50000.0, 0.0]}])
    assert not np.array_equal(pushed["states"], t["states"])
    lines = imdyn.preview(str(demo), max_points=32)
    assert all(1 <= len(line["points"]) <= 32 for line in lines)


def test_typed_errors(demo, tmp_path):
    with pytest.raises(imdyn.ValidationError) as info:
        imdyn.simulate(str(demo), [{"id": 42}])
    assert info.value.field == "overrides[0].id"
    with pytest.raises(imdyn.MissingAsset):
        imdyn.load_bundle(str(tmp_path / "absent"))
    with pytest.raises(imdyn.Error):
        imdyn.forward_noise(np.zeros((1, 2, 2, 1), np.float32), 99)


def test_pipeline(demo, tmp_path):
    m = imdyn.run_pipeline(str(demo), str(tmp_path / "run"), frames=4, seed=1)
    assert len(m["artifacts"]["frames"]) == 4
    assert len(m["artifacts"]["flow"]) == 3
    on_disk = json.loads((tmp_path / "run" / "run.json").read_text())
    assert on_disk["run_id"] == m["run_id"]
    refined = np.load(tmp_path / "run" / m["artifacts"]["refined_latents"])
    guidance = np.load(tmp_path / "run" / m["artifacts"]["guidance_latents"])
    assert refined.shape == (4, 64, 64, 3)
    np.testing.assert_array_equal(refined, guidance)


def test_refine_with_python_denoiser():
    rng = np.random.default_rng(0)
    g = rng.uniform(-1, 1, (2, 4, 4, 3)).astype(np.float32)
    mask = np.zeros((1, 4, 4), np.uint8)
    mask[:, :, :2] = 1
    calls = []

    def denoiser(z, t):
        calls.append(t)
        return z * np.float32(0.5)

    out, trace = imdyn.refine(g, mask, denoiser, seed=3)
    assert calls == list(range(25, 0, -1))
    assert [fused for _, fused, _ in trace] == [t > 5 for t in calls]
    assert out.shape == g.shape
    np.testing.assert_array_equal(imdyn.forward_noise(g, 0), g)
