"""Smoke test for the `oscr` extension module.

    pip install maturin
    maturin develop -m crates/python/Cargo.toml
    python python/smoke_test.py
"""

import json
import math
import tempfile

import oscr

LAYOUT = {
    "prompt": "a sofa behind a table",
    "camera": {"radius": 7.0, "azimuth": 0.0, "elevation": 0.35, "width": 128, "height": 128},
    "boxes": [
        {"id": 0, "label": "sofa", "center": [-1.0, 0.0, 0.45], "dims": [2.0, 0.9, 0.9], "yaw": 0.0, "noun_span": [1, 2]},
        {"id": 1, "label": "table", "center": [1.0, 0.0, 0.375], "dims": [1.2, 0.8, 0.75], "yaw": 0.2, "noun_span": [4, 5]},
    ],
}


def main():
    layout = oscr.Layout.from_json(json.dumps(LAYOUT))
    assert layout.box_ids == [0, 1]
    assert layout.violations() == []

    r = layout.render()
    assert (r.width, r.height) == (128, 128)
    assert r.oscr_png()[:4] == b"\x89PNG"
    assert len(r.oscr_rgb8()) == 128 * 128 * 3
    assert r.depth_pfm()[:3] == b"Pf\n"
    vis = r.visibilities()
    assert vis[1] == 1.0 and 0.0 < vis[0] < 1.0, vis
    assert json.loads(r.meta_json())["camera"]["width"] == 128

    mask, summary = layout.attention_mask(patch=16, personalize=[1], n_appearance=2)
    assert mask[:4] == b"OSCM"
    s = json.loads(summary)
    # 5 prompt + 2 * 8 * 8 spatial + 2 appearance tokens
    assert s["tokens"] == 5 + 2 * 64 + 2
    assert s["pairs"]["z->x_t"] == 0

    assert not oscr.check_collision(layout, 0, 1)
    cfg = json.dumps({"image_size": 96})
    a = oscr.sample_scene(7, 3, cfg)
    b = oscr.sample_scene(7, 3, cfg)
    assert a.to_json() == b.to_json()
    report = json.loads(oscr.evaluate_candidate(a, cfg))
    assert report["verdict"] in ("accepted", "rejected")

    with tempfile.TemporaryDirectory() as d:
        manifest = oscr.generate_dataset(d, json.dumps({"seed": 3, "n_scenes": 3, "image_size": 96}))
        m = json.loads(manifest)
        assert len(m["scenes"]) == 3
        stats = json.loads(oscr.dataset_stats(manifest))
        assert stats["n_scenes"] == 3

        est = {"scenes": [{"id": s["id"], "boxes": [{"id": bx["id"], "depth": bx["center_depth"], "yaw": bx["yaw"]} for bx in s["boxes"]]} for s in m["scenes"]]}
        rep = json.loads(oscr.evaluate(manifest, json.dumps(est)))
        assert rep["depth_pair_accuracy"] == 1.0 and rep["angular_error_deg"] == 0.0

    assert math.isclose(oscr.angular_error(10.0, 190.0), 180.0)
    assert math.isclose(oscr.angular_error(10.0, 190.0, relaxed=True), 0.0, abs_tol=1e-9)

    bad = dict(LAYOUT, camera=dict(LAYOUT["camera"], elevation=math.pi / 2))
    try:
        oscr.Layout.from_json(json.dumps(bad)).render()
    except oscr.OscrError as e:
        assert "pose" in str(e).lower() or "invalid_layout" in str(e)
    else:
        raise AssertionError("straight-down camera must fail")

    print("oscr smoke test: ok")


if __name__ == "__main__":
    main()
