"""Synthetic thermal pedestrian scenes and dataset round trips."""

import json

import numpy as np
import pytest

from coldpatch.imaging import load_pgm
from coldpatch.scene import (
    MIN_PERSON_HEIGHT,
    SceneConfig,
    SceneSample,
    generate_dataset,
    generate_scene,
    load_dataset,
    quantize_levels,
    silhouette_mask,
)
from coldpatch.streams import RngStream


def test_scene_config_validation():
    SceneConfig()
    with pytest.raises(ValueError):
        SceneConfig(bg_level=0.9, body_level=0.8)  # body must be warmer
    with pytest.raises(ValueError):
        SceneConfig(height_range=(100, 200))  # below minimum person height
    with pytest.raises(ValueError):
        SceneConfig(height_range=(200, 150))
    with pytest.raises(ValueError):
        SceneConfig(bg_noise=-0.01)
    with pytest.raises(ValueError):
        SceneConfig(count=-1)


def test_silhouette_mask_shape():
    for height in (120, 160, 231, 320):
        mask = silhouette_mask(height)
        rows = np.nonzero(mask.any(axis=1))[0]
        assert rows[-1] - rows[0] + 1 == height  # tight vertically
        assert mask.shape[0] == height
        fill = mask.mean()
        assert 0.40 < fill < 0.62
        aspect = mask.shape[1] / mask.shape[0]
        assert 0.35 < aspect < 0.48


def test_silhouette_mask_symmetric():
    mask = silhouette_mask(200)
    assert np.array_equal(mask, mask[:, ::-1])


def test_quantize_levels():
    gen = np.random.Generator(np.random.Philox(1))
    arr = gen.uniform(-0.2, 1.2, size=(16, 16))
    q = quantize_levels(arr)
    assert q.min() >= 0.0 and q.max() <= 1.0
    assert np.array_equal(q, quantize_levels(q))
    assert np.allclose(q * 255, np.round(q * 255), atol=1e-9)


def test_generate_scene_deterministic():
    cfg = SceneConfig(image_w=200, image_h=200, height_range=(120, 150))
    a = generate_scene(RngStream(77), cfg, "s")
    b = generate_scene(RngStream(77), cfg, "s")
    assert a.boxes == b.boxes
    assert np.array_equal(a.image.pixels, b.image.pixels)


def test_generate_scene_box_is_tight():
    cfg = SceneConfig(image_w=300, image_h=400, height_range=(120, 200))
    root = RngStream(3)
    for i in range(10):
        s = generate_scene(root.child(i), cfg, f"s{i}")
        (box,) = s.boxes
        assert cfg.height_range[0] <= box.h <= cfg.height_range[1]
        assert box.inside(cfg.image_w, cfg.image_h)
        region = s.image.pixels[box.y : box.y + box.h, box.x : box.x + box.w]
        assert region.max() > 0.5  # body pixels present
        assert region[0].max() > 0.5 and region[-1].max() > 0.5  # tight rows


def test_background_level_without_noise():
    cfg = SceneConfig(image_w=200, image_h=200, height_range=(120, 130), bg_noise=0.0)
    s = generate_scene(RngStream(4), cfg, "s")
    corner = s.image.pixels[0, 0]
    assert corner == np.floor(0.25 * 255 + 0.5) / 255


def test_body_pixels_are_noise_free():
    # same stream, different noise settings: the body must be identical
    # because height and placement are drawn before the noise field
    quiet = SceneConfig(image_w=220, image_h=220, height_range=(130, 160), bg_noise=0.0)
    noisy = SceneConfig(image_w=220, image_h=220, height_range=(130, 160), bg_noise=0.02)
    a = generate_scene(RngStream(8), quiet, "s")
    b = generate_scene(RngStream(8), noisy, "s")
    assert a.boxes == b.boxes
    (box,) = a.boxes
    ra = a.image.pixels[box.y : box.y + box.h, box.x : box.x + box.w]
    rb = b.image.pixels[box.y : box.y + box.h, box.x : box.x + box.w]
    body = ra > 0.5
    assert np.array_equal(ra[body], rb[body])
    assert not np.array_equal(a.image.pixels, b.image.pixels)


def test_dataset_round_trip(tmp_path):
    cfg = SceneConfig(image_w=220, image_h=200, height_range=(120, 150), count=4)
    written = generate_dataset(RngStream(11), cfg, tmp_path)
    assert len(written) == 4
    loaded = load_dataset(tmp_path)
    assert [s.id for s in loaded] == [s.id for s in written]
    for w, l in zip(written, loaded):
        assert w.boxes == l.boxes
        assert np.array_equal(w.image.pixels, l.image.pixels)
    doc = json.loads((tmp_path / "annotations.json").read_text())
    assert [e["id"] for e in doc["samples"]] == [s.id for s in written]
    img = load_pgm(tmp_path / "images" / "scene_0000.pgm")
    assert np.array_equal(img.pixels, written[0].image.pixels)


def test_generate_dataset_deterministic(tmp_path):
    cfg = SceneConfig(image_w=200, image_h=180, height_range=(120, 140), count=3)
    generate_dataset(RngStream(12), cfg, tmp_path / "a")
    generate_dataset(RngStream(12), cfg, tmp_path / "b")
    for name in ("annotations.json", "images/scene_0002.pgm"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_load_dataset_missing_image(tmp_path):
    cfg = SceneConfig(image_w=200, image_h=180, height_range=(120, 140), count=2)
    generate_dataset(RngStream(13), cfg, tmp_path)
    (tmp_path / "images" / "scene_0001.pgm").unlink()
    with pytest.raises(FileNotFoundError) as err:
        load_dataset(tmp_path)
    assert "scene_0001" in str(err.value)


def test_load_dataset_missing_manifest(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path)


def test_load_dataset_filters_short_boxes(tmp_path):
    cfg = SceneConfig(image_w=260, image_h=240, height_range=(130, 150), count=2)
    generate_dataset(RngStream(14), cfg, tmp_path)
    path = tmp_path / "annotations.json"
    doc = json.loads(path.read_text())
    # shrink one annotated box below the usable minimum, add an extra tall one
    first = doc["samples"][0]
    tall = first["boxes"][0]
    first["boxes"] = [[tall[0], tall[1], tall[2], MIN_PERSON_HEIGHT - 1], tall]
    doc["samples"][1]["boxes"] = [[1, 1, 10, MIN_PERSON_HEIGHT - 1]]
    path.write_text(json.dumps(doc))
    loaded = load_dataset(tmp_path)
    assert len(loaded) == 1  # sample 1 has no usable box left
    assert len(loaded[0].boxes) == 1
    assert loaded[0].boxes[0].h >= MIN_PERSON_HEIGHT


def test_scene_sample_validation():
    cfg = SceneConfig(image_w=200, image_h=180, height_range=(120, 140))
    s = generate_scene(RngStream(15), cfg, "s")
    with pytest.raises(ValueError):
        SceneSample(id="x", image=s.image, boxes=())
