import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from edgereid.dataset_io import (
    IdentityAnnotation,
    LabelMap,
    LabelSchema,
    PersonImage,
    discover_pairs,
    lip_schema,
    load_image,
    load_label_map,
    load_schema,
    parse_market_filename,
    validate_pair,
)
from edgereid.errors import (
    DataError,
    DimensionMismatch,
    FilenameParseError,
    ImageDecodeError,
    SchemaViolation,
)


def test_lip_schema_shape():
    s = lip_schema()
    assert s.class_count == 20
    assert s.class_names[0] == "Background"
    assert s.background_index == 0


def test_load_single_red_pixel(tmp_path):
    p = tmp_path / "red.png"
    Image.fromarray(np.array([[[255, 0, 0]]], dtype=np.uint8)).save(p)
    img = load_image(p)
    assert (img.width, img.height) == (1, 1)
    assert img.pixels.reshape(-1).tolist() == [255, 0, 0]


def test_load_jpeg_dimensions(tmp_path):
    p = tmp_path / "person.jpg"
    arr = np.random.default_rng(0).integers(0, 256, (128, 64, 3), dtype=np.uint8)
    Image.fromarray(arr).save(p, quality=90)
    img = load_image(p)
    assert (img.width, img.height) == (64, 128)


def test_grayscale_is_replicated(tmp_path):
    p = tmp_path / "gray.png"
    Image.fromarray(np.array([[10, 200]], dtype=np.uint8), mode="L").save(p)
    img = load_image(p)
    assert img.pixels.tolist() == [[[10, 10, 10], [200, 200, 200]]]


def test_truncated_file_fails(tmp_path):
    p = tmp_path / "t.png"
    arr = np.random.default_rng(1).integers(0, 256, (64, 64, 3), dtype=np.uint8)
    Image.fromarray(arr).save(p)
    data = p.read_bytes()
    p.write_bytes(data[: len(data) // 2])
    with pytest.raises(ImageDecodeError):
        load_image(p)


def test_missing_file(tmp_path):
    with pytest.raises(ImageDecodeError):
        load_image(tmp_path / "nope.png")


def test_png_round_trip_is_lossless(tmp_path):
    arr = np.random.default_rng(2).integers(0, 256, (17, 9, 3), dtype=np.uint8)
    p = tmp_path / "x.png"
    Image.fromarray(arr).save(p)
    assert np.array_equal(load_image(p).pixels, arr)


def _mask_png(path, values, mode="L"):
    Image.fromarray(np.array(values, dtype=np.uint8), mode=mode).save(path)


def test_load_label_map_values(tmp_path):
    p = tmp_path / "m.png"
    _mask_png(p, [[0, 5], [9, 13]])
    m = load_label_map(p, lip_schema())
    assert m.labels.tolist() == [[0, 5], [9, 13]]


def test_load_palette_mask(tmp_path):
    p = tmp_path / "m.png"
    img = Image.fromarray(np.array([[1, 2], [3, 19]], dtype=np.uint8), mode="P")
    img.putpalette([i % 256 for i in range(768)])
    img.save(p)
    assert load_label_map(p, lip_schema()).labels.tolist() == [[1, 2], [3, 19]]


def test_label_out_of_schema(tmp_path):
    p = tmp_path / "m.png"
    _mask_png(p, [[0, 0], [0, 20]])
    with pytest.raises(SchemaViolation) as info:
        load_label_map(p, lip_schema())
    assert info.value.value == 20
    assert (info.value.row, info.value.col) == (1, 1)
    assert "20" in str(info.value) and "row=1" in str(info.value)


def test_rgb_mask_rejected(tmp_path):
    p = tmp_path / "m.png"
    Image.fromarray(np.zeros((2, 2, 3), dtype=np.uint8)).save(p)
    with pytest.raises(ImageDecodeError):
        load_label_map(p, lip_schema())


def test_all_background_mask_is_valid(tmp_path):
    p = tmp_path / "m.png"
    _mask_png(p, np.zeros((4, 4)))
    m = load_label_map(p, lip_schema())
    assert m.is_empty_foreground()


@pytest.mark.parametrize(
    "name, expected",
    [
        ("0002_c1s1_000451_03.jpg", IdentityAnnotation(2, 1, 1, 451)),
        ("-1_c3s2_000100_01.jpg", IdentityAnnotation(-1, 3, 2, 100)),
        ("1501_c6s4_001877_02.png", IdentityAnnotation(1501, 6, 4, 1877)),
        ("0000_c5s3_095013_04.jpg", IdentityAnnotation(0, 5, 3, 95013)),
    ],
)
def test_parse_market_filename(name, expected):
    assert parse_market_filename(name) == expected


@pytest.mark.parametrize(
    "name", ["query.jpg", "0002_c1_000451_03.jpg", "0002_c0s1_000451_03.jpg", "-2_c1s1_000001_00.jpg", ""]
)
def test_parse_market_filename_rejects(name):
    with pytest.raises(FilenameParseError) as info:
        parse_market_filename(name)
    assert info.value.name == name


@given(st.text(max_size=40))
@settings(max_examples=300)
def test_parse_market_filename_fuzz(name):
    try:
        ann = parse_market_filename(name)
    except FilenameParseError:
        return
    assert ann.person_id >= -1


def test_validate_pair():
    schema = lip_schema()
    img = PersonImage(np.zeros((128, 64, 3), dtype=np.uint8))
    validate_pair(img, LabelMap(np.zeros((128, 64), dtype=np.int64), schema))
    with pytest.raises(DimensionMismatch):
        validate_pair(img, LabelMap(np.zeros((144, 72), dtype=np.int64), schema))
    with pytest.raises(DimensionMismatch) as info:
        validate_pair(img, LabelMap(np.zeros((64, 128), dtype=np.int64), schema))
    assert "64x128" in str(info.value) and "128x64" in str(info.value)


def test_schema_from_json(tmp_path):
    doc = {"name": "pascal", "class_count": 3, "class_names": ["bg", "head", "body"], "background_index": 0}
    p = tmp_path / "s.json"
    p.write_text(json.dumps(doc))
    assert load_schema(p) == LabelSchema("pascal", 3, ("bg", "head", "body"), 0)


def test_schema_invariants():
    with pytest.raises(DataError):
        LabelSchema("x", 2, ("a",), 0)
    with pytest.raises(DataError):
        LabelSchema("x", 2, ("a", "b"), 2)


def test_person_image_rejects_bad_buffers():
    with pytest.raises(DataError):
        PersonImage(np.zeros((0, 4, 3), dtype=np.uint8))
    with pytest.raises(DataError):
        PersonImage(np.zeros((4, 4), dtype=np.uint8))


def test_values_are_immutable():
    img = PersonImage(np.zeros((2, 2, 3), dtype=np.uint8))
    with pytest.raises(ValueError):
        img.pixels[0, 0, 0] = 1


def test_discover_pairs(tmp_path):
    (tmp_path / "images").mkdir()
    (tmp_path / "masks").mkdir()
    for stem in ("b", "a", "c"):
        Image.fromarray(np.zeros((2, 2, 3), dtype=np.uint8)).save(tmp_path / "images" / f"{stem}.png")
    for stem in ("a", "b"):
        _mask_png(tmp_path / "masks" / f"{stem}.png", np.zeros((2, 2)))
    pairs = discover_pairs(tmp_path)
    assert [p.stem for p in pairs] == ["a", "b", "c"]
    assert pairs[2].mask is None
