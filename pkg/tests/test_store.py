import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import hogback  # noqa: F401  (registers the model classes)
from hogback.errors import CorruptError, EmptyCorpusError, IoError, VersionError
from hogback.gaussian import fit_stationary, image_eigenbasis, materialize
from hogback.image import save_image, Image
from hogback.store import (
    config_hash,
    load_annotations,
    load_corpus,
    load_model,
    read_container,
    save_model,
    write_container,
    write_manifest,
)


def roundtrip(tmp_path, tensors, metadata=None):
    p = tmp_path / "t.fvtb"
    write_container(p, tensors, metadata)
    return read_container(p)


def test_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {
        "a": rng.standard_normal((3, 4, 5)),
        "b": rng.standard_normal(7).astype(np.float32),
        "scalar": np.array([3.5]),
        "empty": np.zeros((0, 4)),
    }
    meta = {"nested": {"x": 1, "y": [1, 2, 3]}, "name": "model"}
    got, got_meta = roundtrip(tmp_path, tensors, meta)
    assert set(got) == set(tensors)
    for k in tensors:
        assert got[k].dtype == tensors[k].dtype
        assert got[k].shape == tensors[k].shape
        assert np.array_equal(got[k], tensors[k])
    assert got_meta == meta


@settings(max_examples=30, deadline=None)
@given(
    shapes=st.lists(
        st.lists(st.integers(0, 6), min_size=0, max_size=3), min_size=1, max_size=4
    ),
    seed=st.integers(0, 2**31),
    use_f32=st.booleans(),
)
def test_roundtrip_property(tmp_path_factory, shapes, seed, use_f32):
    rng = np.random.default_rng(seed)
    dt = np.float32 if use_f32 else np.float64
    tensors = {
        f"t{i}": rng.standard_normal(tuple(s)).astype(dt) for i, s in enumerate(shapes)
    }
    p = tmp_path_factory.mktemp("fvtb") / "x.fvtb"
    write_container(p, tensors)
    got, _ = read_container(p)
    for k, v in tensors.items():
        assert got[k].tobytes() == v.tobytes() and got[k].shape == v.shape


def test_payload_alignment(tmp_path):
    p = tmp_path / "t.fvtb"
    write_container(p, {"a": np.ones(5), "b": np.ones(3)})
    raw = p.read_bytes()
    (hlen,) = struct.unpack_from("<Q", raw, 8)
    header = json.loads(raw[16 : 16 + hlen])
    for e in header["tensors"]:
        assert e["byte_offset"] % 64 == 0


def test_bad_magic_and_truncation(tmp_path):
    p = tmp_path / "t.fvtb"
    write_container(p, {"a": np.ones(5)})
    raw = bytearray(p.read_bytes())

    bad = tmp_path / "bad.fvtb"
    bad.write_bytes(b"XXXX" + bytes(raw[4:]))
    with pytest.raises(CorruptError):
        read_container(bad)

    bad.write_bytes(bytes(raw[: len(raw) - 8]))  # truncated payload
    with pytest.raises(CorruptError):
        read_container(bad)

    bad.write_bytes(bytes(raw[:10]))  # truncated header
    with pytest.raises(CorruptError):
        read_container(bad)


def test_version_rejected(tmp_path):
    p = tmp_path / "t.fvtb"
    write_container(p, {"a": np.ones(2)})
    raw = bytearray(p.read_bytes())
    struct.pack_into("<I", raw, 4, 99)
    p.write_bytes(bytes(raw))
    with pytest.raises(VersionError):
        read_container(p)


def _rewrite_header(path, mutate):
    raw = bytearray(path.read_bytes())
    (hlen,) = struct.unpack_from("<Q", raw, 8)
    header = json.loads(raw[16 : 16 + hlen])
    mutate(header)
    blob = json.dumps(header).encode()
    # keep the payload where it was by padding the header to its old length
    if len(blob) <= hlen:
        blob = blob + b" " * (hlen - len(blob))
        raw[16 : 16 + hlen] = blob
        path.write_bytes(bytes(raw))
    else:
        raise AssertionError("mutation grew the header; adjust the test")


def test_shape_length_mismatch(tmp_path):
    p = tmp_path / "t.fvtb"
    write_container(p, {"a": np.ones(8)})
    _rewrite_header(p, lambda h: h["tensors"][0].__setitem__("shape", [9]))
    with pytest.raises(CorruptError):
        read_container(p)


def test_overlapping_tensors(tmp_path):
    p = tmp_path / "t.fvtb"
    write_container(p, {"a": np.ones(8), "b": np.zeros(8)})

    def overlap(h):
        h["tensors"][1]["byte_offset"] = h["tensors"][0]["byte_offset"]

    _rewrite_header(p, overlap)
    with pytest.raises(CorruptError):
        read_container(p)


def test_offset_outside_file(tmp_path):
    p = tmp_path / "t.fvtb"
    write_container(p, {"a": np.ones(8)})
    # same digit count as the real offset so the header does not grow
    _rewrite_header(p, lambda h: h["tensors"][0].__setitem__("byte_offset", 999))
    with pytest.raises(CorruptError):
        read_container(p)


def test_malformed_header_json(tmp_path):
    p = tmp_path / "t.fvtb"
    write_container(p, {"a": np.ones(2)})
    raw = bytearray(p.read_bytes())
    (hlen,) = struct.unpack_from("<Q", raw, 8)
    raw[16 : 16 + hlen] = b"{" * hlen
    p.write_bytes(bytes(raw))
    with pytest.raises(CorruptError):
        read_container(p)


def test_missing_file():
    with pytest.raises(IoError):
        read_container("/nonexistent/path.fvtb")


def test_unsupported_dtype(tmp_path):
    with pytest.raises(IoError):
        write_container(tmp_path / "t.fvtb", {"a": np.ones(3, dtype=np.int32)})


def test_config_hash_stable_under_key_order():
    a = config_hash({"x": 1, "y": {"a": 2, "b": 3}})
    b = config_hash({"y": {"b": 3, "a": 2}, "x": 1})
    assert a == b and len(a) == 16
    assert config_hash({"x": 2}) != a


# --- model registry round-trips -------------------------------------------


@pytest.fixture(scope="module")
def small_model():
    rng = np.random.default_rng(1)
    return fit_stationary([rng.random((96, 96)) for _ in range(2)], max_cells=3)


def test_stationary_model_roundtrip(tmp_path, small_model):
    p = tmp_path / "m.fvtb"
    save_model(small_model, p)
    back = load_model(p)
    assert type(back) is type(small_model)
    assert back.mu_pixel == small_model.mu_pixel
    assert np.array_equal(back.cov_pp, small_model.cov_pp)
    assert np.array_equal(back.cov_ph, small_model.cov_ph)
    assert np.array_equal(back.cov_hh, small_model.cov_hh)
    assert back.max_cells == 3 and back.sample_count == small_model.sample_count


def test_materialized_gaussian_roundtrip(tmp_path, small_model):
    g = materialize(small_model, 2, 2)
    p = tmp_path / "g.fvtb"
    save_model(g, p)
    back = load_model(p)
    assert np.array_equal(back.sigma_yy, g.sigma_yy)
    assert np.array_equal(back.sigma_xy, g.sigma_xy)
    assert back.lambda_yy == g.lambda_yy
    # the reloaded model must be immediately usable
    y = np.random.default_rng(2).random(g.mu_y.shape[0]) * 0.1
    from hogback.gaussian import ridge_invert_raw

    assert np.array_equal(ridge_invert_raw(back, y), ridge_invert_raw(g, y))


def test_image_basis_roundtrip(tmp_path, small_model):
    basis = image_eigenbasis(
        small_model, patch_pixels=8, k_per_scale=4, template_pixels=(24, 24)
    )
    p = tmp_path / "b.fvtb"
    save_model(basis, p)
    back = load_model(p)
    assert np.array_equal(back.vectors, basis.vectors)
    assert back.patch_pixels == 8 and back.stride == basis.stride


def test_unregistered_model_rejected(tmp_path):
    with pytest.raises(IoError):
        save_model(object(), tmp_path / "x.fvtb")
    p = tmp_path / "t.fvtb"
    write_container(p, {"a": np.ones(2)}, {"model_type": "no_such_tag"})
    with pytest.raises(CorruptError):
        load_model(p)


# --- corpus manifests and annotations -------------------------------------


def make_corpus_dir(tmp_path, n=3):
    rng = np.random.default_rng(5)
    names = []
    for i in range(n):
        name = f"img{i}.png"
        save_image(Image(rng.random((32, 40))), tmp_path / name)
        names.append(name)
    return names


def test_manifest_roundtrip_and_iteration(tmp_path):
    names = make_corpus_dir(tmp_path)
    mpath = tmp_path / "manifest.json"
    write_manifest(mpath, tmp_path, names)
    corpus = load_corpus(mpath, strict=True).require_nonempty()
    assert len(corpus) == 3
    imgs = list(corpus)
    assert all(im.data.shape == (32, 40) for im in imgs)
    entry = json.loads(mpath.read_text())["entries"][0]
    assert entry["width"] == 40 and entry["height"] == 32


def test_strict_hash_mismatch(tmp_path):
    names = make_corpus_dir(tmp_path, n=1)
    mpath = tmp_path / "manifest.json"
    write_manifest(mpath, tmp_path, names)
    (tmp_path / names[0]).write_bytes(b"\x89PNG tampered")
    with pytest.raises(CorruptError):
        load_corpus(mpath, strict=True).load(0)


def test_missing_entry_and_empty_manifest(tmp_path):
    mpath = tmp_path / "manifest.json"
    mpath.write_text(json.dumps({"root": ".", "entries": [{"path": "gone.png"}]}))
    with pytest.raises(IoError):
        load_corpus(mpath).load(0)

    empty = tmp_path / "empty.json"
    empty.write_text(json.dumps({"root": ".", "entries": []}))
    with pytest.raises(EmptyCorpusError):
        load_corpus(empty).require_nonempty()

    dup = tmp_path / "dup.json"
    dup.write_text(
        json.dumps({"root": ".", "entries": [{"path": "a.png"}, {"path": "a.png"}]})
    )
    with pytest.raises(CorruptError):
        load_corpus(dup)


def test_annotations_jsonl(tmp_path):
    apath = tmp_path / "ann.jsonl"
    recs = [
        {"image": "img0.png", "x": 0, "y": 8, "w": 40, "h": 40, "category": "cat"},
        {"image": "img1.png", "x": 4, "y": 4, "w": 24, "h": 24},
    ]
    apath.write_text("\n".join(json.dumps(r) for r in recs) + "\n\n")
    loaded = load_annotations(apath)
    assert len(loaded) == 2
    assert loaded[0]["category"] == "cat"
    assert loaded[1]["category"] == "unknown"

    apath.write_text('{"image": "a.png", "x": 1}\n')
    with pytest.raises(CorruptError):
        load_annotations(apath)
    apath.write_text("not json\n")
    with pytest.raises(CorruptError):
        load_annotations(apath)
    with pytest.raises(IoError):
        load_annotations(tmp_path / "missing.jsonl")


def test_corpus_annotations_hookup(tmp_path):
    names = make_corpus_dir(tmp_path, n=1)
    apath = tmp_path / "ann.jsonl"
    apath.write_text(json.dumps({"image": names[0], "x": 0, "y": 0, "w": 8, "h": 8}))
    mpath = tmp_path / "manifest.json"
    write_manifest(mpath, tmp_path, names, annotations="ann.jsonl")
    corpus = load_corpus(mpath)
    anns = corpus.annotations()
    assert len(anns) == 1 and anns[0]["image"] == names[0]
