"""Persistence: self-describing binary tensor container, corpus manifests,
and annotation loading.

Container layout (little-endian throughout):

    bytes 0..3    magic "FVTB"
    bytes 4..7    format version, u32
    bytes 8..15   header length in bytes, u64
    header        UTF-8 JSON: {"tensors": [{name, dtype, shape,
                  byte_offset, byte_length}, ...], "metadata": {...}}
    payload       raw tensor bytes; every tensor 64-byte aligned,
                  byte_offset measured from the start of the file
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import CorruptError, EmptyCorpusError, IoError, VersionError
from .image import Image, load_image

MAGIC = b"FVTB"
VERSION = 1
ALIGN = 64

_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}


def _dtype_tag(arr: np.ndarray) -> str:
    if arr.dtype == np.float32:
        return "f32"
    if arr.dtype == np.float64:
        return "f64"
    raise IoError(f"unsupported tensor dtype {arr.dtype}; use float32 or float64")


def _align(n: int) -> int:
    return (n + ALIGN - 1) // ALIGN * ALIGN


def write_container(path, tensors: dict[str, np.ndarray], metadata: dict | None = None) -> None:
    """Write named tensors plus free-form metadata to a container file."""
    names = list(tensors)
    # np.require keeps 0-d shapes, unlike np.ascontiguousarray
    arrays = [np.require(tensors[n], requirements=["C"]) for n in names]
    entries = [
        {
            "name": n,
            "dtype": _dtype_tag(a),
            "shape": list(a.shape),
            "byte_offset": 0,
            "byte_length": a.nbytes,
        }
        for n, a in zip(names, arrays)
    ]
    header = {"tensors": entries, "metadata": metadata or {}}

    # Offsets depend on the header length, which depends on the offsets;
    # iterate until the layout is stable (converges in a couple of rounds).
    for _ in range(8):
        blob = json.dumps(header, sort_keys=True).encode("utf-8")
        pos = _align(16 + len(blob))
        changed = False
        for e in entries:
            if e["byte_offset"] != pos:
                e["byte_offset"] = pos
                changed = True
            pos = _align(pos + e["byte_length"])
        if not changed:
            break
    else:
        raise IoError("container header layout did not converge")

    try:
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<I", VERSION))
            f.write(struct.pack("<Q", len(blob)))
            f.write(blob)
            for e, a in zip(entries, arrays):
                f.write(b"\0" * (e["byte_offset"] - f.tell()))
                data = a.astype(a.dtype.newbyteorder("<"), copy=False)
                f.write(data.tobytes())
    except OSError as exc:
        raise IoError(f"cannot write container {path}: {exc}") from exc


def read_container(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a container; returns (tensors, metadata)."""
    try:
        raw = Path(path).read_bytes()
    except FileNotFoundError as exc:
        raise IoError(f"container not found: {path}") from exc
    except OSError as exc:
        raise IoError(f"cannot read container {path}: {exc}") from exc

    if len(raw) < 16 or raw[:4] != MAGIC:
        raise CorruptError(f"{path}: not a FVTB container")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise VersionError(f"{path}: container version {version}, reader supports {VERSION}")
    (hlen,) = struct.unpack_from("<Q", raw, 8)
    if 16 + hlen > len(raw):
        raise CorruptError(f"{path}: truncated header")
    try:
        header = json.loads(raw[16 : 16 + hlen].decode("utf-8"))
        entries = header["tensors"]
        metadata = header.get("metadata", {})
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise CorruptError(f"{path}: malformed header: {exc}") from exc

    spans = []
    tensors = {}
    for e in entries:
        try:
            name = e["name"]
            dtype = _DTYPES[e["dtype"]]
            shape = tuple(int(s) for s in e["shape"])
            off = int(e["byte_offset"])
            length = int(e["byte_length"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptError(f"{path}: malformed tensor entry: {exc}") from exc
        if int(np.prod(shape, dtype=np.int64)) * dtype.itemsize != length:
            raise CorruptError(f"{path}: tensor {name}: shape/length mismatch")
        if off < 0 or off + length > len(raw):
            raise CorruptError(f"{path}: tensor {name}: data outside file")
        for o2, l2, n2 in spans:
            if off < o2 + l2 and o2 < off + length:
                raise CorruptError(f"{path}: tensors {name} and {n2} overlap")
        spans.append((off, length, name))
        arr = np.frombuffer(raw, dtype=dtype, count=length // dtype.itemsize, offset=off)
        tensors[name] = arr.reshape(shape).copy()
    return tensors, metadata


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


# --- model registry -------------------------------------------------------
#
# Serializable model classes register a (type tag, to_tensors, from_tensors)
# triple; save_model/load_model dispatch on the tag stored in metadata.

_REGISTRY: dict[str, object] = {}
_TAGS: dict[type, str] = {}


def register_model(tag: str, cls) -> None:
    _REGISTRY[tag] = cls
    _TAGS[cls] = tag


def save_model(model, path) -> None:
    tag = _TAGS.get(type(model))
    if tag is None:
        raise IoError(f"unknown model type {type(model).__name__}")
    tensors, meta = model.to_tensors()
    meta = dict(meta)
    meta["model_type"] = tag
    write_container(path, tensors, meta)


def load_model(path):
    tensors, meta = read_container(path)
    tag = meta.get("model_type")
    cls = _REGISTRY.get(tag)
    if cls is None:
        raise CorruptError(f"{path}: unknown or missing model type tag {tag!r}")
    return cls.from_tensors(tensors, meta)


# --- corpus manifests and annotations ------------------------------------


class Corpus:
    """Lazy, order-preserving image source defined by a manifest file."""

    def __init__(self, manifest_path, strict: bool = False):
        self.manifest_path = Path(manifest_path)
        try:
            manifest = json.loads(self.manifest_path.read_text())
        except FileNotFoundError as exc:
            raise IoError(f"manifest not found: {manifest_path}") from exc
        except ValueError as exc:
            raise CorruptError(f"malformed manifest {manifest_path}: {exc}") from exc
        self.root = (self.manifest_path.parent / manifest.get("root", ".")).resolve()
        self.entries = manifest.get("entries", [])
        paths = [e["path"] for e in self.entries]
        if len(set(paths)) != len(paths):
            raise CorruptError(f"{manifest_path}: duplicate entry paths")
        self.annotations_path = manifest.get("annotations")
        self.strict = strict

    def __len__(self) -> int:
        return len(self.entries)

    def path_of(self, index: int) -> Path:
        return self.root / self.entries[index]["path"]

    def load(self, index: int) -> Image:
        entry = self.entries[index]
        path = self.root / entry["path"]
        if not path.exists():
            raise IoError(f"corpus entry missing: {entry['path']}")
        if self.strict and "sha256" in entry:
            digest = hashlib.sha256(path.read_bytes()).hexdigest()
            if digest != entry["sha256"]:
                raise CorruptError(f"corpus entry hash mismatch: {entry['path']}")
        return load_image(path)

    def __iter__(self):
        for i in range(len(self.entries)):
            yield self.load(i)

    def require_nonempty(self) -> "Corpus":
        if not self.entries:
            raise EmptyCorpusError(f"manifest {self.manifest_path} lists no images")
        return self

    def annotations(self) -> list[dict]:
        if not self.annotations_path:
            return []
        return load_annotations(self.manifest_path.parent / self.annotations_path)


def load_corpus(manifest_path, strict: bool = False) -> Corpus:
    return Corpus(manifest_path, strict=strict)


def write_manifest(path, root, image_paths, annotations=None) -> None:
    root = Path(root)
    entries = []
    for p in image_paths:
        full = root / p
        from PIL import Image as PilImage

        with PilImage.open(full) as im:
            width, height = im.size
        entries.append(
            {
                "path": str(p),
                "sha256": hashlib.sha256(full.read_bytes()).hexdigest(),
                "width": width,
                "height": height,
            }
        )
    manifest = {"root": str(root.resolve()), "entries": entries}
    if annotations is not None:
        manifest["annotations"] = str(annotations)
    Path(path).write_text(json.dumps(manifest, indent=1, sort_keys=True))


def load_annotations(path) -> list[dict]:
    """JSONL patch annotations: {image, x, y, w, h, category} per line."""
    try:
        lines = Path(path).read_text().splitlines()
    except FileNotFoundError as exc:
        raise IoError(f"annotations not found: {path}") from exc
    records = []
    for i, line in enumerate(lines):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
            for key in ("image", "x", "y", "w", "h"):
                rec[key]
        except (ValueError, KeyError) as exc:
            raise CorruptError(f"{path}:{i + 1}: bad annotation record: {exc}") from exc
        rec.setdefault("category", "unknown")
        records.append(rec)
    return records
