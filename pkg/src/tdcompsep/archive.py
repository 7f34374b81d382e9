"""On-disk simulation archives.

An archive is a directory holding ``manifest.json`` and one binary file per
array.  Manifest schema (format_version 1)::

    {
      "format": "tdcompsep-archive",
      "format_version": 1,
      "config": {...SimulationConfig fields...},
      "arrays": [{"name": "sky", "file": "sky.bin", "shape": [6, n_pix],
                  "sha256": "..."}, {"name": "stream_0", ...}, ...]
    }

Binary layout: 8-byte magic ``b"TDCSARR1"``, little-endian uint32 ``ndim``,
``ndim`` little-endian uint64 dimensions, then the data as little-endian
float64 in C order.  Scans and noise models are rebuilt from the config.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import InvalidParameter
from .simulator import SimulationArchive, SimulationConfig, SkyModel

FORMAT = "tdcompsep-archive"
FORMAT_VERSION = 1
MAGIC = b"TDCSARR1"
MANIFEST = "manifest.json"


def write_array(path, arr: np.ndarray) -> str:
    """Write one array; returns the sha256 of the file contents."""
    arr = np.ascontiguousarray(arr, dtype="<f8")
    header = MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
    payload = header + arr.tobytes()
    Path(path).write_bytes(payload)
    return hashlib.sha256(payload).hexdigest()


def read_array(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise InvalidParameter(f"{path}: not an archive array file")
    (ndim,) = struct.unpack_from("<I", raw, 8)
    shape = struct.unpack_from(f"<{ndim}Q", raw, 12)
    offset = 12 + 8 * ndim
    count = int(np.prod(shape, dtype=np.int64))
    if len(raw) - offset != 8 * count:
        raise InvalidParameter(f"{path}: data length does not match header")
    return np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape).copy()


def save_archive(archive: SimulationArchive, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    arrays = [("sky", archive.sky.maps)]
    arrays += [(f"stream_{f}", d) for f, d in enumerate(archive.streams)]
    entries = []
    for name, arr in arrays:
        fname = f"{name}.bin"
        digest = write_array(directory / fname, arr)
        entries.append({"name": name, "file": fname, "shape": list(np.shape(arr)),
                        "sha256": digest})
    manifest = {"format": FORMAT, "format_version": FORMAT_VERSION,
                "config": archive.config.to_dict(), "arrays": entries}
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return directory


def load_archive(directory, verify: bool = True) -> SimulationArchive:
    directory = Path(directory)
    mpath = directory / MANIFEST
    if not mpath.is_file():
        raise InvalidParameter(f"{directory}: no {MANIFEST}")
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidParameter(f"{mpath}: {exc}") from None
    if manifest.get("format") != FORMAT:
        raise InvalidParameter(f"{mpath}: unknown format {manifest.get('format')!r}")
    if manifest.get("format_version") != FORMAT_VERSION:
        raise InvalidParameter(f"{mpath}: unsupported format_version "
                               f"{manifest.get('format_version')!r}")
    config = SimulationConfig.from_dict(manifest["config"])
    arrays = {}
    for entry in manifest["arrays"]:
        path = directory / entry["file"]
        if verify and "sha256" in entry:
            if hashlib.sha256(path.read_bytes()).hexdigest() != entry["sha256"]:
                raise InvalidParameter(f"{path}: checksum mismatch")
        arr = read_array(path)
        if list(arr.shape) != list(entry["shape"]):
            raise InvalidParameter(f"{path}: shape differs from manifest")
        arrays[entry["name"]] = arr
    n_freq = len(config.frequencies)
    try:
        streams = [arrays[f"stream_{f}"] for f in range(n_freq)]
        sky_maps = arrays["sky"]
    except KeyError as exc:
        raise InvalidParameter(f"{mpath}: missing array {exc}") from None
    sky = SkyModel(sky_maps, config.patch_rows, config.patch_cols, config.amplitudes, config.seed)
    return SimulationArchive(config, config.scans(), config.noise_models(), sky, streams,
                             manifest["format_version"])
