"""On-disk raster and scene formats.

- Masks: 8-bit grayscale PNG with values {0, 255}.
- Color: 8-bit RGB PNG.
- Depth ("CPD1"): magic, little-endian uint32 width/height, then
  row-major little-endian float32 distances (+inf for no-hit).
- Normals ("CPN1"): same header scheme, three float32 channels per pixel.
- Scenes: JSON list of primitives with centers, sizes, and albedo.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .rasters import DepthMap, MaskImage, NormalMap, RgbImage
from .scene import Box, SdfScene, Sphere

DEPTH_MAGIC = b"CPD1"
NORMAL_MAGIC = b"CPN1"


def write_mask_png(mask: MaskImage, path) -> None:
    Image.fromarray(mask.data * np.uint8(255), mode="L").save(path, format="PNG")


def read_mask_png(path) -> MaskImage:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L") if im.mode != "L" else im)
    if not np.isin(arr, (0, 255)).all():
        raise ValueError(f"{path}: mask PNG must contain only 0 and 255")
    return MaskImage((arr == 255).astype(np.uint8))


def write_color_png(img: RgbImage, path) -> None:
    Image.fromarray(img.data, mode="RGB").save(path, format="PNG")


def read_color_png(path) -> RgbImage:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"))
    return RgbImage(arr)


def _write_header(f, magic: bytes, width: int, height: int) -> None:
    f.write(magic)
    f.write(struct.pack("<II", width, height))


def _read_header(f, magic: bytes, path) -> tuple[int, int]:
    got = f.read(4)
    if got != magic:
        raise ValueError(f"{path}: bad magic {got!r}, expected {magic!r}")
    width, height = struct.unpack("<II", f.read(8))
    return width, height


def write_depth_cpd(depth: DepthMap, path) -> None:
    with open(path, "wb") as f:
        _write_header(f, DEPTH_MAGIC, depth.width, depth.height)
        f.write(np.ascontiguousarray(depth.data, dtype="<f4").tobytes())


def read_depth_cpd(path) -> DepthMap:
    with open(path, "rb") as f:
        width, height = _read_header(f, DEPTH_MAGIC, path)
        data = np.frombuffer(f.read(), dtype="<f4")
    if data.size != width * height:
        raise ValueError(f"{path}: expected {width * height} floats, got {data.size}")
    return DepthMap(data.reshape(height, width).astype(np.float32))


def write_normal_cpn(normal: NormalMap, path) -> None:
    with open(path, "wb") as f:
        _write_header(f, NORMAL_MAGIC, normal.width, normal.height)
        f.write(np.ascontiguousarray(normal.data, dtype="<f4").tobytes())


def read_normal_cpn(path) -> NormalMap:
    with open(path, "rb") as f:
        width, height = _read_header(f, NORMAL_MAGIC, path)
        data = np.frombuffer(f.read(), dtype="<f4")
    if data.size != width * height * 3:
        raise ValueError(f"{path}: expected {width * height * 3} floats, got {data.size}")
    return NormalMap(data.reshape(height, width, 3).astype(np.float32))


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def scene_to_json(scene: SdfScene) -> str:
    prims = []
    for p in scene.primitives:
        if isinstance(p, Sphere):
            prims.append({"type": "sphere", "center": list(p.center),
                          "radius": p.radius, "albedo": list(p.albedo)})
        else:
            prims.append({"type": "box", "center": list(p.center),
                          "half_extents": list(p.half_extents),
                          "albedo": list(p.albedo)})
    return json.dumps({"primitives": prims}, indent=2)


def scene_from_json(text: str) -> SdfScene:
    doc = json.loads(text)
    prims = []
    for entry in doc["primitives"]:
        albedo = tuple(int(v) for v in entry.get("albedo", (200, 200, 200)))
        if entry["type"] == "sphere":
            prims.append(Sphere(center=tuple(entry["center"]),
                                radius=float(entry["radius"]), albedo=albedo))
        elif entry["type"] == "box":
            prims.append(Box(center=tuple(entry["center"]),
                             half_extents=tuple(entry["half_extents"]),
                             albedo=albedo))
        else:
            raise ValueError(f"unknown primitive type {entry['type']!r}")
    return SdfScene(prims)


def save_scene(scene: SdfScene, path) -> None:
    Path(path).write_text(scene_to_json(scene), encoding="utf-8")


def load_scene(path) -> SdfScene:
    return scene_from_json(Path(path).read_text(encoding="utf-8"))
