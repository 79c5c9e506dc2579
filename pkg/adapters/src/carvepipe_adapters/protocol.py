"""The stage file protocol, reimplemented adapter-side.

Deliberately independent of the core package: adapters talk to the
pipeline only through files. Formats:

- pose.json: {"pose": {polar_deg, azimuth_deg, radius, fov_deg},
  "width": W, "height": H}
- mask.png: 8-bit grayscale, strictly {0, 255}
- depth.cpd: b"CPD1" + uint32 LE width/height + float32 LE distances
  (+inf = no hit), row-major
- normal.cpn: b"CPN1" + same header + 3 x float32 per pixel
- outpainted.png / upscaled.png: 8-bit RGB
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

DEPTH_MAGIC = b"CPD1"
NORMAL_MAGIC = b"CPN1"


class AdapterError(Exception):
    """Raised when inputs are unusable or outputs fail self-validation."""


@dataclass(frozen=True)
class PoseInfo:
    polar_deg: float
    azimuth_deg: float
    radius: float
    fov_deg: float
    width: int
    height: int

    @property
    def camera_center(self) -> np.ndarray:
        th = math.radians(self.polar_deg)
        ph = math.radians(self.azimuth_deg)
        return np.array([
            self.radius * math.sin(th) * math.cos(ph),
            self.radius * math.sin(th) * math.sin(ph),
            self.radius * math.cos(th),
        ])

    @property
    def forward(self) -> np.ndarray:
        c = self.camera_center
        return -c / np.linalg.norm(c)


def read_pose(input_dir: Path) -> PoseInfo:
    path = Path(input_dir) / "pose.json"
    if not path.is_file():
        raise AdapterError(f"missing protocol file: {path}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    pose = doc["pose"]
    return PoseInfo(
        polar_deg=float(pose["polar_deg"]),
        azimuth_deg=float(pose["azimuth_deg"]),
        radius=float(pose.get("radius", 3.0)),
        fov_deg=float(pose.get("fov_deg", 60.0)),
        width=int(doc["width"]),
        height=int(doc["height"]),
    )


def read_color(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise AdapterError(f"missing protocol file: {path}")
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def write_color(array: np.ndarray, path) -> None:
    Image.fromarray(array.astype(np.uint8), mode="RGB").save(path, format="PNG")


def write_mask(binary: np.ndarray, path) -> None:
    data = (binary.astype(bool).astype(np.uint8)) * 255
    Image.fromarray(data, mode="L").save(path, format="PNG")


def read_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L") if im.mode != "L" else im)
    if not np.isin(arr, (0, 255)).all():
        raise AdapterError(f"{path}: mask must be strictly binary {{0, 255}}")
    return arr == 255


def write_depth(depth: np.ndarray, path) -> None:
    h, w = depth.shape
    with open(path, "wb") as f:
        f.write(DEPTH_MAGIC)
        f.write(struct.pack("<II", w, h))
        f.write(np.ascontiguousarray(depth, dtype="<f4").tobytes())


def write_normal(normal: np.ndarray, path) -> None:
    h, w, _ = normal.shape
    with open(path, "wb") as f:
        f.write(NORMAL_MAGIC)
        f.write(struct.pack("<II", w, h))
        f.write(np.ascontiguousarray(normal, dtype="<f4").tobytes())


def _read_float_file(path, magic: bytes, channels: int) -> np.ndarray:
    with open(path, "rb") as f:
        got = f.read(4)
        if got != magic:
            raise AdapterError(f"{path}: bad magic {got!r}")
        w, h = struct.unpack("<II", f.read(8))
        data = np.frombuffer(f.read(), dtype="<f4")
    if data.size != w * h * channels:
        raise AdapterError(f"{path}: truncated payload")
    shape = (h, w) if channels == 1 else (h, w, channels)
    return data.reshape(shape)


OUTPUT_FILES = {
    "segment": "mask.png",
    "depth": "depth.cpd",
    "normal": "normal.cpn",
    "outpaint": "outpainted.png",
    "superres": "upscaled.png",
}


def validate_output(kind: str, input_dir) -> None:
    """Self-validation an adapter must pass before it may exit 0."""
    d = Path(input_dir)
    pose = read_pose(d)
    w, h = pose.width, pose.height
    out = d / OUTPUT_FILES[kind]
    if not out.is_file():
        raise AdapterError(f"output missing: {out}")
    if kind == "segment":
        mask = read_mask(out)
        if mask.shape != (h, w):
            raise AdapterError(f"{out}: shape {mask.shape[::-1]} != {(w, h)}")
    elif kind == "depth":
        depth = _read_float_file(out, DEPTH_MAGIC, 1)
        if depth.shape != (h, w):
            raise AdapterError(f"{out}: shape mismatch")
        finite = np.isfinite(depth)
        if np.isnan(depth).any() or np.any(depth[finite] <= 0.0):
            raise AdapterError(f"{out}: depths must be positive or +inf")
    elif kind == "normal":
        normal = _read_float_file(out, NORMAL_MAGIC, 3)
        if normal.shape != (h, w, 3):
            raise AdapterError(f"{out}: shape mismatch")
        norms = np.linalg.norm(normal.astype(np.float64), axis=2)
        bad = (norms > 1e-6) & (np.abs(norms - 1.0) > 1e-3)
        if bad.any():
            raise AdapterError(f"{out}: {int(bad.sum())} non-unit normals")
    elif kind == "outpaint":
        img = read_color(out)
        render = read_color(d / "render.png")
        if img.shape != render.shape:
            raise AdapterError(f"{out}: shape differs from render.png")
        outmask_path = d / "outmask.png"
        fgmask_path = d / "fgmask.png"
        if outmask_path.is_file() and fgmask_path.is_file():
            frozen = ~read_mask(outmask_path) & read_mask(fgmask_path)
            if not (img[frozen] == render[frozen]).all():
                raise AdapterError(
                    f"{out}: foreground outside the outpainting mask was modified")
    elif kind == "superres":
        img = read_color(out)
        if img.shape != (2 * h, 2 * w, 3):
            raise AdapterError(f"{out}: expected {2 * w}x{2 * h}")
    else:
        raise AdapterError(f"unknown stage kind {kind!r}")


def write_error_file(input_dir, kind: str, message: str) -> None:
    doc = {"adapter": kind, "error": message}
    try:
        (Path(input_dir) / "error.json").write_text(
            json.dumps(doc, indent=2), encoding="utf-8")
    except OSError:
        pass  # the nonzero exit still signals failure


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        import tomllib  # py311+
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as f:
        return tomllib.load(f)
