"""Offline baseline adapters.

These need no model weights and exist to exercise the protocol end to
end: the outpaint echo copies the render through unchanged, the segment
baseline thresholds against the white background, depth/normal emit flat
but well-formed geometry, and superres is a plain 2x resample. Useful as
protocol smoke tests and as templates for real wrappers.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .protocol import (
    AdapterError,
    read_color,
    read_mask,
    read_pose,
    write_color,
    write_depth,
    write_mask,
    write_normal,
)

WHITE_THRESHOLD = 250


def _foreground(input_dir: Path) -> np.ndarray:
    """Foreground from mask.png when present, else a white-background
    threshold of color.png."""
    mask_path = input_dir / "mask.png"
    if mask_path.is_file():
        return read_mask(mask_path)
    color = read_color(input_dir / "color.png")
    return (color < WHITE_THRESHOLD).any(axis=2)


def run_segment(input_dir: Path, config: dict, malformed: bool = False) -> None:
    pose = read_pose(input_dir)
    color = read_color(input_dir / "color.png")
    if color.shape[:2] != (pose.height, pose.width):
        raise AdapterError("color.png disagrees with pose.json dimensions")
    threshold = int(config.get("white_threshold", WHITE_THRESHOLD))
    fg = (color < threshold).any(axis=2)
    if malformed:
        # conformance-testing aid: emit an out-of-protocol grayscale mask
        Image.fromarray(np.full(fg.shape, 128, np.uint8), mode="L").save(
            input_dir / "mask.png", format="PNG")
        return
    write_mask(fg, input_dir / "mask.png")


def run_depth(input_dir: Path, config: dict) -> None:
    pose = read_pose(input_dir)
    fg = _foreground(input_dir)
    depth = np.full((pose.height, pose.width), np.inf, np.float32)
    # flat metric depth at the view-sphere radius; a real predictor
    # replaces this with per-pixel estimates
    depth[fg] = np.float32(config.get("constant_depth", pose.radius))
    write_depth(depth, input_dir / "depth.cpd")


def run_normal(input_dir: Path, config: dict) -> None:
    pose = read_pose(input_dir)
    fg = _foreground(input_dir)
    normal = np.zeros((pose.height, pose.width, 3), np.float32)
    normal[fg] = (-pose.forward).astype(np.float32)  # facing the camera
    write_normal(normal, input_dir / "normal.cpn")


def run_outpaint(input_dir: Path, config: dict) -> None:
    render = input_dir / "render.png"
    if not render.is_file():
        raise AdapterError(f"missing protocol file: {render}")
    (input_dir / "outpainted.png").write_bytes(render.read_bytes())


def run_superres(input_dir: Path, config: dict) -> None:
    color = read_color(input_dir / "color.png")
    h, w = color.shape[:2]
    resample = {"nearest": Image.NEAREST, "lanczos": Image.LANCZOS}[
        config.get("resample", "lanczos")]
    up = Image.fromarray(color, mode="RGB").resize((2 * w, 2 * h), resample)
    write_color(np.asarray(up), input_dir / "upscaled.png")
