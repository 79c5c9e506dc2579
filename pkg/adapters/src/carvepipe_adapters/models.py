"""Wrappers around real off-the-shelf predictors and generators.

Every wrapper degrades to a clean AdapterError when its backing library
or endpoint is unavailable, so misconfiguration surfaces as a nonzero
exit with error.json rather than a stack trace. Model weights are never
bundled; configuration comes from the optional TOML file:

    [segment]
    backend = "rembg"                # rembg session, default model

    [depth]
    backend = "torch-hub"
    repo = "intel-isl/MiDaS"
    model = "DPT_Large"
    scale = 1.0                      # relative -> metric scale factor
    shift = 0.0

    [outpaint]
    endpoint = "http://localhost:7860/carvepipe-outpaint"
    timeout_s = 300

The depth wrapper emits ``scale * prediction + shift`` as metric
distances: monocular predictors are scale/shift ambiguous, and the
carving depth test needs metric values, so the mapping is deliberately
explicit configuration rather than something this adapter guesses.
"""

from __future__ import annotations

import base64
import json
import urllib.request
from pathlib import Path

import numpy as np

from .protocol import (
    AdapterError,
    read_color,
    write_color,
    write_depth,
    write_mask,
)


def run_segment_rembg(input_dir: Path, config: dict) -> None:
    try:
        from rembg import remove
        from PIL import Image
    except ImportError as e:
        raise AdapterError(f"segment backend needs rembg installed: {e}") from e
    color = read_color(input_dir / "color.png")
    cut = remove(Image.fromarray(color, mode="RGB"))
    alpha = np.asarray(cut)[:, :, 3]
    write_mask(alpha >= 128, input_dir / "mask.png")


def run_depth_torch_hub(input_dir: Path, config: dict) -> None:
    try:
        import torch
    except ImportError as e:
        raise AdapterError(f"depth backend needs torch installed: {e}") from e
    repo = config.get("repo", "intel-isl/MiDaS")
    model_name = config.get("model", "DPT_Large")
    scale = float(config.get("scale", 1.0))
    shift = float(config.get("shift", 0.0))
    color = read_color(input_dir / "color.png")

    model = torch.hub.load(repo, model_name)
    model.eval()
    transforms = torch.hub.load(repo, "transforms")
    tf = transforms.dpt_transform if "DPT" in model_name else transforms.small_transform
    with torch.no_grad():
        pred = model(tf(color))
        pred = torch.nn.functional.interpolate(
            pred.unsqueeze(1), size=color.shape[:2], mode="bicubic",
            align_corners=False).squeeze().cpu().numpy()
    depth = (scale * pred + shift).astype(np.float32)
    if (depth <= 0).any():
        raise AdapterError(
            "metric mapping produced non-positive depths; adjust [depth] "
            "scale/shift in the adapter config")
    mask_path = input_dir / "mask.png"
    if mask_path.is_file():
        from .protocol import read_mask
        depth = depth.copy()
        depth[~read_mask(mask_path)] = np.inf
    write_depth(depth, input_dir / "depth.cpd")


def run_outpaint_endpoint(input_dir: Path, config: dict) -> None:
    """POST render + mask + prompt to a diffusion inpainting service.

    Request JSON: {"image": <b64 png>, "mask": <b64 png>, "prompt": str};
    response JSON: {"image": <b64 png>} at the same resolution.
    """
    endpoint = config.get("endpoint")
    if not endpoint:
        raise AdapterError("outpaint adapter needs [outpaint].endpoint configured")
    timeout = float(config.get("timeout_s", 300.0))
    render_bytes = (input_dir / "render.png").read_bytes()
    mask_bytes = (input_dir / "outmask.png").read_bytes()
    prompt = (input_dir / "prompt.txt").read_text(encoding="utf-8").strip()
    payload = json.dumps({
        "image": base64.b64encode(render_bytes).decode("ascii"),
        "mask": base64.b64encode(mask_bytes).decode("ascii"),
        "prompt": prompt,
    }).encode("utf-8")
    req = urllib.request.Request(
        endpoint, data=payload, headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            body = json.loads(resp.read().decode("utf-8"))
    except OSError as e:
        raise AdapterError(f"outpaint endpoint unreachable: {e}") from e
    if "image" not in body:
        raise AdapterError("outpaint endpoint response lacks an image")
    out = base64.b64decode(body["image"])
    (input_dir / "outpainted.png").write_bytes(out)

    # generation must stay inside the mask; freeze the protected region
    from .protocol import read_mask
    render = read_color(input_dir / "render.png")
    img = read_color(input_dir / "outpainted.png")
    if img.shape != render.shape:
        raise AdapterError("outpaint endpoint changed the image size")
    outmask = read_mask(input_dir / "outmask.png")
    fg_path = input_dir / "fgmask.png"
    if fg_path.is_file():
        frozen = ~outmask & read_mask(fg_path)
        img = img.copy()
        img[frozen] = render[frozen]
        write_color(img, input_dir / "outpainted.png")
