"""The pseudo-ground-truth dataset: typed view records, append-only
growth, and checksummed on-disk persistence.

Directory layout (the interchange format consumed by stages and the CLI):

    <dir>/manifest.json
    <dir>/view_000/{color.png, depth.cpd, normal.cpn, mask.png}
    <dir>/view_001/...

The manifest lists poses, the object tag and class word, file names, and
SHA-256 checksums; load() verifies every checksum.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetError
from .geometry import CameraPose
from .rasters import DepthMap, MaskImage, NormalMap, RgbImage, same_dims
from .schedule import INITIAL_AZIMUTH_DEG, INITIAL_POLAR_DEG
from . import imgio

MANIFEST_NAME = "manifest.json"

_VIEW_FILES = {
    "color": "color.png",
    "depth": "depth.cpd",
    "normal": "normal.cpn",
    "mask": "mask.png",
}


@dataclass(frozen=True)
class ViewRecord:
    """One pseudo-ground-truth tuple: color, depth, normal, mask, pose."""

    color: RgbImage
    depth: DepthMap
    normal: NormalMap
    mask: MaskImage
    pose: CameraPose
    view_index: int

    def __post_init__(self):
        if self.view_index < 0:
            raise ValueError("view_index must be non-negative")
        if not same_dims(self.color, self.depth, self.normal, self.mask):
            raise ValueError("all rasters in a view record must share dimensions")
        background = self.mask.data == 0
        if not np.isinf(self.depth.data[background]).all():
            raise ValueError("mask-0 pixels must carry the no-hit depth sentinel")


@dataclass(frozen=True)
class PseudoDataset:
    records: tuple[ViewRecord, ...]
    object_tag: str
    class_word: str

    def __post_init__(self):
        for i, rec in enumerate(self.records):
            if rec.view_index != i:
                raise ValueError(
                    f"record {i} has view_index {rec.view_index}; indices must "
                    f"increase from 0"
                )
        if self.records:
            p0 = self.records[0].pose
            if (p0.polar_deg, p0.azimuth_deg) != (INITIAL_POLAR_DEG, INITIAL_AZIMUTH_DEG):
                raise ValueError("record 0 must be at the initial pose (90, 0)")

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i: int) -> ViewRecord:
        return self.records[i]

    @property
    def poses(self) -> tuple[CameraPose, ...]:
        return tuple(r.pose for r in self.records)


def init_dataset(record0: ViewRecord, object_tag: str, class_word: str) -> PseudoDataset:
    """Bootstrap the dataset with the processed input view."""
    if record0.view_index != 0:
        raise ValueError("initial record must have view_index 0")
    return PseudoDataset(records=(record0,), object_tag=object_tag,
                         class_word=class_word)


def append(dataset: PseudoDataset, record: ViewRecord) -> PseudoDataset:
    """Functional append; earlier records are never modified."""
    if record.view_index != len(dataset):
        raise ValueError(
            f"record index {record.view_index} must equal dataset size {len(dataset)}"
        )
    first = dataset.records[0]
    if (record.mask.height, record.mask.width) != (first.mask.height, first.mask.width):
        raise ValueError("record dimensions disagree with the dataset")
    for existing in dataset.records:
        if existing.pose == record.pose:
            raise ValueError(f"duplicate pose {record.pose} in dataset")
    return PseudoDataset(records=dataset.records + (record,),
                         object_tag=dataset.object_tag,
                         class_word=dataset.class_word)


def _view_dir(directory: Path, index: int) -> Path:
    return directory / f"view_{index:03d}"


def save(dataset: PseudoDataset, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    views = []
    for rec in dataset.records:
        vdir = _view_dir(directory, rec.view_index)
        vdir.mkdir(exist_ok=True)
        imgio.write_color_png(rec.color, vdir / _VIEW_FILES["color"])
        imgio.write_depth_cpd(rec.depth, vdir / _VIEW_FILES["depth"])
        imgio.write_normal_cpn(rec.normal, vdir / _VIEW_FILES["normal"])
        imgio.write_mask_png(rec.mask, vdir / _VIEW_FILES["mask"])
        checksums = {
            key: imgio.sha256_file(vdir / name) for key, name in _VIEW_FILES.items()
        }
        views.append({
            "index": rec.view_index,
            "pose": rec.pose.to_dict(),
            "directory": vdir.name,
            "files": dict(_VIEW_FILES),
            "sha256": checksums,
        })
    manifest = {
        "object_tag": dataset.object_tag,
        "class_word": dataset.class_word,
        "views": views,
    }
    (directory / MANIFEST_NAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
    )


def load(directory) -> PseudoDataset:
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.is_file():
        raise DatasetError(f"missing manifest: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DatasetError(f"malformed manifest {manifest_path}: {e}") from e

    records = []
    for entry in manifest["views"]:
        index = int(entry["index"])
        vdir = directory / entry["directory"]
        for key, name in entry["files"].items():
            fpath = vdir / name
            if not fpath.is_file():
                raise DatasetError(f"view {index}: missing file {fpath}")
            digest = imgio.sha256_file(fpath)
            if digest != entry["sha256"][key]:
                raise DatasetError(
                    f"view {index}: checksum mismatch for {fpath.name} "
                    f"(expected {entry['sha256'][key][:12]}..., got {digest[:12]}...)"
                )
        try:
            record = ViewRecord(
                color=imgio.read_color_png(vdir / entry["files"]["color"]),
                depth=imgio.read_depth_cpd(vdir / entry["files"]["depth"]),
                normal=imgio.read_normal_cpn(vdir / entry["files"]["normal"]),
                mask=imgio.read_mask_png(vdir / entry["files"]["mask"]),
                pose=CameraPose.from_dict(entry["pose"]),
                view_index=index,
            )
        except ValueError as e:
            raise DatasetError(f"view {index}: {e}") from e
        records.append(record)
    records.sort(key=lambda r: r.view_index)
    return PseudoDataset(records=tuple(records),
                         object_tag=manifest["object_tag"],
                         class_word=manifest["class_word"])
