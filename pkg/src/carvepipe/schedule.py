"""Camera schedules: construction, prefixes, and interval sanity checks."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .geometry import DEFAULT_FOV_DEG, DEFAULT_RADIUS, CameraPose, angular_distance_deg

# Equatorial ring covering 360 degrees in 45-degree hops, front first.
DEFAULT_AZIMUTHS_DEG = (0.0, 45.0, -45.0, 90.0, -90.0, 135.0, -135.0, 180.0)

INITIAL_POLAR_DEG = 90.0
INITIAL_AZIMUTH_DEG = 0.0

MIN_INTERVAL_DEG = 20.0
MAX_INTERVAL_DEG = 90.0


@dataclass(frozen=True)
class CameraSchedule:
    poses: tuple[CameraPose, ...]

    def __post_init__(self):
        poses = tuple(self.poses)
        if not poses:
            raise ValueError("schedule must not be empty")
        first = poses[0]
        if (first.polar_deg, first.azimuth_deg) != (INITIAL_POLAR_DEG, INITIAL_AZIMUTH_DEG):
            raise ValueError(
                f"schedule must start at the initial pose "
                f"({INITIAL_POLAR_DEG}, {INITIAL_AZIMUTH_DEG}), got "
                f"({first.polar_deg}, {first.azimuth_deg})"
            )
        seen = set()
        for p in poses:
            key = (p.polar_deg, p.azimuth_deg, p.radius, p.fov_deg)
            if key in seen:
                raise ValueError(f"duplicate pose in schedule: {key}")
            seen.add(key)
        object.__setattr__(self, "poses", poses)

    def __len__(self) -> int:
        return len(self.poses)

    def __getitem__(self, i: int) -> CameraPose:
        return self.poses[i]


def default_schedule(radius: float = DEFAULT_RADIUS,
                     fov_deg: float = DEFAULT_FOV_DEG) -> CameraSchedule:
    """The 8-pose equatorial schedule (polar 90, azimuths every 45 degrees,
    ordered front, +/-45, +/-90, +/-135, behind)."""
    return CameraSchedule(tuple(
        CameraPose(polar_deg=90.0, azimuth_deg=az, radius=radius, fov_deg=fov_deg)
        for az in DEFAULT_AZIMUTHS_DEG
    ))


def prefix(schedule: CameraSchedule, i: int) -> CameraSchedule:
    """The first i + 1 poses."""
    if not 0 <= i < len(schedule):
        raise IndexError(f"prefix index {i} out of range for schedule of "
                         f"length {len(schedule)}")
    return CameraSchedule(schedule.poses[:i + 1])


def check_intervals(schedule: CameraSchedule,
                    min_deg: float = MIN_INTERVAL_DEG,
                    max_deg: float = MAX_INTERVAL_DEG) -> list[str]:
    """Warn when a new pose sits too close to (or too far from) every
    previously explored pose.

    The governing quantity for outpainting-mask size is each new pose's
    great-circle distance to the nearest already-seen pose: below
    ``min_deg`` the mask barely extends past the boundary (too granular),
    above ``max_deg`` generation is dominated by the prompt (too coarse).
    Warnings only; nothing is gated.
    """
    if len(schedule) < 2:
        raise ValueError("interval check needs at least 2 poses")
    warnings = []
    for i in range(1, len(schedule)):
        nearest = min(
            angular_distance_deg(schedule.poses[i], schedule.poses[j])
            for j in range(i)
        )
        if nearest < min_deg:
            warnings.append(
                f"pose {i}: too granular ({nearest:.1f} deg from the nearest "
                f"explored pose, below {min_deg:.0f} deg)"
            )
        elif nearest > max_deg:
            warnings.append(
                f"pose {i}: too coarse ({nearest:.1f} deg from the nearest "
                f"explored pose, above {max_deg:.0f} deg)"
            )
    return warnings


def save_schedule(schedule: CameraSchedule, path) -> None:
    Path(path).write_text(
        json.dumps([p.to_dict() for p in schedule.poses], indent=2),
        encoding="utf-8",
    )


def load_schedule(path) -> CameraSchedule:
    entries = json.loads(Path(path).read_text(encoding="utf-8"))
    return CameraSchedule(tuple(CameraPose.from_dict(e) for e in entries))
