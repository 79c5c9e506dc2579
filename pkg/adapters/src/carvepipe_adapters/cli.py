"""Adapter entry point.

Usage:  carvepipe-adapt KIND INPUT_DIR [CONFIG.toml] [--malformed]

The pipeline invokes a configured stage command with the workspace
directory appended as the final argument, so hooking an adapter up is
`--stage outpaint="carvepipe-adapt outpaint"`. The optional TOML selects
backends and model parameters; without it every kind runs its offline
baseline. `--malformed` makes the segment baseline emit an
out-of-protocol mask (conformance-testing aid).

Exit status is 0 only after the output self-validates; any failure
writes error.json into the workspace and exits 1.
"""

from __future__ import annotations

import sys
from pathlib import Path

from . import echo, models
from .protocol import AdapterError, load_config, validate_output, write_error_file

KINDS = ("segment", "depth", "normal", "outpaint", "superres")


def _dispatch(kind: str, input_dir: Path, config: dict, malformed: bool) -> None:
    section = config.get(kind, {})
    backend = section.get("backend", "baseline")
    if kind == "segment":
        if backend == "rembg":
            models.run_segment_rembg(input_dir, section)
        else:
            echo.run_segment(input_dir, section, malformed=malformed)
    elif kind == "depth":
        if backend == "torch-hub":
            models.run_depth_torch_hub(input_dir, section)
        else:
            echo.run_depth(input_dir, section)
    elif kind == "normal":
        echo.run_normal(input_dir, section)
    elif kind == "outpaint":
        if section.get("endpoint"):
            models.run_outpaint_endpoint(input_dir, section)
        else:
            echo.run_outpaint(input_dir, section)
    elif kind == "superres":
        echo.run_superres(input_dir, section)
    else:
        raise AdapterError(f"unknown stage kind {kind!r}")


def main(argv: list[str]) -> int:
    args = [a for a in argv if a != "--malformed"]
    malformed = "--malformed" in argv
    if len(args) < 2 or args[0] not in KINDS:
        sys.stderr.write(__doc__ or "")
        return 2
    kind = args[0]
    input_dir = Path(args[1])
    config_path = args[2] if len(args) > 2 else None
    try:
        config = load_config(config_path)
        if not input_dir.is_dir():
            raise AdapterError(f"input directory does not exist: {input_dir}")
        _dispatch(kind, input_dir, config, malformed)
        validate_output(kind, input_dir)
    except AdapterError as e:
        write_error_file(input_dir, kind, str(e))
        sys.stderr.write(f"carvepipe-adapt {kind}: {e}\n")
        return 1
    return 0


def entry() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entry()
