"""Stage-protocol adapters for the carvepipe reconstruction loop.

Each adapter is a separate process that receives a stage workspace
directory, reads the protocol inputs (pose.json, color.png, render.png,
outmask.png, prompt.txt as its kind requires), writes its kind's output
files, self-validates them, and only then exits 0. On failure it writes
``error.json`` into the workspace and exits nonzero. The boundary with
the core pipeline is exclusively this file protocol.
"""

__version__ = "0.1.0"

from .protocol import AdapterError, validate_output, write_error_file
