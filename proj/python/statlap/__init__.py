"""Vector Laplacian, heat kernel and diffusion distances on statistical manifolds."""

import json as _json

from ._statlap import *  # noqa: F401,F403
from ._statlap import run_config as _run_config

__all__ = [name for name in dir() if not name.startswith("_")]


def run(config, output=None, verify_only=False):
    """Run a JSON config and return the report as a dict."""
    return _json.loads(_run_config(str(config), None if output is None else str(output), verify_only))
