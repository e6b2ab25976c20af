"""coverlab: coverage coefficients and optimistic exploration on layered MDPs."""

from importlib import metadata

DIST_NAME = "coverlab"


def get_version() -> str:
    """Installed distribution version, or the source tree's when not installed."""
    try:
        return metadata.version(DIST_NAME)
    except metadata.PackageNotFoundError:
        return "0.1.0"


__all__ = ["DIST_NAME", "get_version"]
