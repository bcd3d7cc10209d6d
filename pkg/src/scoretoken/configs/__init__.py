"""Bundled plan and task configurations."""

from __future__ import annotations

from importlib import resources
from pathlib import Path


def bundled_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files(__package__).iterdir() if p.name.endswith(".json"))


def resolve(path_or_name: str) -> Path:
    """A filesystem path, or the bundled config of that name (``ordering``, ``strategies``, ...)."""
    p = Path(path_or_name)
    if p.exists() or path_or_name not in bundled_names():
        return p
    return Path(str(resources.files(__package__).joinpath(f"{path_or_name}.json")))
