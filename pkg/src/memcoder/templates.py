"""Loading and substitution for the versioned prompt template files.

Templates are plain UTF-8 text with {{name}} placeholders, shipped as package
data and overridable via a directory flag. Substitution is literal string
replacement, so rendering is a pure function of (template bytes, values).
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError

TEMPLATE_FILES = ("system.txt", "user.txt", "reflect_task.txt", "reflect_api.txt", "route.txt")


def render(template: str, values: dict[str, str]) -> str:
    out = template
    for name, value in values.items():
        out = out.replace("{{" + name + "}}", value)
    return out


@dataclass(frozen=True)
class TemplateSet:
    version: str
    system: str
    user: str
    reflect_task: str
    reflect_api: str
    route: str

    @classmethod
    def load(cls, directory: str | None = None) -> "TemplateSet":
        """Load from a directory, or from the bundled package data when None."""
        if directory is None:
            root = importlib.resources.files("memcoder") / "templates"
        else:
            root = Path(directory)
            if not root.is_dir():
                raise ConfigError(f"template directory not found: {directory!r}")
        texts = {}
        for filename in ("VERSION",) + TEMPLATE_FILES:
            target = root / filename
            try:
                texts[filename] = target.read_text(encoding="utf-8")
            except (FileNotFoundError, OSError) as exc:
                raise ConfigError(f"missing template file {filename!r} in {root}") from exc
        return cls(
            version=texts["VERSION"].strip(),
            system=texts["system.txt"],
            user=texts["user.txt"],
            reflect_task=texts["reflect_task.txt"],
            reflect_api=texts["reflect_api.txt"],
            route=texts["route.txt"],
        )
