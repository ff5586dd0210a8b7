"""JSON schemas for kernel files, run manifests and command outputs.

Result files are named ``<command>-<action>.json``; :func:`for_output`
maps such a stem to its schema.
"""

from __future__ import annotations

import json
from functools import cache
from importlib import resources

__all__ = ["load", "for_output", "names"]

_ALIASES = {
    "order-germ": "order-verdict",
    "order-pgf": "order-verdict",
}


def names() -> list[str]:
    return sorted(p.name.removesuffix(".schema.json") for p in resources.files(__name__).iterdir()
                  if p.name.endswith(".schema.json"))


@cache
def _text(name: str) -> str:
    return resources.files(__name__).joinpath(f"{name}.schema.json").read_text()


def load(name: str) -> dict:
    """Schema by name, e.g. ``"kernel"`` or ``"simulate-mc"``."""
    return json.loads(_text(name))


def for_output(stem: str) -> dict:
    """Schema for the result file ``<stem>.json`` written by the CLI."""
    if stem.startswith("example-"):
        return load("example")
    return load(_ALIASES.get(stem, stem))
