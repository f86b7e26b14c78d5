"""Bundled fixture corpora: themed investigation document sets with fixed
document counts and total word counts, each packaged as a ready-to-serve
room configuration."""

from __future__ import annotations

import json
from importlib import resources
from typing import Any

CORPUS_NAMES = (
    "rivergate-6",
    "saltmarsh-6",
    "foxhollow-6",
    "rivergate-15",
    "saltmarsh-15",
)


def list_corpora() -> tuple[str, ...]:
    return CORPUS_NAMES


def load_corpus(name: str) -> dict[str, Any]:
    """Load a bundled room configuration by corpus name."""
    if name not in CORPUS_NAMES:
        raise KeyError(f"unknown corpus {name!r}; bundled: {', '.join(CORPUS_NAMES)}")
    text = resources.files(__package__).joinpath(f"{name}.json").read_text("utf-8")
    return json.loads(text)
