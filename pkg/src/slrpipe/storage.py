"""Deterministic file I/O helpers shared by checkpointing and export.

All writes are atomic (temp file in the destination directory, then
``os.replace``), all text is UTF-8 with ``\n`` newlines, and JSON is
serialized with a fixed layout so byte-level comparisons between runs
are meaningful.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Iterator

__all__ = [
    "atomic_write_text",
    "dumps_json",
    "write_json",
    "read_json",
    "write_jsonl",
    "read_jsonl",
    "sha256_of_file",
]


def atomic_write_text(path: Path | str, text: str) -> Path:
    """Write ``text`` to ``path`` atomically; never leaves partial files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(
        dir=path.parent, prefix=f".{path.name}.", suffix=".tmp"
    )
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise
    return path


def dumps_json(data: Any) -> str:
    """Serialize to the package's canonical JSON layout (keys keep insertion order)."""
    return json.dumps(data, ensure_ascii=False, indent=2) + "\n"


def write_json(path: Path | str, data: Any) -> Path:
    return atomic_write_text(path, dumps_json(data))


def read_json(path: Path | str) -> Any:
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


def write_jsonl(path: Path | str, rows: Iterable[Any]) -> Path:
    lines = [json.dumps(row, ensure_ascii=False) for row in rows]
    return atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def read_jsonl(path: Path | str) -> Iterator[Any]:
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                yield json.loads(line)


def sha256_of_file(path: Path | str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()
