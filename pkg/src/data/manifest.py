import logging
import os
from dataclasses import dataclass

from src.core.errors import FileFormatError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SubjectEntry:
    """
    One line of a dataset manifest.

    Attributes:
        name (str): Subject id, ``subject_<line index>``.
        spet_path (str): Standard-dose volume.
        lpet_path (str): Low-dose volume.
        group (str | None): Optional cohort label (for example NC or MCI).
    """
    name: str
    spet_path: str
    lpet_path: str
    group: str | None = None


def subject_name(index: int) -> str:
    return f"subject_{index:03d}"


def read_manifest(filepath: str) -> list[SubjectEntry]:
    """
    Loads a dataset manifest.

    Each non-empty line is ``<spet_path>\\t<lpet_path>`` with an optional third
    ``\\t<group>`` column. Relative paths are resolved against the manifest's
    directory.

    Raises:
        FileNotFoundError: If the manifest does not exist.
        FileFormatError: On a malformed line or an empty manifest.
    """
    base = os.path.dirname(os.path.abspath(filepath))
    entries = []
    offset = 0
    with open(filepath, "rb") as f:
        raw_lines = f.read().split(b"\n")
    for raw in raw_lines:
        line = raw.decode("utf-8", errors="replace").rstrip("\r")
        if line.strip():
            fields = line.split("\t")
            if len(fields) not in (2, 3) or not all(fields[:2]):
                raise FileFormatError(f"{filepath}: expected '<spet>\\t<lpet>[\\t<group>]', got '{line}'", offset)
            spet, lpet = (p if os.path.isabs(p) else os.path.join(base, p) for p in fields[:2])
            group = fields[2] if len(fields) == 3 and fields[2] else None
            entries.append(SubjectEntry(subject_name(len(entries)), spet, lpet, group))
        offset += len(raw) + 1
    if not entries:
        raise FileFormatError(f"{filepath}: manifest is empty", 0)
    logger.info("Loaded manifest '%s' with %d subjects", os.path.basename(filepath), len(entries))
    return entries


def write_manifest(filepath: str, entries: list[SubjectEntry]):
    """Writes entries with paths relative to the manifest's directory."""
    base = os.path.dirname(os.path.abspath(filepath))
    with open(filepath, "w", encoding="utf-8", newline="\n") as f:
        for entry in entries:
            fields = [os.path.relpath(entry.spet_path, base), os.path.relpath(entry.lpet_path, base)]
            if entry.group:
                fields.append(entry.group)
            f.write("\t".join(fields) + "\n")
