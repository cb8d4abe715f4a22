import logging
import os
from typing import Iterator, Sequence

from src.core.errors import ContractError
from src.core.volume import Volume
from src.data.low_dose import COUNTS_PER_UNIT, QUARTER_DOSE, simulate_low_dose
from src.data.manifest import SubjectEntry, subject_name, write_manifest
from src.data.patches import extract_patches
from src.data.phantom import PhantomSpec, gen_phantom
from src.data.volume_io import read_volume, write_volume

logger = logging.getLogger(__name__)

PatchPair = tuple[Volume, Volume]


def simulate_dataset(out_dir: str, subjects: int, side: int, seed: int, dose_fraction: float = QUARTER_DOSE,
                     scale: float = COUNTS_PER_UNIT, num_ellipsoids: int = 6) -> list[SubjectEntry]:
    """
    Writes phantom SPET volumes, their low-dose LPET counterparts and a manifest.

    Subject i uses phantom seed ``seed + i`` and noise seed ``seed + 10000 + i``.

    Returns:
        The manifest entries, also written to ``<out_dir>/manifest.txt``.
    """
    if subjects < 1:
        raise ContractError(f"need at least one subject, got {subjects}")
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for i in range(subjects):
        name = subject_name(i)
        spet = gen_phantom(PhantomSpec(shape=(side, side, side), seed=seed + i, num_ellipsoids=num_ellipsoids))
        lpet = simulate_low_dose(spet, dose_fraction, seed=seed + 10000 + i, scale=scale)
        spet_path = os.path.join(out_dir, f"{name}_spet.pccvol")
        lpet_path = os.path.join(out_dir, f"{name}_lpet.pccvol")
        write_volume(spet_path, spet)
        write_volume(lpet_path, lpet)
        entries.append(SubjectEntry(name, spet_path, lpet_path))
        logger.info("Simulated %s (%d^3, dose %.2f)", name, side, dose_fraction)
    write_manifest(os.path.join(out_dir, "manifest.txt"), entries)
    return entries


def load_patch_pairs(entries: Sequence[SubjectEntry], patch_side: int, stride: int) -> list[PatchPair]:
    """(LPET patch, SPET patch) pairs of every subject, subject by subject in grid order."""
    pairs = []
    for entry in entries:
        spet, lpet = read_volume(entry.spet_path), read_volume(entry.lpet_path)
        if spet.shape != lpet.shape:
            raise ContractError(f"{entry.name}: SPET {spet.shape} and LPET {lpet.shape} differ in shape")
        _, spet_patches = extract_patches(spet, patch_side, stride)
        _, lpet_patches = extract_patches(lpet, patch_side, stride)
        pairs.extend(zip(lpet_patches, spet_patches))
    return pairs


def leave_one_out_splits(n_subjects: int) -> Iterator[tuple[list[int], list[int]]]:
    """Yields (training indices, [held-out index]) for every subject in turn."""
    if n_subjects < 2:
        raise ContractError("leave-one-out needs at least two subjects")
    for held_out in range(n_subjects):
        yield [i for i in range(n_subjects) if i != held_out], [held_out]
