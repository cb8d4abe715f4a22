import logging
import math
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from src.core.errors import ContractError  # noqa: E402
from src.core.volume import Volume  # noqa: E402

logger = logging.getLogger(__name__)


def central_slice(volume: Volume, axis: int = 2) -> np.ndarray:
    """The middle slice of a volume perpendicular to ``axis``."""
    return np.take(volume.voxels, volume.shape[axis] // 2, axis=axis)


def save_slice_panel(lpet: Volume, epet: Volume, spet: Volume, filepath: str, axis: int = 2):
    """
    Saves central slices of LPET, EPET and SPET next to the |EPET - SPET| error map.

    The three intensity panels share one gray scale taken from the SPET slice.

    Raises:
        ContractError: If the volumes differ in shape.
    """
    if not lpet.shape == epet.shape == spet.shape:
        raise ContractError(f"volume shapes differ: {lpet.shape}, {epet.shape}, {spet.shape}")
    slices = [central_slice(v, axis) for v in (lpet, epet, spet)]
    error = np.abs(slices[1] - slices[2])
    vmin, vmax = float(slices[2].min()), float(slices[2].max())

    fig, axes = plt.subplots(1, 4, figsize=(12, 3.4))
    for ax, image, title in zip(axes, slices, ("LPET", "EPET", "SPET")):
        ax.imshow(image, cmap="gray", vmin=vmin, vmax=vmax, interpolation="nearest")
        ax.set_title(title, fontsize=12)
    im = axes[3].imshow(error, cmap="inferno", interpolation="nearest")
    axes[3].set_title("|EPET - SPET|", fontsize=12)
    fig.colorbar(im, ax=axes[3], fraction=0.046, pad=0.04)
    for ax in axes:
        ax.tick_params(which="major", bottom=False, left=False, labelbottom=False, labelleft=False)
    fig.tight_layout()
    fig.savefig(filepath, dpi=100)
    plt.close(fig)
    logger.info("Saved slice panel to '%s'", filepath)


def plot_metric_log(log: Sequence, filepath: str):
    """Plots the per-epoch losses and validation PSNR of a training run."""
    if not log:
        raise ContractError("cannot plot an empty metric log")
    epochs = [m.epoch for m in log]
    fig, (ax_loss, ax_psnr) = plt.subplots(1, 2, figsize=(10, 3.6))
    ax_loss.plot(epochs, [m.loss_d for m in log], label="loss_D")
    ax_loss.plot(epochs, [m.loss_g_adv for m in log], label="loss_G_adv")
    ax_loss.plot(epochs, [m.l1 for m in log], label="l1")
    ax_loss.set_yscale("log")
    ax_loss.set_xlabel("epoch")
    ax_loss.legend()
    psnr_values = [m.val_psnr for m in log]
    if any(not math.isnan(p) for p in psnr_values):
        ax_psnr.plot(epochs, psnr_values, marker="o", color="tab:green")
    ax_psnr.set_xlabel("epoch")
    ax_psnr.set_ylabel("validation PSNR (dB)")
    fig.tight_layout()
    fig.savefig(filepath, dpi=100)
    plt.close(fig)
    logger.info("Saved metric plot to '%s'", filepath)
