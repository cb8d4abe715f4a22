"""
Volumetric image-quality metrics.

PSNR uses the target's maximum as peak; SSIM uses a uniform 7^3 window over
all fully contained positions with K1 = 0.01, K2 = 0.03 and dynamic range
max(target) - min(target); NMSE is relative to the target's energy.
"""
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.ndimage import uniform_filter

from src.core.errors import ContractError
from src.core.volume import Volume

SSIM_WINDOW = 7
SSIM_K1 = 0.01
SSIM_K2 = 0.03
PSNR_CAP = 99.0


@dataclass(frozen=True)
class MetricReport:
    """PSNR (dB), SSIM and NMSE of one estimate against its target."""
    psnr: float
    ssim: float
    nmse: float


def _arrays(estimate, target) -> tuple[np.ndarray, np.ndarray]:
    est = estimate.voxels if isinstance(estimate, Volume) else np.asarray(estimate, dtype=np.float64)
    tgt = target.voxels if isinstance(target, Volume) else np.asarray(target, dtype=np.float64)
    if est.shape != tgt.shape:
        raise ContractError(f"metric inputs differ in shape: {est.shape} vs {tgt.shape}")
    return est, tgt


def psnr(estimate, target) -> float:
    """
    10 log10(MAX^2 / MSE) with MAX the largest target voxel.

    Returns ``math.inf`` for identical inputs; ``capped_psnr`` turns that into
    the value written to logs.
    """
    est, tgt = _arrays(estimate, target)
    mse = float(np.mean((tgt - est) ** 2))
    if mse == 0.0:
        return math.inf
    peak = float(np.max(tgt))
    if peak <= 0.0:
        raise ContractError("psnr: target maximum must be positive")
    return 10.0 * math.log10(peak * peak / mse)


def capped_psnr(value: float) -> float:
    return min(value, PSNR_CAP)


def nmse(estimate, target) -> float:
    """||target - estimate||^2 / ||target||^2."""
    est, tgt = _arrays(estimate, target)
    energy = float(np.sum(tgt * tgt))
    if energy == 0.0:
        raise ContractError("nmse: target has zero norm")
    return float(np.sum((tgt - est) ** 2)) / energy


def ssim(estimate, target, window: int = SSIM_WINDOW) -> float:
    """
    Mean local SSIM over every position where the window fits inside the volume.

    Raises:
        ContractError: If the volume is smaller than the window or the target is constant.
    """
    est, tgt = _arrays(estimate, target)
    if est.ndim != 3 or any(e < window for e in est.shape):
        raise ContractError(f"ssim: volume {est.shape} is smaller than the {window}^3 window")
    data_range = float(np.max(tgt) - np.min(tgt))
    if data_range == 0.0:
        raise ContractError("ssim: target has zero dynamic range")
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2

    half = window // 2
    valid = tuple(slice(half, e - (window - 1 - half)) for e in est.shape)

    def local_mean(a):
        return uniform_filter(a, size=window, mode="constant")[valid]

    mu_x, mu_y = local_mean(est), local_mean(tgt)
    var_x = local_mean(est * est) - mu_x * mu_x
    var_y = local_mean(tgt * tgt) - mu_y * mu_y
    cov = local_mean(est * tgt) - mu_x * mu_y
    numerator = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    denominator = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(numerator / denominator))


def evaluate_volume(estimate, target) -> MetricReport:
    return MetricReport(psnr(estimate, target), ssim(estimate, target), nmse(estimate, target))


def format_report_row(subject: str, report: MetricReport) -> str:
    return f"{subject}\t{capped_psnr(report.psnr):.6f}\t{report.ssim:.6f}\t{report.nmse:.8f}"


def mean_report(reports: Sequence[MetricReport]) -> MetricReport:
    """Per-metric mean over subjects (PSNR capped before averaging)."""
    if not reports:
        raise ContractError("mean_report: no reports")
    return MetricReport(float(np.mean([capped_psnr(r.psnr) for r in reports])),
                        float(np.mean([r.ssim for r in reports])),
                        float(np.mean([r.nmse for r in reports])))


def paired_comparison(reports: Sequence[MetricReport], baseline: Sequence[MetricReport]) -> dict[str, tuple]:
    """
    Paired t-test per metric between two methods evaluated on the same subjects.

    Returns:
        Metric name -> (mean difference, t statistic, p value).
    """
    if len(reports) != len(baseline) or len(reports) < 2:
        raise ContractError("paired comparison needs two equally long lists of at least two subjects")
    out = {}
    for metric in ("psnr", "ssim", "nmse"):
        ours = np.array([getattr(r, metric) for r in reports])
        theirs = np.array([getattr(r, metric) for r in baseline])
        if metric == "psnr":
            ours, theirs = np.minimum(ours, PSNR_CAP), np.minimum(theirs, PSNR_CAP)
        result = stats.ttest_rel(ours, theirs)
        out[metric] = (float(np.mean(ours - theirs)), float(result.statistic), float(result.pvalue))
    return out
