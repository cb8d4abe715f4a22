import numpy as np
import pytest

from src.core.errors import ContractError
from src.core.volume import Volume
from src.training.trainer import EpochMetrics
from src.viz.figures import central_slice, plot_metric_log, save_slice_panel


def _volume(seed: int) -> Volume:
    return Volume.from_array(np.random.default_rng(seed).random((8, 8, 6)))


def test_central_slice_along_the_last_axis():
    volume = Volume.from_array(np.arange(8 * 8 * 6, dtype=np.float64).reshape(8, 8, 6))
    np.testing.assert_array_equal(central_slice(volume), volume.voxels[:, :, 3])


def test_slice_panel_is_saved(tmp_path):
    path = tmp_path / "subject_000.png"
    save_slice_panel(_volume(0), _volume(1), _volume(2), str(path))
    assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_slice_panel_needs_equal_shapes(tmp_path):
    with pytest.raises(ContractError):
        save_slice_panel(_volume(0), Volume((8, 8, 8)), _volume(2), str(tmp_path / "x.png"))


def test_metric_curves_are_saved(tmp_path):
    log = [EpochMetrics(e, 2e-4, 1.4 - 0.1 * e, 0.7, 0.05 / e, 20.0 + e) for e in range(1, 4)]
    path = tmp_path / "curves.png"
    plot_metric_log(log, str(path))
    assert path.stat().st_size > 0


def test_empty_log_cannot_be_plotted(tmp_path):
    with pytest.raises(ContractError):
        plot_metric_log([], str(tmp_path / "curves.png"))
