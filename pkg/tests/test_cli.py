import os
import shutil

import numpy as np
import pytest

from src.config.run_config import build_run_config, load_config_file
from src.core.errors import ContractError, UsageError
from src.data.manifest import read_manifest
from src.data.volume_io import read_volume
from src.main import run_command
from src.metrics.quality import psnr


@pytest.fixture
def dataset(tmp_path):
    out = tmp_path / "data"
    assert run_command(["simulate", "--subjects", "2", "--side", "16", "--seed", "7", "--out", str(out),
                        "--quiet"]) == 0
    return out


def _normalized(text: str) -> str:
    return " ".join(text.split())


def test_simulate_writes_volumes_and_manifest(tmp_path, capsys):
    out = tmp_path / "data"
    assert run_command(["simulate", "--subjects", "4", "--side", "32", "--seed", "7", "--out", str(out)]) == 0
    names = os.listdir(out)
    assert len([n for n in names if n.endswith(".pccvol")]) == 8
    assert "manifest.txt" in names
    assert len(read_manifest(str(out / "manifest.txt"))) == 4
    assert "Wrote 8 volumes" in capsys.readouterr().out


def test_evaluate_of_perfect_reconstructions(dataset, tmp_path, capsys):
    recon = tmp_path / "recon"
    recon.mkdir()
    for entry in read_manifest(str(dataset / "manifest.txt")):
        shutil.copy(entry.spet_path, recon / f"{entry.name}.pccvol")
    capsys.readouterr()
    assert run_command(["evaluate", "--manifest", str(dataset / "manifest.txt"), "--recon", str(recon)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "subject\tpsnr\tssim\tnmse"
    rows = [line.split("\t") for line in lines[1:]]
    assert [row[0] for row in rows] == ["subject_000", "subject_001", "mean"]
    assert all(float(row[3]) == 0.0 for row in rows)
    assert all(float(row[1]) == 99.0 for row in rows)


def test_evaluate_lpet_against_baseline(dataset, capsys):
    capsys.readouterr()
    manifest = str(dataset / "manifest.txt")
    assert run_command(["evaluate", "--manifest", manifest, "--baseline-lpet", "--subjects", "0,1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert "metric\tmean_diff\tt\tp" in lines
    assert float(lines[1].split("\t")[3]) > 0.0


def test_train_help_lists_the_defaults(capsys):
    assert run_command(["train", "--help"]) == 0
    text = _normalized(capsys.readouterr().out)
    for expected in ("default: 150", "default: 4", "default: 0.0002", "default: 100", "default: 8", "default: 50"):
        assert expected in text


def test_unknown_command_is_a_usage_error():
    assert run_command(["transmogrify"]) == 2


def test_unknown_config_key_is_a_usage_error(dataset, tmp_path):
    config = tmp_path / "run.cfg"
    config.write_text("epochs = 1\nbogus = 3\n")
    assert run_command(["train", "--manifest", str(dataset / "manifest.txt"), "--checkpoint",
                        str(tmp_path / "m.pccckpt"), "--config", str(config)]) == 2


def test_missing_manifest_is_an_error(tmp_path, capsys):
    assert run_command(["evaluate", "--manifest", str(tmp_path / "absent.txt")]) == 1
    assert capsys.readouterr().err.startswith("error:")


def test_out_of_range_subject_is_a_usage_error(dataset):
    assert run_command(["evaluate", "--manifest", str(dataset / "manifest.txt"), "--subjects", "5"]) == 2


def test_untrained_generator_reconstructs_the_lpet(dataset, tmp_path, capsys):
    manifest = str(dataset / "manifest.txt")
    checkpoint = str(tmp_path / "model.pccckpt")
    log = tmp_path / "metrics.tsv"
    shape_flags = ["--side", "16", "--width", "2", "--stride", "16"]
    assert run_command(["train", "--manifest", manifest, "--checkpoint", checkpoint, "--epochs", "0",
                        "--log", str(log), "--quiet", *shape_flags]) == 0
    out = capsys.readouterr().out
    assert "Generator parameters:" in out and "Discriminator parameters:" in out
    assert log.read_text() == "epoch\tlr\tloss_d\tloss_g_adv\tl1\tval_psnr\n"

    recon = tmp_path / "recon"
    assert run_command(["reconstruct", "--manifest", manifest, "--checkpoint", checkpoint, "--out", str(recon),
                        "--quiet", *shape_flags]) == 0
    for entry in read_manifest(manifest):
        np.testing.assert_array_equal(read_volume(str(recon / f"{entry.name}.pccvol")).voxels,
                                      read_volume(entry.lpet_path).voxels)


def test_reconstruct_rejects_a_checkpoint_of_another_width(dataset, tmp_path):
    manifest = str(dataset / "manifest.txt")
    checkpoint = str(tmp_path / "model.pccckpt")
    assert run_command(["train", "--manifest", manifest, "--checkpoint", checkpoint, "--epochs", "0", "--side", "16",
                        "--width", "2", "--quiet"]) == 0
    assert run_command(["reconstruct", "--manifest", manifest, "--checkpoint", checkpoint, "--out",
                        str(tmp_path / "recon"), "--side", "16", "--width", "4", "--quiet"]) == 1


def test_selftest_passes(capsys):
    assert run_command(["selftest", "--quiet"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[-1] == f"{len(lines) - 1}/{len(lines) - 1} checks passed"
    assert all(line.startswith("PASS ") for line in lines[:-1])


@pytest.mark.slow
@pytest.mark.parametrize("seed", [0, 1, 3])
def test_gradcheck_passes_at_desk_scale(seed, capsys):
    assert run_command(["gradcheck", "--side", "16", "--width", "4", "--seed", str(seed), "--quiet"]) == 0
    assert "max relative error" in capsys.readouterr().out


def test_flags_override_the_config_file(tmp_path):
    config = tmp_path / "run.cfg"
    config.write_text("# desk overrides\nepochs = 5\nlam = 10  # weaker L1\nadversarial = no\n")
    settings = load_config_file(str(config))
    assert settings == {"epochs": 5, "lam": 10.0, "adversarial": False}
    settings["epochs"] = 30
    run = build_run_config("full", settings)
    assert (run.train.epochs, run.train.lam, run.train.adversarial) == (30, 10.0, False)
    assert run.train.lr_plateau_epochs == 10
    assert run.train.lr_init == 2e-4


def test_desk_profile():
    run = build_run_config("desk", {}, manifest="m.txt")
    assert (run.model.input_side, run.model.base_width, run.model.anchor_schedule) == (16, 8, (8, 4, 2, 1))
    assert (run.train.epochs, run.train.lr_plateau_epochs) == (20, 6)
    assert (run.train.batch_size, run.train.lr_init) == (2, 1e-3)
    assert run.stride == 8
    assert run.manifest == "m.txt"


def test_config_file_type_errors(tmp_path):
    config = tmp_path / "run.cfg"
    config.write_text("epochs = many\n")
    with pytest.raises(UsageError):
        load_config_file(str(config))
    with pytest.raises(UsageError):
        build_run_config("huge", {})


def test_desk_flags_override_the_desk_defaults():
    run = build_run_config("desk", {"lr": 5e-4, "epochs": 9})
    assert (run.train.lr_init, run.train.batch_size, run.train.lr_plateau_epochs) == (5e-4, 2, 3)


def test_plateau_outside_the_run_is_rejected():
    with pytest.raises(ContractError, match="lr_plateau_epochs"):
        build_run_config("full", {"epochs": 20, "lr_plateau": 50})
    with pytest.raises(ContractError, match="lr_plateau_epochs"):
        build_run_config("desk", {"lr_plateau": -3})


def test_negative_plateau_flag_fails_before_training(dataset, tmp_path, capsys):
    checkpoint = tmp_path / "model.pccckpt"
    assert run_command(["train", "--manifest", str(dataset / "manifest.txt"), "--checkpoint", str(checkpoint),
                        "--lr-plateau", "-3", "--side", "16", "--width", "2", "--quiet"]) == 1
    assert "lr_plateau_epochs" in capsys.readouterr().err
    assert not checkpoint.exists()


@pytest.mark.parametrize("command", [["simulate", "--out", "x"], ["evaluate", "--manifest", "m.txt"],
                                     ["gradcheck"], ["selftest"]])
@pytest.mark.parametrize("flag", [["--profile", "desk"], ["--config", "run.cfg"], ["--threads", "2"]])
def test_run_flags_are_only_accepted_where_they_apply(command, flag):
    assert run_command([*command, *flag]) == 2


@pytest.mark.slow
def test_desk_acceptance_run(tmp_path):
    data, runs = tmp_path / "data", tmp_path / "runs"
    runs.mkdir()
    manifest = str(data / "manifest.txt")
    assert run_command(["simulate", "--subjects", "4", "--side", "32", "--seed", "7", "--out", str(data),
                        "--quiet"]) == 0
    log = runs / "metrics.tsv"
    desk = ["--profile", "desk", "--manifest", manifest, "--checkpoint", str(runs / "desk.pccckpt"), "--quiet"]
    assert run_command(["train", *desk, "--val-subjects", "3", "--log", str(log)]) == 0

    l1 = [float(line.split("\t")[4]) for line in log.read_text().splitlines()[1:]]
    assert len(l1) == 20
    assert l1[-1] <= 0.5 * l1[0]

    assert run_command(["reconstruct", *desk, "--out", str(runs / "recon"), "--subjects", "3"]) == 0
    held_out = read_manifest(manifest)[3]
    spet = read_volume(held_out.spet_path)
    epet = read_volume(str(runs / "recon" / f"{held_out.name}.pccvol"))
    assert psnr(epet, spet) - psnr(read_volume(held_out.lpet_path), spet) >= 0.5
