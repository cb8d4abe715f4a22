import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from tqdm import tqdm

from src.config.model_config import ModelConfig
from src.config.run_config import CONFIG_KEYS, PATCH_STRIDE, PROFILES, RunConfig, build_run_config, load_config_file
from src.config.train_config import TrainConfig
from src.core.errors import ContractError, PointPetError, UsageError
from src.core.volume import Volume
from src.data.dataset import leave_one_out_splits, load_patch_pairs, simulate_dataset
from src.data.low_dose import COUNTS_PER_UNIT, QUARTER_DOSE
from src.data.manifest import SubjectEntry, read_manifest
from src.data.patches import assemble_patches, extract_patches
from src.data.volume_io import read_volume, write_volume
from src.metrics.quality import MetricReport, evaluate_volume, format_report_row, mean_report, paired_comparison
from src.network.checkpoint import read_checkpoint, write_checkpoint
from src.network.generator import generator_forward
from src.network.params import DISCRIMINATOR, GENERATOR, ModelParams, init_model_params
from src.training.trainer import train_run, write_metric_log
from src.verify.model_gradcheck import GRADCHECK_COORDS, GRADCHECK_TOLERANCE, run_model_gradcheck
from src.verify.selftest import run_selftest

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _subject_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated subject indices, got '{text}'") from None


def _logging_parser() -> argparse.ArgumentParser:
    logs = argparse.ArgumentParser(add_help=False)
    verbosity = logs.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="log at DEBUG level")
    verbosity.add_argument("--quiet", action="store_true", help="log warnings only, no progress bars")
    return logs


def _run_parser() -> argparse.ArgumentParser:
    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("--profile", choices=PROFILES, default="full",
                     help="hyperparameter preset; desk: S=16, W0=8, anchors 8/4/2/1, 20 epochs, lr 0.001, "
                          "batch 2 (default: full)")
    run.add_argument("--config", metavar="PATH", help="'key = value' config file; flags override it")
    run.add_argument("--threads", type=int, help="worker threads; 1 gives the canonical outputs (default: 1)")
    return run


def _model_parser() -> argparse.ArgumentParser:
    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--side", type=int, help=f"patch edge S (default: {ModelConfig.INPUT_SIDE}; desk 16)")
    model.add_argument("--width", type=int, help=f"base feature width W0 (default: {ModelConfig.BASE_WIDTH}; desk 8)")
    model.add_argument("--k", type=int, help=f"neighbors per anchor and expander fan-out (default: {ModelConfig.K})")
    model.add_argument("--c", type=int, help=f"clusters per context-clustering layer (default: {ModelConfig.C})")
    model.add_argument("--stride", type=int, help=f"patch stride (default: {PATCH_STRIDE})")
    return model


def _train_parser() -> argparse.ArgumentParser:
    train = argparse.ArgumentParser(add_help=False)
    train.add_argument("--epochs", type=int, help=f"training epochs (default: {TrainConfig.EPOCHS}; desk "
                                                  f"{TrainConfig.DESK_EPOCHS})")
    train.add_argument("--batch-size", type=int, help=f"pairs per batch (default: {TrainConfig.BATCH_SIZE}; desk "
                                                      f"{TrainConfig.DESK_BATCH_SIZE})")
    train.add_argument("--lr", type=float, help=f"initial learning rate (default: {TrainConfig.LR_INIT:g}; desk "
                                                f"{TrainConfig.DESK_LR_INIT:g})")
    train.add_argument("--lr-plateau", type=int,
                       help="epochs at the initial rate before linear decay "
                            f"(default: {TrainConfig.LR_PLATEAU_EPOCHS}, a third of the epochs)")
    train.add_argument("--lam", type=float, help=f"L1 weight lambda (default: {TrainConfig.LAMBDA:g})")
    train.add_argument("--seed", type=int, help=f"initialization and shuffling seed (default: {TrainConfig.RNG_SEED})")
    train.add_argument("--no-adversarial", dest="adversarial", action="store_const", const=False,
                       help="train the generator on L1 alone (default: adversarial on)")
    train.add_argument("--saturating", dest="non_saturating", action="store_const", const=False,
                       help="use the literal log(1 - D) generator loss (default: non-saturating -log D)")
    return train


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pointpet",
                                     description="Point-based context-clusters GAN for low-dose volume reconstruction")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    logs, run, model, train = _logging_parser(), _run_parser(), _model_parser(), _train_parser()

    p = sub.add_parser("simulate", parents=[logs], help="write synthetic SPET/LPET subjects and a manifest")
    p.add_argument("--subjects", type=int, default=4, help="number of subjects (default: 4)")
    p.add_argument("--side", type=int, default=32, help="volume edge length (default: 32)")
    p.add_argument("--seed", type=int, default=TrainConfig.RNG_SEED, help=f"seed (default: {TrainConfig.RNG_SEED})")
    p.add_argument("--dose", type=float, default=QUARTER_DOSE, help=f"dose fraction (default: {QUARTER_DOSE:g})")
    p.add_argument("--scale", type=float, default=COUNTS_PER_UNIT,
                   help=f"expected counts per unit intensity at full dose (default: {COUNTS_PER_UNIT:g})")
    p.add_argument("--ellipsoids", type=int, default=6, help="ellipsoids per phantom (default: 6)")
    p.add_argument("--out", required=True, metavar="DIR", help="output directory")

    p = sub.add_parser("train", parents=[logs, run, model, train], help="adversarial training on a manifest")
    p.add_argument("--manifest", required=True, help="dataset manifest")
    p.add_argument("--checkpoint", required=True, help="checkpoint to write")
    held_out = p.add_mutually_exclusive_group()
    held_out.add_argument("--fold", type=int, help="leave-one-out fold: hold out this subject index")
    held_out.add_argument("--val-subjects", type=_subject_list, help="comma-separated held-out subject indices")
    p.add_argument("--log", metavar="PATH", help="tab-separated per-epoch metric log")
    p.add_argument("--plot", metavar="PATH", help="save loss and validation curves as an image")

    p = sub.add_parser("reconstruct", parents=[logs, run, model], help="patch-wise generator inference")
    p.add_argument("--manifest", required=True, help="dataset manifest")
    p.add_argument("--checkpoint", required=True, help="trained checkpoint")
    p.add_argument("--out", required=True, metavar="DIR", help="directory for subject_XXX.pccvol estimates")
    p.add_argument("--subjects", type=_subject_list, help="comma-separated subject indices (default: all)")
    p.add_argument("--preview", metavar="DIR", help="also save LPET/EPET/SPET slice panels")

    p = sub.add_parser("evaluate", parents=[logs], help="PSNR, SSIM and NMSE against SPET")
    p.add_argument("--manifest", required=True, help="dataset manifest")
    p.add_argument("--recon", metavar="DIR", help="reconstructions to score (default: the LPET inputs)")
    baseline = p.add_mutually_exclusive_group()
    baseline.add_argument("--baseline", metavar="DIR", help="second reconstruction for a paired t-test")
    baseline.add_argument("--baseline-lpet", action="store_true", help="paired t-test against the LPET inputs")
    p.add_argument("--subjects", type=_subject_list, help="comma-separated subject indices (default: all)")

    p = sub.add_parser("gradcheck", parents=[logs], help="finite-difference check of the full model")
    p.add_argument("--side", type=int, default=16, help="patch edge S (default: 16)")
    p.add_argument("--width", type=int, default=4, help="base width W0 (default: 4)")
    p.add_argument("--seed", type=int, default=3, help="seed (default: 3)")
    p.add_argument("--coords", type=int, default=GRADCHECK_COORDS,
                   help=f"parameters sampled per check (default: {GRADCHECK_COORDS})")

    p = sub.add_parser("selftest", parents=[logs], help="run the invariant suite")
    p.add_argument("--seed", type=int, default=0, help="seed (default: 0)")
    return parser


def _configure_logging(args):
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def _show_progress(args) -> bool:
    return not args.quiet and sys.stderr.isatty()


def _run_config(args, **paths) -> RunConfig:
    settings = load_config_file(args.config) if args.config else {}
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return build_run_config(args.profile, settings, **paths)


def _select(entries: list[SubjectEntry], indices: list[int] | None) -> list[SubjectEntry]:
    if indices is None:
        return list(entries)
    for i in indices:
        if not 0 <= i < len(entries):
            raise UsageError(f"subject index {i} outside [0, {len(entries)})")
    return [entries[i] for i in indices]


def _check_architecture(params: ModelParams, config: ModelConfig):
    expected = init_model_params(config, 0)
    for name, tensor in expected.subset(GENERATOR).items():
        if name not in params or params[name].shape != tensor.shape:
            raise ContractError(f"checkpoint does not match the architecture (W0={config.base_width}): '{name}'")


def cmd_simulate(args) -> int:
    entries = simulate_dataset(args.out, args.subjects, args.side, args.seed, args.dose, args.scale, args.ellipsoids)
    print(f"Wrote {2 * len(entries)} volumes and {os.path.join(args.out, 'manifest.txt')}")
    return 0


def cmd_train(args) -> int:
    run = _run_config(args, manifest=args.manifest, checkpoint=args.checkpoint, log_path=args.log)
    entries = read_manifest(run.manifest)
    if args.fold is not None:
        splits = list(leave_one_out_splits(len(entries)))
        if not 0 <= args.fold < len(splits):
            raise UsageError(f"fold {args.fold} outside [0, {len(splits)})")
        train_idx, val_idx = splits[args.fold]
    elif args.val_subjects is not None:
        val_idx = args.val_subjects
        _select(entries, val_idx)
        train_idx = [i for i in range(len(entries)) if i not in val_idx]
    else:
        train_idx, val_idx = list(range(len(entries))), []
    side = run.model.input_side
    dataset = load_patch_pairs(_select(entries, train_idx), side, run.stride)
    validation = load_patch_pairs(_select(entries, val_idx), side, run.stride)

    initial = init_model_params(run.model, run.train.rng_seed)
    print(f"Generator parameters: {initial.count(GENERATOR)}")
    print(f"Discriminator parameters: {initial.count(DISCRIMINATOR)}")
    params, log = train_run(dataset, run.model, run.train, validation, initial, _show_progress(args))
    write_checkpoint(run.checkpoint, params)
    if run.train.log_path and not log:
        write_metric_log(run.train.log_path, log)
    if args.plot and log:
        from src.viz.figures import plot_metric_log
        plot_metric_log(log, args.plot)
    print(f"Trained {len(log)} epochs on {len(dataset)} patch pairs; checkpoint written to {run.checkpoint}")
    return 0


def reconstruct_volume(lpet: Volume, params: ModelParams, run: RunConfig, executor: ThreadPoolExecutor | None = None,
                       show_progress: bool = False) -> Volume:
    """Runs the generator on every patch and averages the overlaps."""
    grid, patches = extract_patches(lpet, run.model.input_side, run.stride)

    def estimate(patch):
        return generator_forward(patch, params, run.model)

    mapped = executor.map(estimate, patches) if executor is not None else map(estimate, patches)
    estimates = list(tqdm(mapped, total=len(patches), desc="patches", disable=not show_progress, leave=False))
    return assemble_patches(grid, estimates)


def cmd_reconstruct(args) -> int:
    run = _run_config(args, manifest=args.manifest, checkpoint=args.checkpoint, out_dir=args.out)
    params = read_checkpoint(run.checkpoint)
    _check_architecture(params, run.model)
    entries = _select(read_manifest(run.manifest), args.subjects)
    threads = run.train.threads
    executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for entry in entries:
            lpet = read_volume(entry.lpet_path)
            epet = reconstruct_volume(lpet, params, run, executor, _show_progress(args))
            write_volume(os.path.join(run.out_dir, f"{entry.name}.pccvol"), epet)
            logger.info("Reconstructed %s", entry.name)
            if args.preview:
                from src.viz.figures import save_slice_panel
                os.makedirs(args.preview, exist_ok=True)
                save_slice_panel(lpet, epet, read_volume(entry.spet_path),
                                 os.path.join(args.preview, f"{entry.name}.png"))
    finally:
        if executor is not None:
            executor.shutdown()
    print(f"Wrote {len(entries)} reconstructions to {run.out_dir}")
    return 0


def _score(entries: list[SubjectEntry], recon_dir: str | None) -> list[MetricReport]:
    reports = []
    for entry in entries:
        path = entry.lpet_path if recon_dir is None else os.path.join(recon_dir, f"{entry.name}.pccvol")
        reports.append(evaluate_volume(read_volume(path), read_volume(entry.spet_path)))
    return reports


def cmd_evaluate(args) -> int:
    entries = _select(read_manifest(args.manifest), args.subjects)
    reports = _score(entries, args.recon)
    print("subject\tpsnr\tssim\tnmse")
    for entry, report in zip(entries, reports):
        print(format_report_row(entry.name, report))
    print(format_report_row("mean", mean_report(reports)))
    groups = sorted({e.group for e in entries if e.group})
    for group in groups:
        members = [r for e, r in zip(entries, reports) if e.group == group]
        print(format_report_row(f"mean[{group}]", mean_report(members)))

    if args.baseline or args.baseline_lpet:
        baseline = _score(entries, None if args.baseline_lpet else args.baseline)
        print("metric\tmean_diff\tt\tp")
        for metric, (diff, t, p) in paired_comparison(reports, baseline).items():
            print(f"{metric}\t{diff:.6f}\t{t:.4f}\t{p:.4g}")
    return 0


def cmd_gradcheck(args) -> int:
    results = run_model_gradcheck(args.side, args.width, args.seed, args.coords)
    for result in results:
        print(f"{result.check}\t{result.error:.3e}\t{result.where}")
    worst = max(r.error for r in results)
    print(f"max relative error: {worst:.3e} (tolerance {GRADCHECK_TOLERANCE:g})")
    return 0 if all(r.passed for r in results) else 1


def cmd_selftest(args) -> int:
    results = run_selftest(args.seed)
    for name, passed, reason in results:
        print(f"PASS {name}" if passed else f"FAIL {name}: {reason}")
    failed = sum(not passed for _, passed, _ in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "reconstruct": cmd_reconstruct,
    "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck,
    "selftest": cmd_selftest,
}


def run_command(argv: list[str] | None = None) -> int:
    """
    Parses ``argv`` and runs one subcommand.

    Returns:
        0 on success, 1 on a contract or IO error (one-line diagnostic on
        stderr), 2 on a usage error.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    _configure_logging(args)
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {e}", file=sys.stderr)
        return 2
    except (PointPetError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> int:
    return run_command(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
