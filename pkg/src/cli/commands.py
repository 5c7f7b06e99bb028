"""
The command implementations behind `main.py`.

Each command takes its resolved settings, the console to print tables to
and whether live displays may be shown, and returns an exit code. Errors
propagate as `RipeLocError` subclasses.
"""
import json
import logging
import os
import time
from dataclasses import asdict, replace
from typing import Callable, Dict

from rich.console import Console
from rich.progress import Progress

from augment.pipeline import augment_sample, build_pipeline
from cli.dataset_io import fit_image, list_images, load_split, read_image, write_dataset_info, write_split
from cli.run_config import (AblateConfig, AugPreviewConfig, EvalConfig, FlopsConfig, InferConfig, PruneConfig,
                            RunConfig, SynthConfig, TrainRunConfig, write_run_config)
from cli.utils.annotate import draw_annotations, draw_detections
from cli.utils.tables import ablation_table, complexity_table, summary_table
from evalkit.evaluator import evaluate, evaluate_model, write_center_histogram, write_pr_csv, write_report_json
from evalkit.utils.ground_truth import ground_truths
from model.builder import build_model
from model.checkpoint import load_model, save_model
from model.complexity import decoupled_head_params, flops_by_group, params_by_group
from model.utils.graph_render import render_graph
from postprocess.pipeline import detect
from postprocess.utils.detection import read_detections, write_detections
from pruner.pruner import finetune, prune
from pruner.utils.prune_report import write_prune_report
from synthgen.generator import SceneGenerator, class_balance
from synthgen.splits import make_splits
from trainer.ablation import run_ablation, write_ablation_json
from trainer.config import TrainConfig, plan_from_preset, preset_config, total_epochs
from trainer.monitor import TrainingMonitor
from trainer.trainer import pretrain, train
from trainer.utils.epoch_record import write_log_csv
from utils.errors import DataError, ExitCode
from utils.incident_tracker import IncidentTracker
from utils.rng import derive_rng
from utils.sample import CLASS_NAMES

logger = logging.getLogger(__name__)

WEIGHTS_FILE = "weights.rlw"


def synth(cfg: SynthConfig, console: Console, live: bool = True) -> int:
    """Render a synthetic dataset and split it train / val / test by difficulty."""
    generator = SceneGenerator(cfg.scene_spec())
    samples = []
    with Progress(console=console, disable=not live, transient=True) as progress:
        task = progress.add_task("Rendering scenes", total=cfg.n_images)
        for index in range(cfg.n_images):
            samples.append(generator.scene(index))
            progress.advance(task)

    splits = make_splits(cfg.n_images, derive_rng(cfg.seed, "splits"), cfg.ratios,
                         [s.difficulty for s in samples])
    for name, indices in splits.items():
        write_split(cfg.out, name, [samples[i] for i in indices], cfg.image_format)
    unripe, ripe, share = class_balance(samples)
    write_dataset_info(cfg.out, {
        "splits": {name: len(indices) for name, indices in splits.items()},
        "instances": {"unripe": unripe, "ripe": ripe},
        "ripe_share": share,
        "scene_spec": asdict(generator.spec),
    })
    logger.info("wrote %d scenes to %s", cfg.n_images, cfg.out)
    rows = [(f"{name} images", str(len(indices))) for name, indices in splits.items()]
    rows += [("Unripe fruit", str(unripe)), ("Ripe fruit", str(ripe)),
             ("Ripe share", "n/a" if share is None else f"{share:.3f}")]
    console.print(summary_table("Synthetic dataset", rows))
    return ExitCode.SUCCESS


def train_command(cfg: TrainRunConfig, console: Console, live: bool = True) -> int:
    """Train a model on the train split, validating on val when present."""
    train_cfg = preset_config(cfg.preset, cfg.train_config())
    model = load_model(cfg.init_weights) if cfg.init_weights else None
    size = model.input_size if model is not None else cfg.input_size
    train_set = load_split(cfg.data, "train", size)
    size = train_set[0].size
    val_set = load_split(cfg.data, "val", size, required=False)
    if model is None:
        model = build_model(cfg.width_multiple, len(CLASS_NAMES), size, cfg.reg_max, cfg.neck, cfg.seed,
                            cfg.raam_reduction)
    if cfg.pretrain_images:
        pretrain(model, cfg.pretrain_images, cfg.pretrain_epochs, cfg.seed)

    plan = plan_from_preset(cfg.preset, train_cfg)
    monitor = TrainingMonitor(total_epochs(plan), enabled=live, console=console)
    tracker = IncidentTracker(os.path.join(cfg.out, "incidents"))
    write_run_config(cfg, os.path.join(cfg.out, "run_config.json"))
    result = train(model, train_set, val_set, plan, train_cfg, monitor, tracker)

    save_model(model, os.path.join(cfg.out, WEIGHTS_FILE))
    write_log_csv(result.log, os.path.join(cfg.out, "train_log.csv"))
    last = result.log[-1]
    rows = [("Phases", ", ".join(p.name for p in plan)), ("Epochs", str(len(result.log))),
            ("Skipped steps", str(result.skipped_steps)),
            ("Final box / cls / dfl", f"{last.box_loss:.4f} / {last.cls_loss:.4f} / {last.dfl_loss:.4f}")]
    if last.val_map50 is not None:
        rows.append(("Val mAP@50", f"{last.val_map50:.4f}"))
    console.print(summary_table("Training", rows))
    return ExitCode.SUCCESS


def eval_command(cfg: EvalConfig, console: Console, live: bool = True) -> int:
    """Evaluate a model, or a file of detections, on one split."""
    model = load_model(cfg.weights) if cfg.weights else None
    samples = load_split(cfg.data, cfg.split, model.input_size if model is not None else cfg.input_size)
    gts = [ground_truths(s) for s in samples]
    if model is not None:
        report, by_image = evaluate_model(model, samples, cfg.batch_size, cfg.conf, cfg.iou, cfg.mm_per_px)
        write_detections(os.path.join(cfg.out, "detections.txt"), by_image)
    else:
        by_image = read_detections(cfg.detections)
        stray = sorted(set(by_image) - {s.image_id for s in samples})
        if stray:
            logger.warning("ignoring detections of %d images outside the %s split", len(stray), cfg.split)
        report = evaluate([by_image.get(s.image_id, []) for s in samples], gts, cfg.conf, 0.5, cfg.mm_per_px,
                          len(CLASS_NAMES))
    dets = [by_image.get(s.image_id, []) for s in samples]

    write_report_json(report, os.path.join(cfg.out, "metrics.json"))
    write_pr_csv(dets, gts, os.path.join(cfg.out, "pr.csv"), len(CLASS_NAMES))
    write_center_histogram(dets, gts, os.path.join(cfg.out, "center_hist.csv"), cfg.conf)
    console.print(summary_table(f"Evaluation on {cfg.split} ({len(samples)} images)", report.summary_rows()))
    return ExitCode.SUCCESS


def prune_command(cfg: PruneConfig, console: Console, live: bool = True) -> int:
    """Prune BatchNorm channels by |gamma| and optionally fine-tune."""
    model = load_model(cfg.weights)
    pruned, report = prune(model, cfg.ratio, cfg.min_channels)
    if cfg.finetune_epochs:
        train_set = load_split(cfg.data, "train", pruned.input_size)
        val_set = load_split(cfg.data, "val", pruned.input_size, required=False)
        monitor = TrainingMonitor(cfg.finetune_epochs, title="RipeLoc fine-tuning", enabled=live, console=console)
        finetune(pruned, train_set, val_set, cfg.finetune_epochs,
                 TrainConfig(batch_size=cfg.batch_size, workers=cfg.workers, seed=cfg.seed), monitor)
    save_model(pruned, os.path.join(cfg.out, WEIGHTS_FILE))
    write_prune_report(report, os.path.join(cfg.out, "prune_report.json"))
    console.print(summary_table("Pruning", report.summary_rows()))
    return ExitCode.SUCCESS


def infer(cfg: InferConfig, console: Console, live: bool = True) -> int:
    """
    Detect on images and write detections in model-input pixels.

    Non-square images are letterboxed to the model input first; annotated
    images show the letterboxed canvas.
    """
    model = load_model(cfg.weights)
    paths = list_images(cfg.source)
    ids = [os.path.splitext(os.path.basename(p))[0] for p in paths]
    if len(set(ids)) != len(ids):
        raise DataError(f"image ids in {cfg.source} are not unique")
    if cfg.save_images:
        os.makedirs(os.path.join(cfg.out, "images"), exist_ok=True)

    detections: Dict[str, list] = {}
    elapsed = 0.0
    for image_id, path in zip(ids, paths):
        image, _ = fit_image(read_image(path), model.input_size)
        started = time.perf_counter()
        (dets,) = detect(model, image.transpose(2, 0, 1)[None], cfg.conf, cfg.iou)
        elapsed += time.perf_counter() - started
        detections[image_id] = dets
        if cfg.save_images:
            draw_detections(image, dets).save(os.path.join(cfg.out, "images", f"{image_id}.png"))
    write_detections(os.path.join(cfg.out, "detections.txt"), detections)

    ms = 1000.0 * elapsed / len(paths)
    count = sum(len(d) for d in detections.values())
    logger.info("%d detections on %d images, %.1f ms per image", count, len(paths), ms)
    console.print(summary_table("Inference", [
        ("Images", str(len(paths))),
        ("Detections", str(count)),
        ("Ripe with picking point", str(sum(1 for d in detections.values() for x in d if x.center is not None))),
        ("ms / image", f"{ms:.1f}"),
        ("FPS", f"{1000.0 / ms:.1f}" if ms > 0 else "n/a"),
    ]))
    return ExitCode.SUCCESS


def flops(cfg: FlopsConfig, console: Console, live: bool = True) -> int:
    """Parameter and FLOP breakdown per module group, with the head and neck comparisons."""
    if cfg.weights:
        model = load_model(cfg.weights)
    else:
        model = build_model(cfg.width_multiple, len(CLASS_NAMES), cfg.input_size, neck=cfg.neck)
    params = params_by_group(model)
    group_flops = flops_by_group(model)
    decoupled = decoupled_head_params(model)
    report = {
        "width_multiple": model.width_multiple,
        "input_size": model.input_size,
        "neck": model.neck,
        "params": params,
        "flops": group_flops,
        "total_params": sum(params.values()),
        "total_flops": sum(group_flops.values()),
        "head_params": params["head"],
        "decoupled_head_params": decoupled,
        "head_ratio": params["head"] / decoupled,
    }
    console.print(complexity_table(params, group_flops))
    rows = [("Head params", f"{params['head']:,}"), ("Decoupled head params", f"{decoupled:,}"),
            ("Head ratio", f"{report['head_ratio']:.3f}")]
    if cfg.compare_dense and model.neck == "lfpn":
        dense = build_model(model.width_multiple, model.num_classes, model.input_size, model.reg_max, neck="dense")
        dense_flops = flops_by_group(dense)["neck"]
        report["dense_neck_flops"] = dense_flops
        report["neck_flops_ratio"] = group_flops["neck"] / dense_flops
        rows += [("Dense neck GFLOPs", f"{dense_flops / 1e9:.3f}"),
                 ("Neck FLOPs ratio", f"{report['neck_flops_ratio']:.3f}")]
    console.print(summary_table("Comparisons", rows))

    if cfg.graph:
        with open(cfg.graph, "w", encoding="utf-8") as f:
            f.write(render_graph(model).source)
        logger.info("layer graph written to %s", cfg.graph)
    if cfg.report:
        with open(cfg.report, "w", encoding="utf-8") as f:
            json.dump(report, f, indent=2)
    return ExitCode.SUCCESS


def augpreview(cfg: AugPreviewConfig, console: Console, live: bool = True) -> int:
    """Write augmented samples with their transformed labels, plus annotated copies."""
    samples = load_split(cfg.data, cfg.split)
    pipeline = build_pipeline(cfg.aug_config(), cfg.strength)
    previews = []
    for index in range(cfg.n_images):
        source = samples[index % len(samples)]
        augmented = augment_sample(pipeline, source, cfg.seed, index, pool=samples)
        previews.append(replace(augmented, image_id=f"{source.image_id}_aug{index:03d}"))
    directory = write_split(cfg.out, "preview", previews)
    os.makedirs(os.path.join(directory, "annotated"), exist_ok=True)
    for sample in previews:
        draw_annotations(sample.image, sample.annotations).save(
            os.path.join(directory, "annotated", f"{sample.image_id}.png"))
    console.print(summary_table("Augmentation preview", [
        ("Pipeline", ", ".join(pipeline.names())),
        ("Samples", str(len(previews))),
        ("Labels", str(sum(len(s.annotations) for s in previews))),
    ]))
    return ExitCode.SUCCESS


def ablate(cfg: AblateConfig, console: Console, live: bool = True) -> int:
    """Run the B0..B5 ablation on the dataset's splits."""
    train_set = load_split(cfg.data, "train")
    size = train_set[0].size
    val_set = load_split(cfg.data, "val", size, required=False)
    test_set = load_split(cfg.data, "test", size)

    def report_row(row):
        logger.info("%s %s: mAP@50 %.4f, P %.4f, R %.4f", row.config, row.label, row.map50, row.precision,
                    row.recall)

    rows = run_ablation(train_set, val_set, test_set, cfg.train_config(), cfg.width_multiple, cfg.repeats,
                        cfg.pretrain_images, cfg.pretrain_epochs, cfg.configs, on_row=report_row)
    write_ablation_json(rows, os.path.join(cfg.out, "ablation.json"))
    console.print(ablation_table(rows))
    return ExitCode.SUCCESS


COMMANDS: Dict[str, Callable[[RunConfig, Console, bool], int]] = {
    "synth": synth,
    "train": train_command,
    "eval": eval_command,
    "prune": prune_command,
    "infer": infer,
    "flops": flops,
    "augpreview": augpreview,
    "ablate": ablate,
}