"""
SGD training over a phase plan.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from augment.pipeline import build_pipeline
from evalkit.evaluator import evaluate_model
from loss.assigner import assign_targets, head_geometry
from loss.losses import total_loss
from model.builder import forward
from model.head import reset_classifier
from model.model_graph import ModelGraph
from synthgen.generator import SceneGenerator
from synthgen.scene_spec import SceneSpec
from tensor.tensor import backward
from trainer.config import PhaseConfig, TrainConfig, total_epochs
from trainer.loader import Batch, BatchLoader
from trainer.monitor import TrainingMonitor
from trainer.optimizer import OptimState, cosine_lr, sgd_step
from trainer.utils.epoch_record import EpochRecord
from utils.errors import DataError, NumericError
from utils.incident_tracker import IncidentKind, IncidentTracker
from utils.rng import derive_rng
from utils.sample import Sample

logger = logging.getLogger(__name__)


@dataclass
class TrainResult:
    model: ModelGraph
    log: List[EpochRecord] = field(default_factory=list)
    trainable_per_phase: List[int] = field(default_factory=list)
    skipped_steps: int = 0


def trainable_count(model: ModelGraph) -> int:
    return int(sum(t.size for t in model.trainable_parameters().values()))


class Trainer:
    """
    Runs the phases of a plan on one model.

    Each phase re-derives the frozen layer set, the augmentation pipeline and
    the optimizer state; the learning rate follows a per-step cosine within
    the phase.

    Args:
        model: Model to train in place
        train_samples: Training split
        val_samples: Validation split; empty skips validation
        cfg: Shared training settings
        monitor: Optional live dashboard
        incident_tracker: Optional archive for numeric incidents
    """

    def __init__(self, model: ModelGraph, train_samples: Sequence[Sample], val_samples: Sequence[Sample],
                 cfg: TrainConfig, monitor: Optional[TrainingMonitor] = None,
                 incident_tracker: Optional[IncidentTracker] = None):
        self.model = model
        self.train_samples = list(train_samples)
        self.val_samples = list(val_samples)
        self.cfg = cfg.validate()
        self.monitor = monitor
        self.incident_tracker = incident_tracker
        self.skipped_steps = 0

    def run(self, plan: Sequence[PhaseConfig]) -> TrainResult:
        if not self.train_samples:
            raise DataError("training set is empty")
        for sample in self.train_samples + self.val_samples:
            if sample.image.shape != (self.model.input_size, self.model.input_size, 3):
                raise DataError(f"sample {sample.image_id} has shape {sample.image.shape}, "
                                f"model expects {self.model.input_size}x{self.model.input_size}x3")

        result = TrainResult(self.model)
        loader = BatchLoader(self.train_samples, self.cfg.batch_size, self.cfg.seed, self.cfg.workers)
        if self.monitor is not None:
            self.monitor.total_epochs = total_epochs(plan)
            self.monitor.start()
        global_epoch = 0
        try:
            for phase in plan:
                self.model.freeze(phase.frozen_layer_indices)
                trainable = trainable_count(self.model)
                result.trainable_per_phase.append(trainable)
                logger.info("%s: %d epochs at lr %.2e, %s augmentation, %d trainable parameters",
                            phase.name, phase.epochs, phase.lr0, phase.aug_strength, trainable)
                if self.monitor is not None:
                    self.monitor.phase_started(phase.name, trainable)
                pipeline = build_pipeline(self.cfg.aug, phase.aug_strength)
                state = OptimState()
                for epoch in range(phase.epochs):
                    record = self._train_epoch(phase, epoch, global_epoch, loader, pipeline, state)
                    last = epoch == phase.epochs - 1
                    if self.val_samples and ((global_epoch + 1) % self.cfg.eval_every == 0 or last):
                        record.val_map50, record.val_map5095 = self.validate()
                    result.log.append(record)
                    if self.monitor is not None:
                        self.monitor.epoch_done(record)
                    global_epoch += 1
        finally:
            loader.close()
            if self.monitor is not None:
                self.monitor.stop()
        self.model.freeze(())
        result.skipped_steps = self.skipped_steps
        return result

    def validate(self) -> Tuple[float, float]:
        report, _ = evaluate_model(self.model, self.val_samples, self.cfg.batch_size, self.cfg.eval_conf)
        return report.map50, report.map5095

    def _train_epoch(self, phase: PhaseConfig, epoch: int, global_epoch: int, loader: BatchLoader, pipeline,
                     state: OptimState) -> EpochRecord:
        steps = len(loader)
        sums = np.zeros(3)
        lr_start = cosine_lr(phase.lr0, phase.final_lr, epoch, phase.epochs)
        for step, batch in enumerate(loader.batches(pipeline, global_epoch)):
            lr = cosine_lr(phase.lr0, phase.final_lr, epoch + step / steps, phase.epochs)
            items = self._step(batch, lr, state, {"phase": phase.name, "epoch": global_epoch, "step": state.step})
            sums += (items.box, items.cls, items.dfl)
        box, cls, dfl = sums / max(steps, 1)
        logger.debug("%s epoch %d: box %.4f cls %.4f dfl %.4f", phase.name, global_epoch, box, cls, dfl)
        return EpochRecord(phase.name, global_epoch, lr_start, float(box), float(cls), float(dfl))

    def _step(self, batch: Batch, lr: float, state: OptimState, context: Dict[str, object]):
        model = self.model
        model.zero_grad()
        heads = forward(model, batch.images, mode="train")
        geometry = head_geometry(heads)
        assignments = [assign_targets(anns, geometry, model.input_size, model.reg_max, self.cfg.topk)
                       for anns in batch.annotations]
        loss, items = total_loss(heads, assignments, self.cfg.loss_weights)
        context = dict(context, lr=lr, loss=loss.item())
        if not np.isfinite(loss.item()):
            self._incident(IncidentKind.NAN_LOSS, context, batch)
            raise NumericError(f"loss became {loss.item()} in {context['phase']} epoch {context['epoch']}")

        backward(loss)
        params = model.trainable_parameters()
        if not sgd_step(params, state, lr, self.cfg.momentum, self.cfg.weight_decay, model.frozen_names()):
            bad = [name for name, p in params.items() if p.grad is not None and not np.all(np.isfinite(p.grad))]
            self.skipped_steps += 1
            self._incident(IncidentKind.NAN_GRADIENT, dict(context, parameters=bad), batch)
            if self.skipped_steps > self.cfg.max_incidents:
                raise NumericError(f"{self.skipped_steps} steps skipped for non-finite gradients")
        return items

    def _incident(self, kind: str, context: Dict[str, object], batch: Batch) -> None:
        logger.warning("%s at %s epoch %s step %s", kind, context.get("phase"), context.get("epoch"),
                       context.get("step"))
        if self.incident_tracker is not None:
            path = self.incident_tracker.save_incident(kind, context, batch.image_ids)
            logger.warning("incident archived in %s", path)
        if self.monitor is not None:
            self.monitor.incident(f"{kind} at step {context.get('step')}")


def train(model: ModelGraph, train_samples: Sequence[Sample], val_samples: Sequence[Sample],
          plan: Sequence[PhaseConfig], cfg: Optional[TrainConfig] = None,
          monitor: Optional[TrainingMonitor] = None,
          incident_tracker: Optional[IncidentTracker] = None) -> TrainResult:
    """
    Train `model` in place over the phases of `plan`.

    Args:
        model: Model to train
        train_samples: Training split
        val_samples: Validation split, evaluated every `cfg.eval_every` epochs and at phase ends
        plan: Phases to run in order
        cfg: Shared settings
        monitor: Optional live dashboard
        incident_tracker: Optional archive for numeric incidents

    Returns:
        The model with its per-epoch log
    """
    return Trainer(model, train_samples, val_samples, cfg or TrainConfig(), monitor, incident_tracker).run(plan)


def pretrain(model: ModelGraph, n_images: int = 64, epochs: int = 5, seed: int = 0,
             cfg: Optional[TrainConfig] = None) -> ModelGraph:
    """
    Warm the whole model up on class-agnostic fruit scenes.

    Every fruit, whatever its hue, is labeled class 0, so the features learn
    round objects but not ripeness; the classifier is re-drawn afterwards.

    Args:
        model: Model to train in place
        n_images: Pretext scenes
        epochs: Pretext epochs
        seed: Seed of scenes and training
        cfg: Settings; only lr, batching and loss settings are used

    Returns:
        The model
    """
    spec = SceneSpec(image_size=model.input_size, single_class=True, seed=seed)
    samples = SceneGenerator(spec).generate_dataset(n_images)
    base = cfg or TrainConfig(seed=seed, batch_size=8)
    plan = [PhaseConfig("pretrain", frozenset(), base.lr0, epochs, "light", lrf=base.lrf)]
    Trainer(model, samples, [], base).run(plan)
    reset_classifier(model.head.params, derive_rng(seed, "reset-classifier"))
    logger.info("pretrained on %d scenes for %d epochs", n_images, epochs)
    return model
