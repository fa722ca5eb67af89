"""
Trainer - the single-threaded training loop, evaluation and the metrics stream.
"""

import asyncio
import time
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
import structlog

from ..data.sample import StereoSample, collate
from ..network.msfnet import MSFNet
from ..shared.errors import ConfigurationError, NonFiniteError
from ..shared.schemas import IterationRecord, MetricsReport, TrainConfig
from ..stereo.disparity import DisparityMap
from ..stereo.metrics import epe, sample_metrics, three_px_error
from ..tensor import Tape, backward
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .optim import Adam, lr_schedule

logger = structlog.get_logger()

CSV_HEADER = "iteration,loss,epe,d3px,lr"

Dataset = Sequence[StereoSample]


class MetricsWriter:
    """Appends one comma-separated row per iteration."""

    def __init__(self, path: Union[str, Path], append: bool = False):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if not append or not self.path.exists():
            self.path.write_text(CSV_HEADER + "\n")

    def write(self, record: IterationRecord) -> None:
        with open(self.path, "a") as handle:
            handle.write(record.csv_row() + "\n")


class Trainer:
    """Owns the network, optimizer and batch generator of one run."""

    def __init__(
        self,
        config: TrainConfig,
        dataset: Dataset,
        validation: Optional[Dataset] = None,
        checkpoint_dir: Optional[Union[str, Path]] = None,
        metrics_path: Optional[Union[str, Path]] = None,
    ):
        if len(dataset) == 0:
            raise ConfigurationError("training dataset is empty")
        first = dataset[0]
        if (first.height, first.width) != (config.height, config.width):
            raise ConfigurationError(
                f"samples are {first.width}x{first.height}, config expects {config.width}x{config.height}"
            )

        self.config = config
        self.dataset = dataset
        self.validation = validation
        self.checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir else None
        self.metrics = MetricsWriter(metrics_path) if metrics_path else None

        self.network = MSFNet(config).materialize()
        self.optimizer = Adam.from_config(self.network.params, config)
        self.rng = np.random.default_rng([config.seed, len(dataset)])
        self.iteration = 0
        self.history: List[IterationRecord] = []
        self.log = logger.bind(component="Trainer", seed=config.seed)

    # =========================================================================
    # Checkpoints
    # =========================================================================

    def checkpoint(self) -> Checkpoint:
        step, m, v = self.optimizer.state()
        return Checkpoint(
            config=self.config,
            iteration=self.iteration,
            params=self.network.params.state_dict(),
            adam_step=step,
            adam_m={k: a.copy() for k, a in m.items()},
            adam_v={k: a.copy() for k, a in v.items()},
            generator_state=self.rng.bit_generator.state,
        )

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        save_checkpoint(self.checkpoint(), path)
        return path

    def restore(self, checkpoint: Checkpoint) -> None:
        """Resume exactly where the checkpoint was taken."""
        if checkpoint.config.model_dump(exclude={"iterations"}) != self.config.model_dump(exclude={"iterations"}):
            raise ConfigurationError("checkpoint was written with a different configuration")
        self.network.params.load_state_dict(checkpoint.params)
        self.optimizer.load_state(checkpoint.adam_step, checkpoint.adam_m, checkpoint.adam_v)
        self.rng.bit_generator.state = checkpoint.generator_state
        self.iteration = checkpoint.iteration
        self.log.info("Resumed", iteration=self.iteration)

    @classmethod
    def from_checkpoint(
        cls,
        path: Union[str, Path],
        dataset: Dataset,
        validation: Optional[Dataset] = None,
        **kwargs,
    ) -> "Trainer":
        checkpoint = load_checkpoint(path)
        trainer = cls(checkpoint.config, dataset, validation, **kwargs)
        trainer.restore(checkpoint)
        return trainer

    # =========================================================================
    # Training
    # =========================================================================

    def _next_batch(self) -> StereoSample:
        count = len(self.dataset)
        size = self.config.batch_size
        indices = self.rng.choice(count, size=size, replace=count < size)
        return collate([self.dataset[int(i)] for i in indices])

    def train_step(self) -> IterationRecord:
        iteration = self.iteration
        lr = lr_schedule(iteration, self.config)
        batch = self._next_batch()
        gt = batch.ground_truth
        started = time.perf_counter()

        try:
            self.optimizer.zero_grad()
            with Tape() as tape:
                outputs = self.network(batch.left, batch.right)
                loss, components = self.network.loss(outputs, gt)
            value = loss.item()
            if not np.isfinite(value):
                raise NonFiniteError(f"loss is {value}", layer="loss")
            backward(loss, tape)
            self.optimizer.step(lr)
        except NonFiniteError as e:
            self.log.error("Non-finite value", iteration=iteration, layer=e.layer)
            raise NonFiniteError("non-finite value", layer=e.layer, iteration=iteration) from e

        record = IterationRecord(
            iteration=iteration,
            loss=value,
            epe=epe(outputs.final, gt),
            three_px=three_px_error(outputs.final, gt),
            lr=lr,
            components=components,
            seconds=time.perf_counter() - started,
        )
        self.iteration += 1
        self.history.append(record)
        if self.metrics:
            self.metrics.write(record)
        return record

    def train(
        self,
        iterations: Optional[int] = None,
        on_record: Optional[Callable[[IterationRecord], None]] = None,
    ) -> List[IterationRecord]:
        """Run until `iterations` (default: config.iterations) have been completed in total."""
        target = self.config.iterations if iterations is None else iterations
        self.log.info(
            "Training started",
            start=self.iteration,
            target=target,
            parameters=self.network.params.count(),
        )
        records: List[IterationRecord] = []
        while self.iteration < target:
            record = self.train_step()
            records.append(record)
            if on_record:
                on_record(record)

            done = self.iteration
            if done % 50 == 0:
                self.log.info("Iteration complete", iteration=record.iteration, loss=record.loss, epe=record.epe, lr=record.lr)
            if self.validation is not None and done % self.config.validate_every == 0:
                report = self.evaluate(self.validation)
                self.log.info("Validation", iteration=done, epe=report.epe, three_px=report.three_px)
            if self.checkpoint_dir and done % self.config.checkpoint_every == 0:
                self.save(self.checkpoint_dir / f"iter_{done:07d}.msfn")

        if self.checkpoint_dir:
            self.save(self.checkpoint_dir / "last.msfn")
        self.log.info("Training finished", iterations=self.iteration)
        return records

    # =========================================================================
    # Evaluation
    # =========================================================================

    def predict(self, sample: StereoSample) -> DisparityMap:
        return predict(self.network, sample)

    def evaluate(self, dataset: Dataset, indices: Optional[Sequence[int]] = None) -> MetricsReport:
        return evaluate(self.network, dataset, indices)

    async def evaluate_sharded(self, dataset: Dataset, workers: int = 2) -> MetricsReport:
        return await evaluate_sharded(self.network, dataset, workers)


def predict(network: MSFNet, sample: StereoSample) -> DisparityMap:
    """Tape-free forward pass; returns the final refined disparity."""
    return network(sample.left, sample.right).final


def evaluate(
    network: MSFNet, dataset: Dataset, indices: Optional[Sequence[int]] = None
) -> MetricsReport:
    """Batch-1 inference over the dataset, one SampleMetrics per sample."""
    if indices is None:
        indices = range(len(dataset))
    started = time.perf_counter()
    samples = []
    for index in indices:
        sample = dataset[index]
        pred = predict(network, sample)
        samples.append(sample_metrics(index, pred, sample.ground_truth, sample.occlusion_mask))
    elapsed = time.perf_counter() - started
    per_sample = elapsed / len(samples) if samples else 0.0
    return MetricsReport(samples=samples, seconds_per_iteration=per_sample)


async def evaluate_sharded(network: MSFNet, dataset: Dataset, workers: int = 2) -> MetricsReport:
    """Split samples round-robin over workers and merge the shard reports."""
    workers = max(1, min(workers, len(dataset)))
    shards = [list(range(len(dataset)))[w::workers] for w in range(workers)]
    log = logger.bind(component="evaluate_sharded", workers=workers)

    tasks = [asyncio.to_thread(evaluate, network, dataset, shard) for shard in shards]
    reports = await asyncio.gather(*tasks)

    merged = MetricsReport.merge(list(reports))
    log.info("Sharded evaluation complete", samples=len(merged.samples), epe=merged.epe)
    return merged
