import logging
from multiprocessing.pool import ThreadPool
from typing import Iterator, List, Optional, Sequence

import numpy as np

from augment.pipeline import AugPipeline, augment_sample
from utils.rng import derive_rng
from utils.sample import Sample

logger = logging.getLogger(__name__)


class Batch:
    """Stacked images (N, 3, S, S) with the labels of each image."""

    def __init__(self, samples: List[Sample]):
        self.samples = samples
        self.images = np.stack([s.image.transpose(2, 0, 1) for s in samples])

    @property
    def annotations(self):
        return [s.annotations for s in self.samples]

    @property
    def image_ids(self) -> List[str]:
        return [s.image_id for s in self.samples]

    def __len__(self) -> int:
        return len(self.samples)


class BatchLoader:
    """
    Shuffled, augmented batches for one epoch at a time.

    Every sample draws from its own stream derived from (seed, epoch, index),
    so worker threads change nothing but speed; batches come out in order.

    Args:
        samples: Training samples, also the partner pool of multi-image transforms
        batch_size: Images per batch
        seed: Base seed of the run
        workers: Augmentation threads; 0 augments inline
    """

    def __init__(self, samples: Sequence[Sample], batch_size: int, seed: int = 0, workers: int = 0):
        self.samples = list(samples)
        self.batch_size = batch_size
        self.seed = seed
        self.workers = workers
        self._pool: Optional[ThreadPool] = ThreadPool(workers) if workers > 0 else None

    def __len__(self) -> int:
        return (len(self.samples) + self.batch_size - 1) // self.batch_size

    def batches(self, pipeline: AugPipeline, epoch: int) -> Iterator[Batch]:
        order = derive_rng(self.seed, "shuffle", epoch).permutation(len(self.samples))
        for start in range(0, len(order), self.batch_size):
            indices = [int(i) for i in order[start:start + self.batch_size]]

            def work(index: int) -> Sample:
                return augment_sample(pipeline, self.samples[index], self.seed, index, epoch, self.samples)

            if self._pool is not None:
                augmented = self._pool.map(work, indices)
            else:
                augmented = [work(i) for i in indices]
            yield Batch(augmented)

    def close(self) -> None:
        if self._pool is not None:
            self._pool.close()
            self._pool.join()
            self._pool = None
