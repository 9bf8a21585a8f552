import asyncio
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence

from logger import logger
from src.core.errors import ArgumentError, SamplingError
from src.data.episodes import Batch
from src.encoder.training import StopFlag

DEFAULT_CAPACITY = 4
POLL_INTERVAL = 0.05


@dataclass(frozen=True)
class BufferSpec:
    capacity: int = DEFAULT_CAPACITY
    way: int = 10
    shot: int = 4

    def __post_init__(self):
        if self.capacity < 1:
            raise ArgumentError(f"Buffer capacity must be >= 1, got {self.capacity}")

    @property
    def batch_shape(self) -> tuple[int, int]:
        return self.way, self.shot


class BatchBuffer:
    """Bounded FIFO of preprocessed batches feeding one worker"""

    def __init__(self, worker_id: int, spec: BufferSpec, preprocess: Callable[[Batch], Any] = None,
                 stop: Optional[StopFlag] = None):
        self.worker_id = worker_id
        self.spec = spec
        self.queue = asyncio.Queue(maxsize=spec.capacity)
        self.preprocess = preprocess or (lambda batch: batch)
        self.stop = stop
        self.closed = False
        self.pushed = 0
        self.delivered = 0

    def occupancy(self) -> int:
        return self.queue.qsize()

    def is_stopped(self) -> bool:
        return self.stop is not None and self.stop.is_set()

    def close(self):
        """No more batches will arrive; consumers drain what is left"""
        self.closed = True

    async def put(self, item, stop: StopFlag, poll: float = POLL_INTERVAL) -> bool:
        """Block until there is room; give up once `stop` or this worker's own stop is set"""
        while True:
            try:
                await asyncio.wait_for(self.queue.put(item), timeout=poll)
                self.pushed += 1
                return True
            except asyncio.TimeoutError:
                if stop.is_set() or self.is_stopped():
                    return False

    async def get(self, poll: float = POLL_INTERVAL):
        """Next batch in FIFO order, or None once the buffer is closed and drained or the worker is stopped"""
        while True:
            if not self.queue.empty():
                self.delivered += 1
                return self.queue.get_nowait()
            if self.closed or self.is_stopped():
                return None
            try:
                item = await asyncio.wait_for(self.queue.get(), timeout=poll)
                self.delivered += 1
                return item
            except asyncio.TimeoutError:
                continue


@dataclass
class DispatchResult:
    produced: int = 0
    error: Optional[Exception] = None


async def dispatch_batches(producer: Callable[[int, int], Batch], buffers: Sequence[BatchBuffer], stop: StopFlag,
                           poll: float = POLL_INTERVAL) -> DispatchResult:
    """Sample batches and push a preprocessed copy into every live buffer.

    One batch is sampled per distinct (way, shot) among live buffers on each
    pass; buffers of stopped workers are skipped. Returns when `stop` is set,
    every worker has stopped, or sampling fails. Buffers are closed on exit.
    """
    result = DispatchResult()
    try:
        while not stop.is_set():
            live = [b for b in buffers if not b.is_stopped()]
            if not live:
                logger.debug("All workers stopped; dispatcher exiting")
                break

            shapes = sorted({b.spec.batch_shape for b in live})
            for way, shot in shapes:
                batch = producer(way, shot)
                result.produced += 1
                for buffer in live:
                    if buffer.spec.batch_shape != (way, shot) or buffer.is_stopped():
                        continue
                    if not await buffer.put(buffer.preprocess(batch), stop, poll):
                        logger.debug(f"[dispatch] skipped buffer of stopped worker {buffer.worker_id}")
                    if stop.is_set():
                        return result
            await asyncio.sleep(0)
    except SamplingError as e:
        logger.error(f"[dispatch] sampling failed, ending dispatch: {e}")
        result.error = e
    finally:
        for buffer in buffers:
            buffer.close()
    return result
