import asyncio
import heapq
import itertools
import time
from abc import ABC, abstractmethod
from typing import Optional

from src.core.errors import ArgumentError


class Clock(ABC):
    """Time source for the controller; seconds as floats"""

    @abstractmethod
    def now(self) -> float:
        ...

    @abstractmethod
    async def sleep(self, seconds: float):
        ...


class RealClock(Clock):
    def now(self) -> float:
        return time.monotonic()

    async def sleep(self, seconds: float):
        await asyncio.sleep(seconds)


class FakeClock(Clock):
    """Virtual time for tests.

    Sleepers are woken in wake-time order. Time only moves when the event
    loop has settled, so concurrent sleeps overlap as they would in real time
    instead of adding up.
    """

    SETTLE_YIELDS = 20

    def __init__(self, start: float = 0.0):
        self._now = float(start)
        self._sleepers: list[tuple[float, int, asyncio.Future]] = []
        self._order = itertools.count()
        self._ticker: Optional[asyncio.Task] = None

    def now(self) -> float:
        return self._now

    def advance(self, seconds: float):
        if seconds < 0:
            raise ArgumentError(f"Cannot move time backwards by {seconds}s")
        self._now += seconds
        self._wake_due()

    async def sleep(self, seconds: float):
        if seconds < 0:
            raise ArgumentError(f"Cannot sleep for {seconds}s")
        loop = asyncio.get_running_loop()
        wakeup = loop.create_future()
        heapq.heappush(self._sleepers, (self._now + seconds, next(self._order), wakeup))
        if self._ticker is None or self._ticker.done():
            self._ticker = loop.create_task(self._tick())
        await wakeup

    def _wake_due(self):
        while self._sleepers and self._sleepers[0][0] <= self._now:
            _, _, wakeup = heapq.heappop(self._sleepers)
            if not wakeup.done():
                wakeup.set_result(None)

    async def _tick(self):
        while True:
            for _ in range(self.SETTLE_YIELDS):
                await asyncio.sleep(0)
            self._sleepers = [s for s in self._sleepers if not s[2].done()]
            heapq.heapify(self._sleepers)
            if not self._sleepers:
                return
            self._now = max(self._now, self._sleepers[0][0])
            self._wake_due()


class BudgetClock:
    """Wall-clock budget measured on a Clock from the moment of construction"""

    def __init__(self, total_budget: float, clock: Clock):
        if total_budget <= 0:
            raise ArgumentError(f"Budget must be positive, got {total_budget}s")
        self.total_budget = float(total_budget)
        self.clock = clock
        self.start_instant = clock.now()

    def elapsed(self) -> float:
        return self.clock.now() - self.start_instant

    def remaining(self) -> float:
        return max(0.0, self.total_budget - self.elapsed())

    def exhausted(self) -> bool:
        return self.remaining() <= 0.0
