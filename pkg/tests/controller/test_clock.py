import asyncio

import pytest

from src.controller.clock import BudgetClock, FakeClock, RealClock
from src.core.errors import ArgumentError


class TestFakeClock:
    def test_advance(self):
        clock = FakeClock(start=5.0)
        clock.advance(2.5)
        assert clock.now() == 7.5

    def test_no_time_travel(self):
        with pytest.raises(ArgumentError):
            FakeClock().advance(-1)

    @pytest.mark.asyncio
    async def test_sleep_moves_time(self):
        clock = FakeClock()
        await clock.sleep(3.0)
        assert clock.now() == 3.0

    @pytest.mark.asyncio
    async def test_concurrent_sleeps_overlap(self):
        clock = FakeClock()
        await asyncio.gather(clock.sleep(2.0), clock.sleep(5.0), clock.sleep(2.0))
        assert clock.now() == 5.0

    @pytest.mark.asyncio
    async def test_wakes_in_order(self):
        clock = FakeClock()
        woke = []

        async def sleeper(name, seconds):
            await clock.sleep(seconds)
            woke.append((name, clock.now()))

        await asyncio.gather(sleeper("late", 4.0), sleeper("early", 1.0), sleeper("middle", 2.0))
        assert woke == [("early", 1.0), ("middle", 2.0), ("late", 4.0)]

    @pytest.mark.asyncio
    async def test_sequential_sleeps_add_up(self):
        clock = FakeClock()
        for _ in range(3):
            await clock.sleep(1.5)
        assert clock.now() == 4.5

    @pytest.mark.asyncio
    async def test_negative_sleep(self):
        with pytest.raises(ArgumentError):
            await FakeClock().sleep(-0.1)


class TestRealClock:
    @pytest.mark.asyncio
    async def test_monotonic(self):
        clock = RealClock()
        before = clock.now()
        await clock.sleep(0.01)
        assert clock.now() > before


class TestBudgetClock:
    def test_remaining(self):
        clock = FakeClock(start=100.0)
        budget = BudgetClock(10.0, clock)
        assert budget.start_instant == 100.0
        clock.advance(4.0)
        assert budget.elapsed() == 4.0
        assert budget.remaining() == 6.0
        assert not budget.exhausted()

    def test_remaining_floors_at_zero(self):
        clock = FakeClock()
        budget = BudgetClock(1.0, clock)
        clock.advance(3.0)
        assert budget.remaining() == 0.0
        assert budget.exhausted()

    @pytest.mark.parametrize("total", [0, -5])
    def test_budget_must_be_positive(self, total):
        with pytest.raises(ArgumentError):
            BudgetClock(total, FakeClock())
