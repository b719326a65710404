"""
Stage timing and progress reporting.

Timings are logged, never written into reports, so that reports stay
byte-identical between runs.
"""

import logging
import sys
import time
from contextlib import contextmanager
from typing import Dict, Iterator, Optional, TextIO

logger = logging.getLogger(__name__)

BAR_WIDTH = 30


class ProgressTracker:
    """Single-line progress bar for Monte Carlo resampling, off unless enabled."""

    def __init__(self, total_items: int, description: str = "Processing",
                 enabled: bool = False, stream: Optional[TextIO] = None,
                 min_interval: float = 1.0):
        self.total_items = total_items
        self.description = description
        self.current_item = 0
        self.enabled = enabled and total_items > 0
        self.stream = stream or sys.stderr
        self.min_interval = min_interval
        self._started = time.perf_counter()
        self._last_draw = self._started

    def update(self, items_processed: int = 1) -> None:
        self.current_item += items_processed
        if not self.enabled:
            return
        now = time.perf_counter()
        if now - self._last_draw >= self.min_interval:
            self._draw(now)
            self._last_draw = now

    def finish(self) -> None:
        """Jump to the total and end the progress line."""
        self.current_item = self.total_items
        if self.enabled:
            self._draw(time.perf_counter())
            self.stream.write("\n")
            self.stream.flush()

    def _eta(self, now: float) -> str:
        if self.current_item == 0:
            return "calculating..."
        elapsed = now - self._started
        left = elapsed * (self.total_items - self.current_item) / self.current_item
        return f"{left / 60:.1f}m left" if left > 60 else f"{left:.0f}s left"

    def _draw(self, now: float) -> None:
        fraction = self.current_item / self.total_items
        done = int(BAR_WIDTH * fraction)
        self.stream.write(
            f"\r{self.description}: [{'#' * done}{'-' * (BAR_WIDTH - done)}] {100.0 * fraction:.1f}% "
            f"({self.current_item}/{self.total_items}) {self._eta(now)}"
        )
        self.stream.flush()


class PerformanceProfiler:
    """Wall-clock durations of named pipeline stages, logged at DEBUG."""

    def __init__(self):
        self._running: Dict[str, float] = {}
        self._finished: Dict[str, float] = {}

    def start_operation(self, name: str) -> None:
        self._running[name] = time.perf_counter()
        self._finished.pop(name, None)

    def end_operation(self, name: str) -> float:
        """
        Stop the clock of a started stage.

        Returns:
            Duration in seconds

        Raises:
            ValueError: If the stage was never started
        """
        try:
            started = self._running.pop(name)
        except KeyError:
            raise ValueError(f"Operation '{name}' was not started") from None
        duration = time.perf_counter() - started
        self._finished[name] = duration
        logger.debug("Stage %s took %.3f s", name, duration)
        return duration

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        self.start_operation(name)
        try:
            yield
        finally:
            self.end_operation(name)

    def get_summary(self) -> Dict[str, float]:
        """Durations of the finished stages."""
        return dict(self._finished)
