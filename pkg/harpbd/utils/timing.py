import time

import structlog

logger = structlog.get_logger()


class Timer:
    """Named wall-clock phases in milliseconds."""

    def __init__(self):
        self.timings: dict[str, float] = {}
        self.start_times: dict[str, float] = {}

    def start(self, name: str) -> None:
        self.start_times[name] = time.perf_counter() * 1000
        logger.debug("Phase started", phase=name)

    def stop(self, name: str) -> float:
        if name not in self.start_times:
            logger.warning("Phase was not started", phase=name)
            return 0.0

        elapsed_ms = (time.perf_counter() * 1000) - self.start_times.pop(name)
        self.timings[name] = self.timings.get(name, 0.0) + elapsed_ms
        logger.debug("Phase stopped", phase=name, elapsed_ms=round(elapsed_ms, 2))
        return elapsed_ms

    def get_all_timings(self) -> dict[str, float]:
        return {name: round(time_ms, 2) for name, time_ms in self.timings.items()}
