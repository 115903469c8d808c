"""
Trial scheduler for Monte-Carlo runs.

Dispatches independent trials to a process pool. Results always come back
in submission order, so output does not depend on scheduling.
"""

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional

from core.env_loader import get_env
from core.errors import ValidationError


def resolve_workers(workers: Optional[int] = None, configured: Optional[int] = None) -> int:
    """
    Worker count: explicit value, else ISR_WORKERS, else config.yaml, else 1.

    Args:
        workers: Value from the --workers flag (None when not given)
        configured: harness.workers from config.yaml
    """
    if workers is None:
        raw = get_env("ISR_WORKERS", str(configured or 1))
        try:
            workers = int(raw)
        except ValueError:
            raise ValidationError(f"ISR_WORKERS must be an integer, got '{raw}'")
    if workers < 1:
        raise ValidationError(f"worker count must be at least 1, got {workers}")
    return workers


class TrialScheduler:
    """Runs trial functions inline or on a process pool"""

    def __init__(self, workers: Optional[int] = None, verbose: bool = False, configured: Optional[int] = None):
        self.workers = resolve_workers(workers, configured)
        self.verbose = verbose

    def map(self, function: Callable, tasks: Iterable) -> List:
        """
        Apply a picklable top-level function to every task.

        Returns:
            Results in the order of `tasks`
        """
        tasks = list(tasks)
        if self.verbose:
            print(f"  ⏰ Dispatching {len(tasks)} trial(s) to {self.workers} worker(s)")

        if self.workers == 1 or len(tasks) <= 1:
            return [function(task) for task in tasks]

        chunksize = max(1, len(tasks) // (4 * self.workers))
        with ProcessPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(function, tasks, chunksize=chunksize))
