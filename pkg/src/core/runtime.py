"""
Run-time Utilities

Stage timing, deterministic parallel execution and artifact hashing for
multi-stage experiment runs.

Architecture Decision:
- Per-site and per-trial work is independent, so it can fan out to
  worker threads.
- Results are always merged by input index, never by completion order,
  which keeps --jobs N output identical to --jobs 1.
"""

import hashlib
import logging
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from functools import wraps
from importlib import metadata
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Sequence, TypeVar


logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


# ============================================================================
# STAGE TIMING
# ============================================================================

class StageTimer:
    """
    Context manager for a named pipeline stage

    Example:
        with StageTimer("Train cloud model"):
            trainer.fit()
        # Elapsed time is logged automatically
    """

    def __init__(self, name: str = "Stage"):
        """
        Initialize context

        Args:
            name: Stage name for logging
        """
        self.name = name
        self.elapsed = 0.0
        self._start = 0.0

    def __enter__(self):
        logger.info(f"Starting: {self.name}")
        self._start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.elapsed = time.perf_counter() - self._start
        if exc_type is None:
            logger.info(f"✅ {self.name} finished in {self.elapsed:.1f}s")
        else:
            logger.error(f"❌ {self.name} failed after {self.elapsed:.1f}s: {exc_val}")
        return False  # Don't suppress exceptions


def timed_stage(func: Callable):
    """
    Decorator wrapping a function in a StageTimer named after it

    Example:
        @timed_stage
        def build_samples(fleet):
            ...
    """
    @wraps(func)
    def wrapper(*args, **kwargs):
        with StageTimer(func.__name__):
            return func(*args, **kwargs)

    return wrapper


# ============================================================================
# PARALLEL JOBS
# ============================================================================

def run_jobs(fn: Callable[[T], R], items: Sequence[T], jobs: int = 1) -> List[R]:
    """
    Apply fn to every item, optionally on worker threads

    Args:
        fn: Function applied to each item; must own its data exclusively
        items: Work items
        jobs: Number of worker threads (1 = run inline)

    Returns:
        Results in the order of items

    Example:
        >>> run_jobs(lambda x: x * 2, [1, 2, 3], jobs=2)
        [2, 4, 6]
    """
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    logger.debug(f"Running {len(items)} jobs on {jobs} threads")
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(fn, item) for item in items]
        return [future.result() for future in futures]


# ============================================================================
# ARTIFACT HASHING
# ============================================================================

def file_sha256(path: Path) -> str:
    """Hex digest of a file's bytes"""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def hash_tree(paths: Iterable[Path], root: Path) -> Dict[str, str]:
    """sha256 of every regular file under the given paths, keyed relative to root"""
    hashes = {}
    for path in paths:
        files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
        for file in files:
            if file.exists():
                hashes[file.relative_to(root).as_posix()] = file_sha256(file)
    return dict(sorted(hashes.items()))


def package_versions() -> Dict[str, str]:
    """Versions of the interpreter and the numerical stack"""
    versions = {"python": platform.python_version()}
    for name in ("numpy", "pandas", "pydantic", "pydantic-settings", "Pillow"):
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "missing"
    return versions
