"""Worker-count control for the few operations that may use threads."""

import os

ENV_VAR = "DIFFICALIB_THREADS"


def worker_cap() -> int:
    """Upper bound on worker threads, from DIFFICALIB_THREADS (default 1)."""
    raw = os.environ.get(ENV_VAR, "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)
