import contextlib
from datetime import datetime, timezone

from common import logger, repo
from common.db import get_database


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@contextlib.contextmanager
def recorded_run(command: str, resolved: dict):
    """
    Register a run in the ledger (when enabled) and mark it finished on exit.
    Yields the run id used in log lines.
    """
    run_id = logger.start_run()
    database = get_database()
    if database.enabled:
        with database.get_connection() as conn:
            repo.insert_run(conn, run_id, command, resolved, _now())
    status = "FAILED"
    try:
        yield run_id
        status = "SUCCEEDED"
    finally:
        if database.enabled:
            with database.get_connection() as conn:
                repo.finish_run(conn, run_id, status, _now())


def record(insert, run_id: str, items) -> int:
    """Persist items with a repo insert function; no-op when the ledger is off."""
    database = get_database()
    if not database.enabled:
        return 0
    count = 0
    with database.get_connection() as conn:
        for item in items:
            insert(conn, run_id, item)
            count += 1
    logger.log("ledger", "success", f"Recorded {count} rows", details={"run_id": run_id})
    return count
