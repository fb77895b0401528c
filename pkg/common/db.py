import contextlib
import sqlite3
from typing import Any, Iterable, Tuple

from common import config
from common.errors import ConfigError

try:
    import psycopg2  # type: ignore
except ImportError:  # pragma: no cover
    psycopg2 = None  # type: ignore


class Database:
    """
    Run-ledger connection helper for SQLite and Postgres, picked from the URL.
    - No URL: ledger disabled, callers skip persistence.
    - SQLite: enables foreign keys pragma.
    - Postgres: connect_timeout, autocommit off by default.
    """

    def __init__(self, url: str | None):
        self.url = url
        self.is_sqlite = bool(url) and config.db_is_sqlite(url)

    @property
    def enabled(self) -> bool:
        return bool(self.url)

    def _connect_sqlite(self):
        conn = sqlite3.connect(config.get_sqlite_path(self.url))
        conn.execute("PRAGMA foreign_keys = ON;")
        return conn

    def _connect_postgres(self):
        if psycopg2 is None:
            raise ConfigError("psycopg2 is required for Postgres ledgers")
        return psycopg2.connect(self.url, connect_timeout=10)

    @contextlib.contextmanager
    def get_connection(self):
        if not self.enabled:
            raise ConfigError(f"run ledger disabled; set {config.ENV_PREFIX}DB_URL")
        conn = self._connect_sqlite() if self.is_sqlite else self._connect_postgres()
        try:
            yield conn
            conn.commit()
        finally:
            conn.close()

    def prepare_sql(self, sql: str) -> str:
        """
        Convert SQLite-style ? placeholders to %s for Postgres.
        """
        if self.is_sqlite:
            return sql
        return sql.replace("?", "%s")

    def execute(self, cursor, sql: str, params: Iterable[Any] = ()):
        prepared = self.prepare_sql(sql)
        if params is None or (hasattr(params, "__len__") and len(params) == 0):
            cursor.execute(prepared)
        else:
            cursor.execute(prepared, params)

    def executemany(self, cursor, sql: str, seq_of_params: Iterable[Tuple[Any, ...]]):
        cursor.executemany(self.prepare_sql(sql), seq_of_params)


_CACHE: dict = {}


def get_database() -> Database:
    """Database for the currently configured ledger URL (re-read on each call)."""
    url = config.DB_URL
    if url not in _CACHE:
        _CACHE[url] = Database(url)
    return _CACHE[url]
