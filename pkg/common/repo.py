import json
from typing import Any, List, Tuple

from common.db import get_database


# Runs
def insert_run(conn, run_id: str, command: str, config_json: dict, started_at: str):
    get_database().execute(
        conn.cursor(),
        """
        INSERT INTO runs (run_id, command, config_json, started_at, status)
        VALUES (?, ?, ?, ?, 'RUNNING')
        """,
        (run_id, command, json.dumps(config_json, sort_keys=True, default=str), started_at),
    )


def finish_run(conn, run_id: str, status: str, finished_at: str):
    get_database().execute(
        conn.cursor(),
        """
        UPDATE runs
        SET status = ?, finished_at = ?
        WHERE run_id = ?
        """,
        (status, finished_at, run_id),
    )


# Bench reports
def insert_bench_report(conn, run_id: str, report) -> None:
    get_database().execute(
        conn.cursor(),
        """
        INSERT INTO bench_reports
            (run_id, method, resolution, frames, fps_median, fps_mad, threads,
             wall_seconds_json, env_json)
        VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)
        """,
        (
            run_id,
            report.method,
            report.resolution,
            report.frames_processed,
            report.fps_median,
            report.fps_mad,
            report.threads,
            json.dumps(list(report.wall_seconds)),
            json.dumps(report.env, sort_keys=True),
        ),
    )


# Training metrics
def insert_train_metric(conn, run_id: str, record: dict):
    get_database().execute(
        conn.cursor(),
        """
        INSERT INTO train_metrics (run_id, branch, epoch, train_loss, train_acc, val_acc)
        VALUES (?, ?, ?, ?, ?, ?)
        """,
        (
            run_id,
            record["branch"],
            record.get("epoch"),
            record.get("train_loss"),
            record.get("train_acc"),
            record.get("val_acc"),
        ),
    )


def fetch_bench_reports_for_export(conn) -> List[Tuple[Any, ...]]:
    cur = conn.cursor()
    get_database().execute(
        cur,
        """
        SELECT
            b.run_id,
            r.started_at,
            b.method,
            b.resolution,
            b.frames,
            b.fps_median,
            b.fps_mad,
            b.threads
        FROM bench_reports b
        JOIN runs r ON b.run_id = r.run_id
        ORDER BY r.started_at, b.method
        """,
    )
    return cur.fetchall()


def fetch_train_metrics_for_export(conn) -> List[Tuple[Any, ...]]:
    cur = conn.cursor()
    get_database().execute(
        cur,
        """
        SELECT
            m.run_id,
            r.started_at,
            m.branch,
            m.epoch,
            m.train_loss,
            m.train_acc,
            m.val_acc
        FROM train_metrics m
        JOIN runs r ON m.run_id = r.run_id
        ORDER BY r.started_at, m.branch, m.epoch
        """,
    )
    return cur.fetchall()
