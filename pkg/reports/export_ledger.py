#reports/export_ledger.py
import csv
import hashlib
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import boto3

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from common import config, logger, repo
from common.db import get_database
from common.errors import InputError

BENCH_COLUMNS = ["run_id", "started_at", "method", "resolution", "frames", "fps_median", "fps_mad", "threads"]
TRAIN_COLUMNS = ["run_id", "started_at", "branch", "epoch", "train_loss", "train_acc", "val_acc"]


def _sha256_file(path: str) -> str:
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()


def _write_table(rows, columns: list[str], csv_path: str, json_path: str):
    with open(csv_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        writer.writerows(rows)
    with open(json_path, "w", encoding="utf-8") as jf:
        json.dump([dict(zip(columns, row)) for row in rows], jf, ensure_ascii=False, indent=2)


def _upload(paths: dict[str, str], date_part: str, meta: dict) -> str:
    s3 = boto3.client("s3")
    prefix = config.REPORT_S3_PREFIX.rstrip("/")
    base_path = f"{prefix}/motionforge/{date_part}" if prefix else f"motionforge/{date_part}"
    for path in paths.values():
        content_type = "text/csv" if path.endswith(".csv") else "application/json"
        s3.upload_file(
            path,
            config.REPORT_S3_BUCKET,
            f"{base_path}/{os.path.basename(path)}",
            ExtraArgs={"Metadata": meta, "ContentType": content_type},
        )
    return f"s3://{config.REPORT_S3_BUCKET}/{base_path}"


def export_ledger_report(report_dir: str = "reports/out") -> dict:
    """
    Dump bench reports and training metrics from the run ledger as CSV and
    JSON with sha256 digests; upload to S3 when a bucket is configured.
    """
    ts = datetime.now(timezone.utc)
    date_part = ts.strftime("%Y-%m-%d")
    os.makedirs(report_dir, exist_ok=True)
    paths = {
        "bench_csv": f"{report_dir}/bench_{date_part}.csv",
        "bench_json": f"{report_dir}/bench_{date_part}.json",
        "train_csv": f"{report_dir}/train_{date_part}.csv",
        "train_json": f"{report_dir}/train_{date_part}.json",
    }
    logger.log("export_ledger", "start", f"Exporting ledger to {report_dir}", details={"db_url": config.DB_URL})

    try:
        with get_database().get_connection() as conn:
            bench_rows = repo.fetch_bench_reports_for_export(conn)
            train_rows = repo.fetch_train_metrics_for_export(conn)

        if not bench_rows and not train_rows:
            raise InputError("run ledger holds no bench reports or training metrics", config.DB_URL)

        _write_table(bench_rows, BENCH_COLUMNS, paths["bench_csv"], paths["bench_json"])
        _write_table(train_rows, TRAIN_COLUMNS, paths["train_csv"], paths["train_json"])
        digests = {name: _sha256_file(path) for name, path in paths.items()}

        s3_location = None
        if config.REPORT_S3_BUCKET and not config.LOCAL_ONLY:
            meta = {
                "generated_at": ts.isoformat(),
                "bench_rows": str(len(bench_rows)),
                "train_rows": str(len(train_rows)),
                **{f"{name}_sha256": digest for name, digest in digests.items()},
            }
            s3_location = _upload(paths, date_part, meta)

        summary = {
            "bench_rows": len(bench_rows),
            "train_rows": len(train_rows),
            "paths": {name: os.path.abspath(path) for name, path in paths.items()},
            "sha256": digests,
            "s3_location": s3_location,
        }
        logger.log("export_ledger", "success", "Ledger artifacts generated.", details=summary)
        return summary

    except Exception as e:
        logger.log("export_ledger", "error", f"Error exporting ledger: {e}", level="ERROR")
        raise


if __name__ == "__main__":
    export_ledger_report()
