"""Run Logger - Appends structured diagnostics to a JSONL file for later inspection"""

import json
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional

from navsim.core.config import settings


def get_log_directory() -> Path:
    """Get the log directory path (settings.LOG_DIR, ~/.navsim/logs by default)"""
    log_dir = Path(settings.LOG_DIR).expanduser()
    log_dir.mkdir(parents=True, exist_ok=True)
    return log_dir


def get_log_file_path() -> Path:
    """Get the path to the JSONL run log"""
    return get_log_directory() / "navsim.jsonl"


def _jsonable(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "tolist"):
        return _jsonable(value.tolist())
    return value


def log_event(
    category: str,
    message: str,
    data: Optional[Dict[str, Any]] = None,
    run_id: Optional[str] = None,
):
    """Log one diagnostic event

    Args:
        category: Category of event (e.g., 'rho_schedule', 'synthesis', 'montecarlo')
        message: Human-readable summary
        data: Optional structured payload
        run_id: Optional run context
    """
    log_entry = {
        "timestamp": datetime.now(timezone.utc).isoformat().replace("+00:00", "Z"),
        "category": category,
        "message": message,
    }

    if run_id:
        log_entry["run_id"] = str(run_id)
    if data:
        log_entry["data"] = _jsonable(data)

    try:
        with open(get_log_file_path(), "a", encoding="utf-8") as f:
            f.write(json.dumps(log_entry, ensure_ascii=False) + "\n")
    except Exception:
        # Don't fail the run if logging fails
        pass


def read_events(category: Optional[str] = None, limit: Optional[int] = None) -> list:
    """Read logged events, newest last

    Args:
        category: Only return events of this category
        limit: Return at most this many (the most recent)
    """
    log_file = get_log_file_path()
    if not log_file.exists():
        return []

    events = []
    with open(log_file, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError:
                continue
            if category is None or entry.get("category") == category:
                events.append(entry)

    if limit is not None:
        events = events[-limit:]
    return events
