"""Audit logging for fpbench runs."""

import json
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional

DEFAULT_LOG_DIR = Path.home() / ".fpbench" / "logs"
LOG_FILENAME = "fpbench.log"


def get_log_dir() -> Optional[Path]:
    """
    Resolve the log directory from FPBENCH_LOG_DIR.

    Returns:
        Directory path, or None when logging is disabled (empty variable).
    """
    value = os.environ.get("FPBENCH_LOG_DIR")
    if value is None:
        return DEFAULT_LOG_DIR
    if not value.strip():
        return None
    return Path(value)


def ensure_log_dir() -> Optional[Path]:
    """Ensure the log directory exists and return it."""
    log_dir = get_log_dir()
    if log_dir is not None:
        log_dir.mkdir(parents=True, exist_ok=True)
    return log_dir


def _jsonable(value: Any) -> Any:
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, (set, frozenset, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_jsonable(v) for v in value]
    return value


def log_event(action: str, outcome: str, error: Optional[str] = None, **details: Any) -> None:
    """
    Append an event to the audit log.

    Args:
        action: What happened (e.g. "quantize_design", "campaign")
        outcome: "ok", "started", "fallback", "warning", "empty", "encoding_failure",
            "refused" or "error"
        error: Optional error message
        **details: Extra JSON-serializable context
    """
    log_dir = ensure_log_dir()
    if log_dir is None:
        return

    log_entry = {
        "timestamp": datetime.now(timezone.utc).isoformat().replace("+00:00", "Z"),
        "action": action,
        "outcome": outcome,
    }
    if details:
        log_entry["details"] = _jsonable(details)
    if error:
        log_entry["error"] = error

    # Append-only log file
    with open(log_dir / LOG_FILENAME, "a", encoding="utf-8") as f:
        f.write(json.dumps(log_entry, default=str) + "\n")
