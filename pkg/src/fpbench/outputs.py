"""Result files: rate tables, provenance JSON, plot data and JSON-lines records.

Nothing written here carries a timestamp or a wall time except the trial and
accusation logs, so reruns with the same config and seed are byte-identical.
"""

import csv
import json
import math
import re
from pathlib import Path
from typing import Any, Iterable, Optional, Union

import numpy as np

from .harness import EVENTS, CampaignResult, TrialRecord

RATES_FILENAME = "rates.csv"
RESULT_FILENAME = "result.json"
TRIAL_LOG_FILENAME = "trials.jsonl"
ACCUSATIONS_FILENAME = "accusations.jsonl"
ENCODES_FILENAME = "encodes.jsonl"

RATES_COLUMNS = [
    "attack",
    "N",
    "trials",
    "event",
    "count",
    "rate",
    "lo",
    "hi",
    "slope",
    "slope_se",
    "encoding_failures",
]
PLOT_COLUMNS = ["N", "event", "rate", "lo", "hi", "minus_log2_rate_over_N"]

PathLike = Union[str, Path]


def _plain(value: Any) -> Any:
    """JSON-safe copy: numpy to Python, non-finite floats to strings."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, set, frozenset)):
        items = sorted(value) if isinstance(value, (set, frozenset)) else value
        return [_plain(v) for v in items]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return value


def _cell(value: Any) -> Any:
    return "" if value is None else value


def slug(name: str) -> str:
    """File-name-safe version of an attack label."""
    return re.sub(r"[^A-Za-z0-9._-]+", "_", name).strip("_") or "attack"


def write_json(data: Any, path: PathLike) -> Path:
    """Sorted-key, indented JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(data), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def write_jsonl(rows: Iterable[dict[str, Any]], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(_plain(row), sort_keys=True) + "\n")
    return path


def write_rates_csv(result: CampaignResult, path: PathLike) -> Path:
    """
    One line per (attack, N, event).

    Columns: attack, N, trials, event, count, rate, lo, hi (95% Wilson, rule
    of three at zero events), slope and slope_se (finite-N exponent fit of
    the attack and event, blank when fewer than two nonzero rates),
    encoding_failures.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fits = {(s.attack, s.event): s for s in result.slopes}
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(RATES_COLUMNS)
        for row in result.rows:
            for event in EVENTS:
                lo, hi = row.interval(event)
                fit = fits.get((row.attack, event))
                writer.writerow(
                    [
                        row.attack,
                        row.N,
                        row.trials,
                        event,
                        row.counts[event],
                        row.rate(event),
                        lo,
                        hi,
                        _cell(fit.slope if fit else None),
                        _cell(fit.se if fit else None),
                        row.encoding_failures,
                    ]
                )
    return path


def plot_rows(result: CampaignResult, attack: str) -> list[list[Any]]:
    """Plot-ready rows of one attack; minus_log2_rate_over_N is blank at zero rate."""
    out = []
    for row in sorted((r for r in result.rows if r.attack == attack), key=lambda r: r.N):
        for event in EVENTS:
            rate = row.rate(event)
            lo, hi = row.interval(event)
            exponent = -math.log2(rate) / row.N if rate > 0 else None
            out.append([row.N, event, rate, lo, hi, _cell(exponent)])
    return out


def write_plot_csv(result: CampaignResult, attack: str, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(PLOT_COLUMNS)
        writer.writerows(plot_rows(result, attack))
    return path


def write_trial_log(records: Iterable[TrialRecord], path: PathLike) -> Path:
    return write_jsonl((r.to_json_dict() for r in records), path)


def accusations_to_jsonl(records: Iterable[TrialRecord], path: PathLike) -> Path:
    """
    One accusation per trial.

    Keys: trial_id, N, attack, decoder, accused, top_score, lambda_index,
    elapsed and, for the joint decoder, k_max and k_max_reached.
    """
    return write_jsonl(({"N": r.N, "attack": r.attack, **r.accusation} for r in records), path)


def encode_records_to_jsonl(records: Iterable[TrialRecord], path: PathLike) -> Path:
    """One line per colluder encoding; failed encodings carry ``"l": "FAIL"``."""
    return write_jsonl(
        ({"trial_id": r.trial_id, "N": r.N, "attack": r.attack, **e} for r in records for e in r.encodes), path
    )


def emit_outputs(result: CampaignResult, out_dir: PathLike, trial_log: Optional[bool] = None) -> list[Path]:
    """
    Write every campaign file into ``out_dir``.

    rates.csv, result.json, one plot_<attack>.csv per attack and, when the
    campaign kept its records, trials.jsonl, accusations.jsonl and encodes.jsonl.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [write_rates_csv(result, out / RATES_FILENAME), write_json(result.to_json_dict(), out / RESULT_FILENAME)]
    for attack in sorted({r.attack for r in result.rows}):
        written.append(write_plot_csv(result, attack, out / f"plot_{slug(attack)}.csv"))
    keep_log = bool(result.records) if trial_log is None else trial_log
    if keep_log:
        written.append(write_trial_log(result.records, out / TRIAL_LOG_FILENAME))
        written.append(accusations_to_jsonl(result.records, out / ACCUSATIONS_FILENAME))
        written.append(encode_records_to_jsonl(result.records, out / ENCODES_FILENAME))
    return written
