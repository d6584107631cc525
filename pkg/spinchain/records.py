"""Result files: CSV tables, JSON reports, plot recipes and sweep checkpoints."""

import csv
import json
import math
import os
import threading
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from . import __version__


class RecordError(Exception):
    """Error during result serialization."""
    pass


def _format(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    try:
        return repr(float(value))
    except (TypeError, ValueError):
        return str(value)


def _format_param(value) -> str:
    """Compact parameter text for file names (no path separators)."""
    if isinstance(value, float):
        text = f"{value:g}"
    else:
        text = str(value)
    return text.replace("/", "_").replace(" ", "")


def header_line(command: str, config_hash: str, **fields) -> str:
    parts = [f"# spinchain {__version__}", f"config={config_hash}", f"command={command}"]
    parts += [f"{key}={_format_param(value)}" for key, value in fields.items()]
    return " ".join(parts)


def result_name(command: str, model: str, L: int, **params) -> str:
    """File stem encoding command, model, chain length and parameters."""
    parts = [command, model, f"L{L}"]
    parts += [f"{key}{_format_param(value)}" for key, value in params.items()]
    return "_".join(parts)


def write_csv(path: Path, header: str, columns: list[str], rows) -> Path:
    """Header comment, column row, then one line per row; LF endings."""
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with open(path, "w", newline="") as f:
            f.write(header + "\n")
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                if len(row) != len(columns):
                    raise RecordError(f"Row has {len(row)} fields, expected {len(columns)}")
                writer.writerow([_format(v) for v in row])
    except OSError as e:
        raise RecordError(f"Cannot write {path}: {e}")
    return path


def read_csv(path: Path) -> tuple[str, list[str], list[list[str]]]:
    """Inverse of write_csv: (header, columns, rows as strings)."""
    with open(path, newline="") as f:
        header = f.readline().rstrip("\n")
        reader = csv.reader(f)
        columns = next(reader)
        return header, columns, [row for row in reader]


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if hasattr(value, "tolist"):
        return _jsonable(value.tolist())
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(path: Path, data: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(path, json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")
    return path


def write_recipe(csv_path: Path, title: str, x: str, y: list[str], notes: list[str] | None = None) -> Path:
    """Plain-text plotting recipe next to a CSV, led by the CSV's header line."""
    lines = []
    if csv_path.exists():
        with open(csv_path) as f:
            lines.append(f.readline().rstrip("\n"))
    lines += [
        f"title: {title}",
        f"data: {csv_path.name}",
        "skip: first line (header comment)",
        f"x: {x}",
        f"y: {', '.join(y)}",
    ]
    lines += [f"note: {n}" for n in notes or []]
    path = csv_path.with_suffix(".plot.txt")
    _atomic_write(path, "\n".join(lines) + "\n")
    return path


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except OSError as e:
        raise RecordError(f"Cannot write {path}: {e}")


@dataclass
class ResultRecord:
    """Summary of one command run."""
    command: str
    config_hash: str
    outputs: dict = field(default_factory=dict)
    verdicts: dict[str, bool] = field(default_factory=dict)
    elapsed: float = 0.0

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_dict(self, include_timing: bool = False) -> dict:
        data = {
            "version": __version__,
            "command": self.command,
            "config_hash": self.config_hash,
            "outputs": self.outputs,
            "verdicts": self.verdicts,
            "passed": self.passed,
        }
        if include_timing:
            data["elapsed"] = self.elapsed
        return data


@dataclass
class CheckpointEntry:
    values: dict
    recorded: str  # ISO timestamp


class CheckpointStore:
    """Completed sweep points keyed by their parameter hash.

    Saved after every point by replacing the whole file, so an interrupted
    sweep leaves a readable store behind.
    """

    def __init__(self, path: Path):
        self.path = path
        self._lock = threading.Lock()
        self._entries = self._load()

    def _load(self) -> dict[str, CheckpointEntry]:
        if not self.path.exists():
            return {}
        try:
            with open(self.path) as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise RecordError(f"Unreadable checkpoint {self.path}: {e}")
        return {k: CheckpointEntry(**v) for k, v in data.items()}

    def _save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        data = {k: asdict(v) for k, v in sorted(self._entries.items())}
        _atomic_write(self.path, json.dumps(_jsonable(data), indent=2) + "\n")

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: str) -> dict | None:
        entry = self._entries.get(key)
        return entry.values if entry else None

    def put(self, key: str, values: dict) -> None:
        with self._lock:
            self._entries[key] = CheckpointEntry(values, datetime.now().isoformat())
            self._save()
