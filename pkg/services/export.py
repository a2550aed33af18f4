"""
Result Export

Write CSV tables and JSON reports with a reproducibility header: tool version,
model name and hash, seed, ledger values. No timestamps are written, so equal
configs and seeds give byte-identical files.
"""

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from config import APP_NAME, APP_VERSION


logger = logging.getLogger(__name__)


def format_value(value: Any) -> str:
    """CSV cell text: repr precision for floats, a+bj for complex numbers."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (complex, np.complexfloating)):
        z = complex(value)
        sign = "-" if math.copysign(1.0, z.imag) < 0 else "+"
        return f"{z.real!r}{sign}{abs(z.imag)!r}j"
    if isinstance(value, (tuple, list)):
        if all(isinstance(v, (int, np.integer)) for v in value):
            return format_word(value)
        return " ".join(format_value(v) for v in value)
    return str(value)


def format_word(word: Sequence[int]) -> str:
    """Symbol digits, comma separated once a symbol exceeds 9."""
    symbols = [int(s) for s in word]
    sep = "," if any(s > 9 for s in symbols) else ""
    return sep.join(str(s) for s in symbols)


def to_json_value(value: Any) -> Any:
    """Plain JSON data; non-finite floats become strings, complex numbers {re, im}."""
    if isinstance(value, dict):
        return {str(k): to_json_value(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_json_value(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_json_value(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else repr(v)
    if isinstance(value, (complex, np.complexfloating)):
        z = complex(value)
        return {"re": to_json_value(z.real), "im": to_json_value(z.imag)}
    if isinstance(value, Path):
        return value.as_posix()
    return value


@dataclass
class RunMetadata:
    """Header block carried by every output file."""
    model: str = ""
    model_sha256: str = ""
    seed: Optional[int] = None
    ledger: dict[str, float] = field(default_factory=dict)
    extra: dict[str, Any] = field(default_factory=dict)

    def items(self) -> list[tuple[str, Any]]:
        out: list[tuple[str, Any]] = [("tool", f"{APP_NAME} {APP_VERSION}"),
                                      ("model", self.model),
                                      ("model_sha256", self.model_sha256),
                                      ("seed", "none" if self.seed is None else self.seed)]
        out.extend((f"ledger.{k}", v) for k, v in sorted(self.ledger.items()))
        out.extend(sorted(self.extra.items()))
        return out


class ResultExporter:
    """
    CSV and JSON writers for command results.

    Usage:
        exporter = ResultExporter(RunMetadata(model="full2", model_sha256=h, seed=0))
        exporter.write_csv(path, ["b", "spectral_radius"], rows)
        exporter.write_json(path, {"ledger": {...}})
    """

    def __init__(self, metadata: RunMetadata):
        self.metadata = metadata

    def csv_text(self, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
        buffer = io.StringIO()
        for key, value in self.metadata.items():
            buffer.write(f"# {key}: {format_value(value)}\n")
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
        return buffer.getvalue()

    def json_text(self, result: dict) -> str:
        meta = {key: to_json_value(value) for key, value in self.metadata.items()
                if not key.startswith("ledger.")}
        if self.metadata.ledger:
            meta["ledger"] = to_json_value(self.metadata.ledger)
        payload = {"metadata": meta, "result": to_json_value(result)}
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    def write_csv(self, filepath: str | Path, header: Sequence[str],
                  rows: Iterable[Sequence[Any]]) -> Path:
        """
        Write a CSV table with the '#' metadata block.

        Args:
            filepath: Output file path (parent directories are created)
            header: Column names
            rows: Table rows

        Returns:
            The written path
        """
        path = Path(filepath)
        path.parent.mkdir(parents=True, exist_ok=True)
        rows = list(rows)
        with open(path, "w", newline="", encoding="utf-8") as f:
            f.write(self.csv_text(header, rows))
        logger.info("wrote %d rows to %s", len(rows), path)
        return path

    def write_json(self, filepath: str | Path, result: dict) -> Path:
        path = Path(filepath)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.json_text(result))
        logger.info("wrote JSON report to %s", path)
        return path


def read_csv_payload(filepath: str | Path) -> list[list[str]]:
    """Header row and data rows of an exported CSV, metadata lines skipped."""
    with open(filepath, newline="", encoding="utf-8") as f:
        lines = [line for line in f if not line.startswith("#")]
    return list(csv.reader(lines))
