# core/storage.py
"""
File formats for datasets and run artifacts: CSV via csv.DictWriter/DictReader, JSON with
sorted keys. Writers are deterministic so identical runs produce identical bytes.
"""

import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from core.config import settings
from core.errors import DatasetError
from data.models import FeatureVector, SignatureKind, SignatureRecord, WriterSet

logger = logging.getLogger(__name__)


def format_float(value: float, fmt: Optional[str] = None) -> str:
    if value is None:
        return ""
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(value, fmt or settings.CSV_FLOAT_FORMAT)


def write_rows_csv(path: Path, fieldnames: Sequence[str], rows: Iterable[Dict[str, Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fieldnames), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return path


def read_rows_csv(path: Path, required_columns: Sequence[str] = ()) -> List[Dict[str, str]]:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"File not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in required_columns if c not in (reader.fieldnames or [])]
        if missing:
            raise DatasetError(f"{path} is missing required columns: {', '.join(missing)}")
        return list(reader)


def write_json(path: Path, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return path


def read_json(path: Path) -> Any:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"File not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise DatasetError(f"{path} is not valid JSON: {e}")


# ===== FEATURE DATASETS =====
# Header: writer_id,kind,f0..f{D-1}; kind is "genuine" or "skilled".

def write_dataset_csv(path: Path, ws: WriterSet) -> Path:
    dimension = ws.dimension
    fieldnames = ["writer_id", "kind"] + [f"f{i}" for i in range(dimension)]

    def rows():
        for writer_id in ws.writer_ids:
            for record in ws.genuine(writer_id) + ws.skilled(writer_id):
                row = {"writer_id": record.writer_id, "kind": record.kind.value}
                # repr is the shortest round-trip form, so reloads are lossless
                row.update({f"f{i}": repr(float(v)) for i, v in enumerate(record.features.values)})
                yield row

    write_rows_csv(path, fieldnames, rows())
    logger.info(f"[DATA] Wrote {len(ws)} writers (D={dimension}) to {path}")
    return Path(path)


def read_dataset_csv(path: Path) -> WriterSet:
    rows = read_rows_csv(path, required_columns=["writer_id", "kind"])
    if not rows:
        raise DatasetError(f"{path} holds no signatures")

    feature_cols = sorted((c for c in rows[0] if c.startswith("f") and c[1:].isdigit()), key=lambda c: int(c[1:]))
    if not feature_cols or feature_cols != [f"f{i}" for i in range(len(feature_cols))]:
        raise DatasetError(f"{path} must declare feature columns f0..f{{D-1}}")

    writers: Dict[int, List[SignatureRecord]] = {}
    for line_no, row in enumerate(rows, start=2):
        try:
            writer_id = int(row["writer_id"])
            kind = SignatureKind(row["kind"].strip())
            values = np.array([float(row[c]) for c in feature_cols])
            record = SignatureRecord(writer_id=writer_id, kind=kind, features=FeatureVector(values=values))
        except (ValueError, KeyError) as e:
            raise DatasetError(f"{path}:{line_no}: {e}")
        writers.setdefault(writer_id, []).append(record)

    try:
        return WriterSet(writers=writers)
    except ValueError as e:
        raise DatasetError(f"{path}: {e}")


def dataset_paths(directory: Path) -> Tuple[Path, Path]:
    directory = Path(directory)
    return directory / "dataset.csv", directory / "manifest.json"
