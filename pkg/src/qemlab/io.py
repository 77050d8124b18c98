"""Dataset CSV and parameter JSON files.

The CSV header is ``x1,...,xd[,label]``; labels in files are 1-based.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .core import Dataset, GmmParams


def write_dataset_csv(data: Dataset, path) -> None:
    header = [f"x{j + 1}" for j in range(data.d)]
    if data.true_labels is not None:
        header.append("label")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i, row in enumerate(data.points):
            values = [repr(float(v)) for v in row]
            if data.true_labels is not None:
                values.append(str(int(data.true_labels[i]) + 1))
            writer.writerow(values)


def read_dataset_csv(path) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        rows = [r for r in reader if r]
    has_label = header[-1] == "label"
    n_feat = len(header) - int(has_label)
    if n_feat < 1:
        raise ValueError(f"{path}: no feature columns")
    table = np.array([[float(v) for v in r] for r in rows], dtype=float)
    if table.ndim != 2 or table.shape[1] != len(header):
        raise ValueError(f"{path}: ragged rows")
    labels = table[:, -1].astype(int) - 1 if has_label else None
    return Dataset(table[:, :n_feat], labels)


def write_params_json(params: GmmParams, path) -> None:
    Path(path).write_text(json.dumps(params.to_dict(), indent=2), encoding="utf-8")


def read_params_json(path) -> GmmParams:
    return GmmParams.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
