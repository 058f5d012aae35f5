"""Embedding files and run artifacts.

Embeddings are UTF-8 CSV with header ``id,f0,...,f{d-1},label``; features
are written with 17 significant digits so a save/load round trip is exact.
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import EmbeddedDataset, FilterResult
from .errors import InputError, ParseError


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def embeddings_text(dataset: EmbeddedDataset) -> str:
    d = dataset.dim
    lines = [",".join(["id", *(f"f{j}" for j in range(d)), "label"])]
    for ident, row, label in zip(dataset.ids, dataset.features, dataset.labels):
        if "," in ident or not ident:
            raise InputError(f"id {ident!r} cannot be written unquoted")
        lines.append(",".join([ident, *(_fmt(v) for v in row), str(int(label))]))
    return "\n".join(lines) + "\n"


def save_embeddings(dataset: EmbeddedDataset, path: str | os.PathLike) -> None:
    write_text(path, embeddings_text(dataset))


def load_embeddings(path: str | os.PathLike) -> EmbeddedDataset:
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"embeddings file not found: {path}")
    with path.open(encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty embeddings file", line=1)

    header = [h.strip() for h in rows[0]]
    d = len(header) - 2
    expected = ["id", *(f"f{j}" for j in range(d)), "label"]
    if d < 1 or header != expected:
        raise ParseError(f"header must read {'id,f0,...,f{d-1},label'!r}, got {','.join(header)!r}", line=1)

    ids, feats, labels, seen = [], [], [], {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != d + 2:
            raise ParseError(f"expected {d + 2} fields, found {len(row)}", line=lineno)
        ident = row[0].strip()
        if not ident:
            raise ParseError("empty id", line=lineno)
        if ident in seen:
            raise ParseError(f"duplicate id {ident!r} (first seen on line {seen[ident]})", line=lineno)
        seen[ident] = lineno
        try:
            values = [float(v) for v in row[1:-1]]
        except ValueError:
            raise ParseError("non-numeric feature value", line=lineno) from None
        if not all(np.isfinite(values)):
            raise ParseError("non-finite feature value", line=lineno)
        try:
            label = int(row[-1].strip())
        except ValueError:
            raise ParseError(f"unparseable label {row[-1]!r}", line=lineno) from None
        if label < 0:
            raise ParseError(f"negative label {label}", line=lineno)
        ids.append(ident)
        feats.append(values)
        labels.append(label)

    features = np.array(feats, dtype=np.float64).reshape(len(ids), d)
    return EmbeddedDataset(tuple(ids), features, np.array(labels, dtype=np.int64))


def masks_text(ids: Sequence[str], bias_mask, flip_mask) -> str:
    lines = ["id,bias,flip"]
    lines += [f"{i},{int(b)},{int(f)}" for i, b, f in zip(ids, bias_mask, flip_mask)]
    return "\n".join(lines) + "\n"


def save_masks(ids: Sequence[str], bias_mask, flip_mask, path) -> None:
    write_text(path, masks_text(ids, bias_mask, flip_mask))


def load_masks(path, ids: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    """Read a ``id,bias,flip`` file and align it with ``ids``."""
    with Path(path).open(encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != ["id", "bias", "flip"]:
        raise ParseError("mask file header must be 'id,bias,flip'", line=1)
    table = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3 or row[1] not in ("0", "1") or row[2] not in ("0", "1"):
            raise ParseError("mask rows need an id and two 0/1 flags", line=lineno)
        table[row[0]] = (row[1] == "1", row[2] == "1")
    missing = [i for i in ids if i not in table]
    if missing:
        raise ParseError(f"mask file lacks {len(missing)} ids, e.g. {missing[0]!r}")
    bias = np.array([table[i][0] for i in ids])
    flip = np.array([table[i][1] for i in ids])
    return bias, flip


def retained_ids_text(result: FilterResult, original_ids: Sequence[str]) -> str:
    """One retained id per line, in input order."""
    keep = set(result.retained_ids)
    return "".join(f"{i}\n" for i in original_ids if i in keep)


def history_csv_text(result: FilterResult) -> str:
    lines = ["phase,removed_count,mean_score,max_score,remaining"]
    for p in result.phases:
        lines.append(
            f"{p.phase_index},{len(p.removed_ids)},{_fmt(p.mean_score)},"
            f"{_fmt(p.max_score)},{p.remaining_count}"
        )
    return "\n".join(lines) + "\n"


def plot_data_csv_text(dataset: EmbeddedDataset, retained: Iterable[str], bias_mask=None) -> str:
    """Per-instance ``id,x,y,label,bias_mask,retained`` rows for external plotting."""
    keep = set(retained)
    lines = ["id,x,y,label,bias_mask,retained"]
    for j, ident in enumerate(dataset.ids):
        x, y = dataset.features[j, 0], dataset.features[j, 1] if dataset.dim > 1 else 0.0
        b = "" if bias_mask is None else str(int(bias_mask[j]))
        lines.append(
            f"{ident},{_fmt(x)},{_fmt(y)},{int(dataset.labels[j])},{b},{int(ident in keep)}"
        )
    return "\n".join(lines) + "\n"


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)
