"""On-disk layout of an embedding run.

A run directory holds

* ``embedding.csv``  - ``id,e0,e1,psi0,psi1[,label]``, one row per point
* ``embedding.json`` - config, loss curves, split and graph hyperparameters
* ``xi.json`` / ``psi.json`` - model checkpoints (see :mod:`flowembed.nn`)
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .nn import load_mlp, save_mlp
from .trainer import EmbeddingResult

EMBEDDING_CSV = "embedding.csv"
SIDECAR = "embedding.json"
XI_CKPT = "xi.json"
PSI_CKPT = "psi.json"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_embedding_csv(result: EmbeddingResult, path) -> None:
    has_label = result.labels is not None
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "e0", "e1", "psi0", "psi1"] + (["label"] if has_label else []))
        for i, (e, f) in enumerate(zip(result.embeddings, result.field_at_points)):
            row = [str(i), repr(float(e[0])), repr(float(e[1])), repr(float(f[0])), repr(float(f[1]))]
            if has_label:
                row.append(str(int(result.labels[i])))
            writer.writerow(row)


def read_embedding_csv(path):
    """Returns ``(embeddings, field, labels_or_None)``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:5] != ["id", "e0", "e1", "psi0", "psi1"]:
            raise ValueError(f"{path}: unexpected header {header}")
        has_label = len(header) > 5 and header[5] == "label"
        rows = [r for r in reader if r]
    data = np.array([[float(v) for v in r[1:5]] for r in rows])
    labels = np.array([int(r[5]) for r in rows]) if has_label else None
    return data[:, :2], data[:, 2:], labels


def save_result(result: EmbeddingResult, directory, extra: dict | None = None) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    write_embedding_csv(result, out / EMBEDDING_CSV)
    sidecar = {
        "config": result.config,
        "loss_curves": result.loss_curves,
        "train_indices": result.train_indices,
        "test_indices": result.test_indices,
        "metadata": result.metadata,
        "pseudotime": result.pseudotime,
    }
    if extra:
        sidecar.update(extra)
    (out / SIDECAR).write_text(json.dumps(_plain(sidecar), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    save_mlp(result.xi, out / XI_CKPT)
    save_mlp(result.psi, out / PSI_CKPT)
    return out


def load_result(directory) -> EmbeddingResult:
    d = Path(directory)
    for name in (EMBEDDING_CSV, SIDECAR, XI_CKPT, PSI_CKPT):
        if not (d / name).is_file():
            raise FileNotFoundError(f"missing {d / name}")
    E, F, labels = read_embedding_csv(d / EMBEDDING_CSV)
    meta = json.loads((d / SIDECAR).read_text(encoding="utf-8"))
    pseudotime = meta.get("pseudotime")
    return EmbeddingResult(
        embeddings=E,
        field_at_points=F,
        loss_curves=meta["loss_curves"],
        config=meta["config"],
        xi=load_mlp(d / XI_CKPT),
        psi=load_mlp(d / PSI_CKPT),
        train_indices=np.array(meta["train_indices"], dtype=int),
        test_indices=np.array(meta["test_indices"], dtype=int),
        labels=labels,
        pseudotime=None if pseudotime is None else np.array(pseudotime, dtype=float),
        metadata=meta.get("metadata", {}),
    )
