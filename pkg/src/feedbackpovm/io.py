"""File formats: JSON documents and CSV tables."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .channel import ImperfectionParams
from .exceptions import ConfigError
from .povm import PovmSet
from .receiver import StageSchedule
from .tomography import CountDataset, ProbeSet


def dump_json(doc, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def povm_to_dict(povm: PovmSet) -> dict:
    """Row-major nested lists of ``{"re", "im"}`` pairs, one matrix per label."""
    return {
        "dim": povm.dim,
        "labels": list(povm.labels),
        "elements": [[[{"re": float(z.real), "im": float(z.imag)} for z in row] for row in el]
                     for el in povm.elements],
    }


def povm_from_dict(doc: dict) -> PovmSet:
    unknown = set(doc) - {"dim", "labels", "elements"}
    if unknown:
        raise ConfigError(f"unknown POVM fields: {sorted(unknown)}")
    els = np.array([[[complex(z["re"], z["im"]) for z in row] for row in el]
                    for el in doc["elements"]])
    return PovmSet(els, tuple(doc["labels"]))


def save_povm(povm: PovmSet, path) -> None:
    dump_json(povm_to_dict(povm), path)


def load_povm(path) -> PovmSet:
    return povm_from_dict(load_json(path))


def save_schedule(schedule: StageSchedule, path) -> None:
    dump_json(schedule.to_dict(), path)


def load_schedule(path) -> StageSchedule:
    return StageSchedule.from_dict(load_json(path))


def save_imperfections(imp: ImperfectionParams, path) -> None:
    dump_json(imp.to_dict(), path)


def load_imperfections(path) -> ImperfectionParams:
    return ImperfectionParams.from_dict(load_json(path))


def save_probes(probes: ProbeSet, path) -> None:
    dump_json(probes.to_dict(), path)


def load_probes(path) -> ProbeSet:
    return ProbeSet.from_dict(load_json(path))


def save_dataset(dataset: CountDataset, path) -> None:
    """Long-format CSV with header ``probe_index,outcome_label,count``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["probe_index", "outcome_label", "count"])
        for k, row in enumerate(dataset.counts):
            for label, c in zip(dataset.labels, row):
                writer.writerow([k, label, repr(float(c))])


def load_dataset(path) -> CountDataset:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != {"probe_index", "outcome_label", "count"}:
        raise ConfigError(f"{path}: expected header probe_index,outcome_label,count")
    labels = list(dict.fromkeys(r["outcome_label"] for r in rows))
    n_probes = max(int(r["probe_index"]) for r in rows) + 1
    counts = np.zeros((n_probes, len(labels)))
    for r in rows:
        counts[int(r["probe_index"]), labels.index(r["outcome_label"])] = float(r["count"])
    shots = int(round(counts[0].sum()))
    return CountDataset(counts, tuple(labels), shots)


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def read_table(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x
