"""Reading behavioral trial/count data and aggregating confusion matrices.

Two CSV layouts are accepted:

* trial CSV: ``system,family,experiment,condition,true_class,response_class[,count]``
  (one row per trial, or per trial bundle when ``count`` is present)
* counts CSV: same columns with ``count`` mandatory, one row per nonzero
  confusion cell

A labels file (one class name per line, order defines the index) is always
required; labels found in the data but not in the file are an error, never
silently added.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

TRIAL_COLUMNS = ("system", "family", "experiment", "condition",
                 "true_class", "response_class")


class IngestError(ValueError):
    """Malformed input data (bad row, unknown label, empty file)."""


@dataclass(frozen=True)
class LabelSet:
    """Ordered set of K distinct class names; order defines matrix indexing."""

    labels: tuple[str, ...]
    index: dict[str, int] = field(compare=False)

    def __init__(self, labels):
        labels = tuple(labels)
        if len(labels) < 2:
            raise IngestError(f"need at least 2 labels, got {len(labels)}")
        if len(set(labels)) != len(labels):
            seen, dup = set(), None
            for lab in labels:
                if lab in seen:
                    dup = lab
                    break
                seen.add(lab)
            raise IngestError(f"duplicate label {dup!r}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "index", {lab: i for i, lab in enumerate(labels)})

    @property
    def k(self) -> int:
        return len(self.labels)

    def __len__(self):
        return len(self.labels)


@dataclass(frozen=True, order=True)
class BlockRef:
    """Identity of one confusion matrix: who was measured, where."""

    system: str
    family: str
    experiment: str
    condition: str


@dataclass(frozen=True)
class TrialRecord:
    system: str
    family: str
    experiment: str
    condition: str
    true_class: str
    response_class: str
    count: int = 1


@dataclass
class ConfusionCounts:
    """K x K nonnegative count matrix for one (system, experiment, condition) block.

    Row = true class, column = response class, in label_set order.
    """

    key: BlockRef
    counts: np.ndarray
    label_set: LabelSet

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        k = self.label_set.k
        if self.counts.shape != (k, k):
            raise IngestError(
                f"counts shape {self.counts.shape} does not match K={k}")
        if (self.counts < 0).any():
            raise IngestError("negative confusion counts")
        if self.counts.sum() <= 0:
            raise IngestError("confusion matrix has no trials")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)


def load_labels(source) -> LabelSet:
    """Read a labels file: one label per line, order defines the index."""
    text = source.read() if hasattr(source, "read") else open(source, encoding="utf-8").read()
    labels = [line.strip() for line in text.splitlines() if line.strip()]
    if not labels:
        raise IngestError("labels file is empty")
    return LabelSet(labels)


def _open_stream(source):
    if hasattr(source, "read"):
        return source
    return io.StringIO(open(source, encoding="utf-8").read())


def _parse_rows(source, labels: LabelSet, require_count: bool):
    stream = _open_stream(source)
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise IngestError("empty file: no header row") from None
    header = [h.strip() for h in header]
    has_count = "count" in header
    expected = list(TRIAL_COLUMNS) + (["count"] if has_count else [])
    if header != expected:
        raise IngestError(
            f"bad header {header!r}; expected {','.join(TRIAL_COLUMNS)}[,count]")
    if require_count and not has_count:
        raise IngestError("counts CSV requires an explicit count column")

    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(expected):
            raise IngestError(
                f"row {lineno}: expected {len(expected)} fields, got {len(row)}")
        vals = [v.strip() for v in row]
        sys_, fam, exp, cond, true_c, resp_c = vals[:6]
        for name, lab in (("true_class", true_c), ("response_class", resp_c)):
            if lab not in labels.index:
                raise IngestError(f"row {lineno}: unknown label {lab!r} in {name}")
        if has_count:
            raw = vals[6]
            try:
                count = int(raw)
            except ValueError:
                raise IngestError(
                    f"row {lineno}: non-integer count {raw!r}") from None
            if count < 1:
                raise IngestError(f"row {lineno}: count must be >= 1, got {count}")
        else:
            count = 1
        records.append(TrialRecord(sys_, fam, exp, cond, true_c, resp_c, count))
    if not records:
        raise IngestError("empty file: no data rows")
    return records


def load_trials(source, labels: LabelSet) -> list[TrialRecord]:
    """Parse a trial CSV into records; the count column is optional."""
    return _parse_rows(source, labels, require_count=False)


def load_counts(source, labels: LabelSet) -> list[TrialRecord]:
    """Parse a pre-aggregated counts CSV (count column mandatory)."""
    return _parse_rows(source, labels, require_count=True)


def aggregate_counts(records: list[TrialRecord], labels: LabelSet) -> list[ConfusionCounts]:
    """Sum trial records into one confusion matrix per distinct block.

    Blocks are keyed by (system, family, experiment, condition); output is
    sorted by that key so downstream artifacts are deterministic. Total trial
    mass is conserved: the sum over all returned matrices equals the sum of
    record counts.
    """
    if not records:
        raise IngestError("no records to aggregate")
    k = labels.k
    by_block: dict[BlockRef, np.ndarray] = {}
    for rec in records:
        key = BlockRef(rec.system, rec.family, rec.experiment, rec.condition)
        mat = by_block.get(key)
        if mat is None:
            mat = np.zeros((k, k), dtype=np.int64)
            by_block[key] = mat
        i = labels.index[rec.true_class]
        j = labels.index[rec.response_class]
        mat[i, j] += rec.count
    return [ConfusionCounts(key, by_block[key], labels)
            for key in sorted(by_block)]


def write_counts_csv(blocks: list[ConfusionCounts], stream) -> None:
    """Emit the canonical counts CSV: one row per nonzero cell."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(list(TRIAL_COLUMNS) + ["count"])
    for block in sorted(blocks, key=lambda b: b.key):
        labs = block.label_set.labels
        k = block.label_set.k
        for i in range(k):
            for j in range(k):
                c = int(block.counts[i, j])
                if c > 0:
                    writer.writerow([block.key.system, block.key.family,
                                     block.key.experiment, block.key.condition,
                                     labs[i], labs[j], c])
