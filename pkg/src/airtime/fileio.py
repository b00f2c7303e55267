"""File formats: telemetry CSV ingestion, dataset/checkpoint/report persistence.

Telemetry CSV (header required):
    network_id,timestamp,ap_id,tx_time,rx_time,interference
RSSI CSV (header required):
    network_id,timestamp,src_ap,dst_ap,rssi_dbm
Timestamps are ISO-8601 UTC. One telemetry row per (timestamp, AP); every AP
of a network must appear in every snapshot it has rows for. RSSI rows are
directed (src heard dst); absent pairs get the -100 dBm sentinel.

Rejected with a line-numbered message: malformed rows, out-of-range values,
unknown AP ids in RSSI rows, duplicate (timestamp, ap) or (timestamp, src,
dst) rows, and snapshots missing some of the network's APs.

Datasets and checkpoints are versioned JSON documents. Weights serialize as
decimal with shortest round-trip precision, so load(save(model)) reproduces
predictions bit-exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .models import GcnModel, LstmModel, MlpModel, Model
from .synth import augment_node_ids
from .telemetry import (CCA_THRESHOLD_DBM, Dataset, LabeledSample, RSSI_SENTINEL_DBM,
                        TelemetrySample, Topology, derive_adjacency, load_from_telemetry,
                        symmetrize_rssi)
from .training import MetricsReport

DATASET_FORMAT_VERSION = 1
CHECKPOINT_FORMAT_VERSION = 1

TELEMETRY_HEADER = ["network_id", "timestamp", "ap_id", "tx_time", "rx_time", "interference"]
RSSI_HEADER = ["network_id", "timestamp", "src_ap", "dst_ap", "rssi_dbm"]


class TelemetryFormatError(ValueError):
    """A telemetry/RSSI file violated the documented grammar."""

    def __init__(self, message: str, path=None, line: int | None = None):
        loc = f"{path}:{line}: " if path is not None and line is not None else ""
        super().__init__(f"{loc}{message}")
        self.path = path
        self.line = line


class CheckpointFormatError(ValueError):
    pass


def _parse_timestamp(raw: str, path, line: int) -> datetime:
    try:
        ts = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    except ValueError:
        raise TelemetryFormatError(f"bad timestamp {raw!r} (expected ISO-8601)", path, line) from None
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _parse_float(raw: str, name: str, lo: float, hi: float, path, line: int) -> float:
    try:
        v = float(raw)
    except ValueError:
        raise TelemetryFormatError(f"bad {name} {raw!r}", path, line) from None
    if not lo <= v <= hi:
        raise TelemetryFormatError(f"{name} {v} out of range [{lo}, {hi}]", path, line)
    return v


def parse_telemetry(paths: Sequence[str | Path]) -> list[TelemetrySample]:
    """Read telemetry and RSSI CSVs into validated samples.

    Files are classified by header. Samples come back sorted by
    (network_id, timestamp); each holds the full per-AP vectors and the
    directed RSSI matrix with sentinel fill.
    """
    telemetry_rows: dict[tuple[str, datetime], dict[str, tuple[float, float, float]]] = {}
    rssi_rows: dict[tuple[str, datetime], dict[tuple[str, str], float]] = {}
    ap_sets: dict[str, set[str]] = {}

    for path in paths:
        path = Path(path)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise TelemetryFormatError("empty file", path, 1) from None
            header = [h.strip() for h in header]
            if header == TELEMETRY_HEADER:
                _read_telemetry_file(reader, path, telemetry_rows, ap_sets)
            elif header == RSSI_HEADER:
                _read_rssi_file(reader, path, rssi_rows)
            else:
                raise TelemetryFormatError(f"unrecognized header {header!r}", path, 1)

    for (network, ts), pairs in rssi_rows.items():
        known = ap_sets.get(network, set())
        for src, dst in pairs:
            if src not in known:
                raise TelemetryFormatError(f"unknown AP id {src!r} in RSSI rows for network {network!r}")
            if dst not in known:
                raise TelemetryFormatError(f"unknown AP id {dst!r} in RSSI rows for network {network!r}")

    samples = []
    for (network, ts) in sorted(telemetry_rows, key=lambda k: (k[0], k[1])):
        rows = telemetry_rows[(network, ts)]
        ap_ids = sorted(ap_sets[network])
        missing = set(ap_ids) - set(rows)
        if missing:
            raise TelemetryFormatError(
                f"snapshot {network!r}@{ts.isoformat()} missing rows for APs {sorted(missing)!r}")
        index = {ap: i for i, ap in enumerate(ap_ids)}
        n = len(ap_ids)
        tx = np.zeros(n)
        rx = np.zeros(n)
        inter = np.zeros(n)
        for ap, (t, r, i) in rows.items():
            tx[index[ap]] = t
            rx[index[ap]] = r
            inter[index[ap]] = i
        rssi = np.full((n, n), RSSI_SENTINEL_DBM)
        for (src, dst), v in rssi_rows.get((network, ts), {}).items():
            rssi[index[src], index[dst]] = v
        samples.append(TelemetrySample(network_id=network, timestamp=ts, tx_time=tx,
                                       rx_time=rx, interference=inter, rssi=rssi,
                                       ap_ids=tuple(ap_ids)))
    return samples


def _read_telemetry_file(reader, path, telemetry_rows, ap_sets) -> None:
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 6:
            raise TelemetryFormatError(f"expected 6 fields, got {len(row)}", path, line_no)
        network, raw_ts, ap, raw_tx, raw_rx, raw_int = (f.strip() for f in row)
        ts = _parse_timestamp(raw_ts, path, line_no)
        tx = _parse_float(raw_tx, "tx_time", 0.0, 1.0, path, line_no)
        rx = _parse_float(raw_rx, "rx_time", 0.0, 1.0, path, line_no)
        inter = _parse_float(raw_int, "interference", 0.0, 1.0, path, line_no)
        key = (network, ts)
        group = telemetry_rows.setdefault(key, {})
        if ap in group:
            raise TelemetryFormatError(f"duplicate row for AP {ap!r} at {raw_ts}", path, line_no)
        group[ap] = (tx, rx, inter)
        ap_sets.setdefault(network, set()).add(ap)


def _read_rssi_file(reader, path, rssi_rows) -> None:
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 5:
            raise TelemetryFormatError(f"expected 5 fields, got {len(row)}", path, line_no)
        network, raw_ts, src, dst, raw_v = (f.strip() for f in row)
        ts = _parse_timestamp(raw_ts, path, line_no)
        v = _parse_float(raw_v, "rssi_dbm", -100.0, 0.0, path, line_no)
        key = (network, ts)
        group = rssi_rows.setdefault(key, {})
        if (src, dst) in group:
            raise TelemetryFormatError(f"duplicate RSSI row {src!r}->{dst!r} at {raw_ts}", path, line_no)
        group[(src, dst)] = v


def dataset_from_telemetry(samples: Sequence[TelemetrySample],
                           threshold: float = CCA_THRESHOLD_DBM,
                           node_ids: bool = False,
                           role: str = "train") -> Dataset:
    """Labeled samples from telemetry: loads as features, measured interference as labels."""
    out = []
    for s in samples:
        sym = symmetrize_rssi(s.rssi)
        topo = derive_adjacency(sym, threshold)
        features = load_from_telemetry(s).reshape(-1, 1)
        if node_ids:
            features = augment_node_ids(features, s.ap_count)
        out.append(LabeledSample(features=features, topology=topo,
                                 labels=s.interference.copy(), rssi=sym))
    return Dataset(samples=tuple(out), role=role)


# ---------------------------------------------------------------------------
# dataset / checkpoint JSON


def _array(a: np.ndarray) -> list:
    return np.asarray(a, dtype=np.float64).tolist()


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    doc = {
        "format_version": DATASET_FORMAT_VERSION,
        "role": dataset.role,
        "samples": [
            {
                "features": _array(s.features),
                "adjacency": np.asarray(s.topology.adjacency, dtype=int).tolist(),
                "labels": _array(s.labels),
                "rssi": None if s.rssi is None else _array(s.rssi),
                "mask": None if s.mask is None else _array(s.mask),
            }
            for s in dataset
        ],
    }
    Path(path).write_text(json.dumps(doc))


def load_dataset(path: str | Path) -> Dataset:
    doc = json.loads(Path(path).read_text())
    version = doc.get("format_version")
    if version != DATASET_FORMAT_VERSION:
        raise CheckpointFormatError(
            f"dataset format version {version} unsupported (reader expects {DATASET_FORMAT_VERSION})")
    samples = []
    for raw in doc["samples"]:
        samples.append(LabeledSample(
            features=np.array(raw["features"], dtype=np.float64),
            topology=Topology(adjacency=np.array(raw["adjacency"], dtype=bool)),
            labels=np.array(raw["labels"], dtype=np.float64),
            rssi=None if raw["rssi"] is None else np.array(raw["rssi"], dtype=np.float64),
            mask=None if raw["mask"] is None else np.array(raw["mask"], dtype=np.float64),
        ))
    return Dataset(samples=tuple(samples), role=doc.get("role", "train"))


def config_digest(config) -> str:
    payload = json.dumps(asdict(config), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def save_checkpoint(model: Model, path: str | Path, seed: int | None = None,
                    config_hash: str | None = None, source: str | None = None) -> None:
    state = model.state()
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": model.kind,
        "arch": state["arch"],
        "weights": {k: _array(v) for k, v in sorted(state["weights"].items())},
        "metadata": {"seed": seed, "config_digest": config_hash, "source": source},
    }
    Path(path).write_text(json.dumps(doc))


_MODEL_CLASSES = {"gcn": GcnModel, "mlp": MlpModel, "lstm": LstmModel}


def load_checkpoint(path: str | Path) -> Model:
    doc = json.loads(Path(path).read_text())
    version = doc.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointFormatError(
            f"checkpoint format version {version} unsupported (reader expects {CHECKPOINT_FORMAT_VERSION})")
    kind = doc.get("kind")
    if kind not in _MODEL_CLASSES:
        raise CheckpointFormatError(f"unknown model kind {kind!r}")
    weights = {k: np.array(v, dtype=np.float64) for k, v in doc["weights"].items()}
    return _MODEL_CLASSES[kind].from_state(doc["arch"], weights)


# ---------------------------------------------------------------------------
# reports and tables


def save_report(report: MetricsReport, path: str | Path, extra: dict | None = None) -> None:
    doc = dict(report.as_dict())
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def save_errors_csv(errors: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["abs_error"])
        for e in np.asarray(errors, dtype=np.float64):
            writer.writerow([repr(float(e))])


def load_errors_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["abs_error"]:
            raise ValueError(f"unexpected errors CSV header {header!r}")
        return np.array([float(row[0]) for row in reader if row])


def save_table_csv(rows: Iterable[dict], path: str | Path, columns: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row[c]) for c in columns])


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return v


def save_history_csv(train_losses: Sequence[float], val_losses: Sequence[float],
                     path: str | Path) -> None:
    rows = [{"epoch": i, "train_mse": t, "val_mse": v}
            for i, (t, v) in enumerate(zip(train_losses, val_losses))]
    save_table_csv(rows, path, ["epoch", "train_mse", "val_mse"])


# ---------------------------------------------------------------------------
# what-if scenarios


def load_scenario(path: str | Path) -> dict:
    """A what-if scenario: AP loads plus RSSI (dBm) or an adjacency matrix."""
    doc = json.loads(Path(path).read_text())
    if "loads" not in doc:
        raise ValueError("scenario needs a 'loads' list")
    loads = np.array(doc["loads"], dtype=np.float64)
    if loads.ndim != 1 or np.any(loads < 0) or np.any(loads > 1):
        raise ValueError("scenario loads must be a 1-D list of fractions in [0, 1]")
    n = loads.size
    out = {"loads": loads, "ap_ids": doc.get("ap_ids") or [f"ap{i}" for i in range(n)]}
    if len(out["ap_ids"]) != n:
        raise ValueError("scenario ap_ids length must match loads")
    if "rssi" in doc:
        rssi = np.array(doc["rssi"], dtype=np.float64)
        if rssi.shape != (n, n):
            raise ValueError(f"scenario rssi must be {n}x{n}")
        out["rssi"] = symmetrize_rssi(rssi)
    elif "adjacency" in doc:
        adj = np.array(doc["adjacency"])
        if adj.shape != (n, n):
            raise ValueError(f"scenario adjacency must be {n}x{n}")
        out["adjacency"] = adj.astype(bool)
    else:
        raise ValueError("scenario needs 'rssi' or 'adjacency'")
    out["threshold_dbm"] = float(doc.get("threshold_dbm", CCA_THRESHOLD_DBM))
    return out
