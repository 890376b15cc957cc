"""Event files, dataset registry, ingestion and the synthetic generator.

Event files are line-delimited JSON: one event per line, each line mapping
collection names to lists of records.  Momenta are stored in MeV, the unit
the cuts in bundled examples use (a 50 GeV cut reads ``pt > 50000``);
results are conventionally divided by 1000 for plotting in GeV.

The generator builds a desk-scale electron sample with known truth-matching
structure: every reconstructed electron either receives a truth partner
within dR < 0.05 or none at all, electrons are spaced at least dR 0.3 apart
and fake truth particles at least 0.2 away from every electron, so the set
of pairs a dR < 0.1 matching must find is decided at generation time and
written to a sidecar label file.
"""
from __future__ import annotations

import configparser
import json
import math
from pathlib import Path

import numpy as np

from .errors import IngestError, UnknownDatasetError
from .jagged import ElementKind, JaggedArray
from .records import RecordArray
from .schema import DatasetSchema, parse_schema_text, render_schema

DEFAULT_SCHEMA = DatasetSchema({
    "Electrons": {"pt": ElementKind.FLOAT, "eta": ElementKind.FLOAT,
                  "phi": ElementKind.FLOAT},
    "Jets": {"pt": ElementKind.FLOAT, "eta": ElementKind.FLOAT,
             "phi": ElementKind.FLOAT, "isGood": ElementKind.BOOL},
    "TruthParticles": {"pdgId": ElementKind.INT, "pt": ElementKind.FLOAT,
                       "eta": ElementKind.FLOAT, "phi": ElementKind.FLOAT},
})


class EventStore:
    """Ingested dataset: one RecordArray per collection, shared event count."""

    def __init__(self, collections: dict[str, RecordArray], n_events: int):
        self.collections = collections
        self.n_events = n_events

    def collection(self, name: str) -> RecordArray:
        if name not in self.collections:
            raise IngestError(f"dataset has no collection {name!r}")
        return self.collections[name]


def read_events(path) -> list[dict]:
    """Parse an event file into per-event dicts (also the oracle's input)."""
    events = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                event = json.loads(line)
            except json.JSONDecodeError as err:
                raise IngestError(f"bad event JSON: {err.msg}", line=lineno) from None
            if not isinstance(event, dict):
                raise IngestError("event line is not an object", line=lineno)
            events.append(event)
    return events


def write_events(path, events: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for event in events:
            handle.write(json.dumps(event, sort_keys=True) + "\n")


def ingest(path, schema: DatasetSchema) -> EventStore:
    """Build per-collection jagged columns from an event file.

    Every record must carry exactly the schema's leaves; numeric leaves
    must be finite.  Errors name the offending line and field.
    """
    events = read_events(path)
    return store_from_events(events, schema)


def store_from_events(events: list[dict], schema: DatasetSchema) -> EventStore:
    collections = {}
    for name, leaves in schema.collections.items():
        records: list[list[dict]] = []
        for lineno, event in enumerate(events, start=1):
            recs = event.get(name, [])
            if not isinstance(recs, list):
                raise IngestError(f"collection {name!r} is not a list", line=lineno)
            for rec in recs:
                _validate_record(rec, name, leaves, lineno)
            records.append(recs)
        for lineno, event in enumerate(events, start=1):
            for key in event:
                if key not in schema.collections:
                    raise IngestError(f"unknown collection {key!r}", line=lineno)
        collections[name] = RecordArray.from_records(records, leaves, name)
    return EventStore(collections, len(events))


def _validate_record(rec, collection: str, leaves: dict[str, ElementKind],
                     lineno: int) -> None:
    if not isinstance(rec, dict):
        raise IngestError(f"record in {collection!r} is not an object", line=lineno)
    for leaf, kind in leaves.items():
        if leaf not in rec:
            raise IngestError(f"record in {collection!r} is missing a leaf",
                              line=lineno, field=leaf)
        value = rec[leaf]
        if kind is ElementKind.BOOL:
            if not isinstance(value, bool):
                raise IngestError(f"{collection} leaf must be boolean",
                                  line=lineno, field=leaf)
        elif kind is ElementKind.INT:
            if isinstance(value, bool) or not isinstance(value, int):
                raise IngestError(f"{collection} leaf must be an integer",
                                  line=lineno, field=leaf)
        else:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise IngestError(f"{collection} leaf must be numeric",
                                  line=lineno, field=leaf)
            if not math.isfinite(value):
                raise IngestError(f"{collection} leaf must be finite",
                                  line=lineno, field=leaf)
    for key in rec:
        if key not in leaves:
            raise IngestError(f"record in {collection!r} has an undeclared leaf",
                              line=lineno, field=key)


class DatasetRegistry:
    """Maps dataset ids to (event file, schema file) pairs.

    The registry file is ini-style structured text, one section per id::

        [localds://zee-small]
        events = data/zee.events
        schema = data/zee.schema

    Relative paths resolve against the registry file's directory.
    """

    def __init__(self):
        self._entries: dict[str, tuple[Path, Path]] = {}
        self._schemas: dict[str, DatasetSchema] = {}
        self._stores: dict[str, EventStore] = {}

    @classmethod
    def load(cls, path) -> "DatasetRegistry":
        path = Path(path)
        parser = configparser.RawConfigParser()
        parser.optionxform = str
        try:
            with open(path, "r", encoding="utf-8") as handle:
                parser.read_file(handle)
        except configparser.Error as err:
            raise IngestError(f"bad registry file: {err}") from None
        registry = cls()
        for section in parser.sections():
            try:
                events = parser.get(section, "events")
                schema = parser.get(section, "schema")
            except configparser.NoOptionError as err:
                raise IngestError(f"registry entry {section!r}: {err}") from None
            registry.register(section,
                              (path.parent / events).resolve(),
                              (path.parent / schema).resolve())
        return registry

    def register(self, dataset_id: str, events_path, schema_path) -> None:
        events_path, schema_path = Path(events_path), Path(schema_path)
        if dataset_id in self._entries:
            raise IngestError(f"dataset {dataset_id!r} registered twice")
        for p in (events_path, schema_path):
            if not p.exists():
                raise IngestError(f"dataset {dataset_id!r}: no such file {p}")
        self._entries[dataset_id] = (events_path, schema_path)

    def dataset_ids(self) -> list[str]:
        return list(self._entries)

    def paths(self, dataset_id: str) -> tuple[Path, Path]:
        if dataset_id not in self._entries:
            raise UnknownDatasetError(f"dataset {dataset_id!r} is not registered")
        return self._entries[dataset_id]

    def schema(self, dataset_id: str) -> DatasetSchema:
        if dataset_id not in self._schemas:
            _, schema_path = self.paths(dataset_id)
            self._schemas[dataset_id] = parse_schema_text(
                schema_path.read_text(encoding="utf-8"))
        return self._schemas[dataset_id]

    def store(self, dataset_id: str) -> EventStore:
        if dataset_id not in self._stores:
            events_path, _ = self.paths(dataset_id)
            self._stores[dataset_id] = ingest(events_path, self.schema(dataset_id))
        return self._stores[dataset_id]

    def events(self, dataset_id: str) -> list[dict]:
        events_path, _ = self.paths(dataset_id)
        return read_events(events_path)


# ---------------------------------------------------------------------------
# synthetic sample generation


def _dr(eta1, phi1, eta2, phi2) -> float:
    dphi = math.pi - math.fmod(math.pi - (phi1 - phi2), 2.0 * math.pi)
    if dphi > math.pi:
        dphi -= 2.0 * math.pi
    return math.sqrt((eta1 - eta2) ** 2 + dphi ** 2)


def generate_sample(seed: int, n_events: int, events_path=None, labels_path=None,
                    schema_path=None) -> tuple[list[dict], list[dict]]:
    """Deterministic synthetic events plus ground-truth match labels.

    Electron pt is log-uniform over 5-120 GeV (stored in MeV), eta uniform
    in (-2.5, 2.5), phi uniform in (-pi, pi].  About 80% of electrons get a
    smeared truth partner (pdgId +-11) within dR < 0.05; all other truth
    particles sit at least dR 0.2 from every electron.  The label file
    records, per event, the pairs that survive the reference selection
    (both legs pt/1000 > 20 and |eta| < 1.4) with their MeV momenta.
    """
    if n_events < 0:
        raise ValueError("n_events must be nonnegative")
    rng = np.random.default_rng(seed)
    events: list[dict] = []
    labels: list[dict] = []
    for _ in range(n_events):
        electrons = _place_electrons(rng)
        truth: list[dict] = []
        pairs = []
        for idx, ele in enumerate(electrons):
            if rng.random() < 0.8:
                partner = _smeared_partner(rng, ele)
                truth.append(partner)
                pairs.append((idx, len(truth) - 1, ele, partner))
        for _ in range(int(rng.integers(0, 3))):
            truth.append(_fake_truth(rng, electrons))
        order = rng.permutation(len(truth)).tolist()
        truth = [truth[i] for i in order]
        position = {old: new for new, old in enumerate(order)}
        jets = [_jet(rng) for _ in range(int(rng.integers(0, 5)))]
        events.append({"Electrons": electrons, "Jets": jets, "TruthParticles": truth})
        kept = []
        for ele_idx, truth_idx, ele, partner in pairs:
            if _passes(ele) and _passes(partner):
                kept.append({"ele": ele_idx, "mc": position[truth_idx],
                             "ele_pt": ele["pt"], "mc_pt": partner["pt"]})
        labels.append({"pairs": kept})
    if events_path is not None:
        write_events(events_path, events)
    if labels_path is not None:
        with open(labels_path, "w", encoding="utf-8") as handle:
            for label in labels:
                handle.write(json.dumps(label, sort_keys=True) + "\n")
    if schema_path is not None:
        Path(schema_path).write_text(render_schema(DEFAULT_SCHEMA), encoding="utf-8")
    return events, labels


def read_labels(path) -> list[dict]:
    with open(path, "r", encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]


def _passes(particle: dict) -> bool:
    return particle["pt"] / 1000.0 > 20.0 and abs(particle["eta"]) < 1.4


def _pt_mev(rng, lo_gev: float, hi_gev: float) -> float:
    return float(np.exp(rng.uniform(np.log(lo_gev * 1000.0), np.log(hi_gev * 1000.0))))


def _phi(rng) -> float:
    return float(math.pi - rng.uniform(0.0, 2.0 * math.pi))


def _place_electrons(rng) -> list[dict]:
    target = int(rng.integers(0, 5))
    out: list[dict] = []
    attempts = 0
    while len(out) < target and attempts < 200:
        attempts += 1
        eta = float(rng.uniform(-2.5, 2.5))
        phi = _phi(rng)
        if all(_dr(eta, phi, e["eta"], e["phi"]) >= 0.3 for e in out):
            out.append({"pt": _pt_mev(rng, 5.0, 120.0), "eta": eta, "phi": phi})
    return out


def _smeared_partner(rng, ele: dict) -> dict:
    while True:
        deta = float(rng.normal(0.0, 0.02))
        dphi = float(rng.normal(0.0, 0.02))
        if math.hypot(deta, dphi) < 0.05:
            break
    phi = ele["phi"] + dphi
    if phi > math.pi:
        phi -= 2.0 * math.pi
    elif phi <= -math.pi:
        phi += 2.0 * math.pi
    return {"pdgId": int(rng.choice((11, -11))),
            "pt": max(100.0, ele["pt"] * (1.0 + float(rng.normal(0.0, 0.05)))),
            "eta": ele["eta"] + deta, "phi": phi}


def _fake_truth(rng, electrons: list[dict]) -> dict:
    species = (11, -11, 22, 13, -13, 211, -211)
    for _ in range(200):
        eta = float(rng.uniform(-2.5, 2.5))
        phi = _phi(rng)
        if all(_dr(eta, phi, e["eta"], e["phi"]) >= 0.2 for e in electrons):
            return {"pdgId": int(rng.choice(species)),
                    "pt": _pt_mev(rng, 5.0, 80.0), "eta": eta, "phi": phi}
    return {"pdgId": 22, "pt": _pt_mev(rng, 5.0, 80.0), "eta": 4.5, "phi": 0.0}


def _jet(rng) -> dict:
    return {"pt": _pt_mev(rng, 20.0, 500.0), "eta": float(rng.uniform(-4.5, 4.5)),
            "phi": _phi(rng), "isGood": bool(rng.random() < 0.85)}


# ---------------------------------------------------------------------------
# histogramming


def histogram_counts(values, bins: int, lo: float, hi: float) -> np.ndarray:
    """Counts per bin over [lo, hi) with equal half-open bins.

    Values outside the range (including exactly ``hi``) are dropped, so the
    total equals the flattened result length whenever the range covers all
    values.
    """
    if bins <= 0:
        raise ValueError("bins must be positive")
    if not hi > lo:
        raise ValueError("range must be increasing")
    values = np.asarray(values, dtype=np.float64)
    width = (hi - lo) / bins
    idx = np.floor((values - lo) / width)
    keep = (idx >= 0) & (idx < bins)
    return np.bincount(idx[keep].astype(np.int64), minlength=bins).astype(np.int64)


def histogram_csv(values, bins: int, lo: float, hi: float) -> str:
    counts = histogram_counts(values, bins, lo, hi)
    width = (hi - lo) / bins
    lines = ["bin_lo,bin_hi,count"]
    for i, count in enumerate(counts):
        lines.append(f"{lo + i * width!r},{lo + (i + 1) * width!r},{int(count)}")
    return "\n".join(lines) + "\n"


def flatten_values(value) -> np.ndarray:
    """Flat numeric values of a jagged result (for histogramming)."""
    if isinstance(value, JaggedArray):
        return value.values
    raise IngestError("histogramming needs a numeric column result")
