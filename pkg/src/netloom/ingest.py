"""Snapshot ingestion: load, map, normalize, and atomically commit.

Snapshot files are UTF-8 JSON Lines with one record per line, each
carrying a "kind" field. A per-source mapping config renames source
fields onto the model's field names; whatever the mapping does not
claim is kept on the record and later preserved as properties.
Committing a snapshot replaces everything previously loaded from the
same source and publishes a new immutable store version.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .conformance import CompiledChecker, ConformanceReport, check_batch, resolve_ref
from .model import (
    ComplexProperty,
    CorrelationHint,
    DEFAULT_SPACE,
    HostEntity,
    IncomingConfiguration,
    InterfaceRef,
    Origin,
    OutgoingConfiguration,
    RawStore,
    RunsOn,
    SystemEntity,
)


class IngestError(Exception):
    pass


@dataclass(frozen=True)
class SourceConfig:
    source_id: str
    source_type: str = ""
    mapping: dict[str, str] = field(default_factory=dict)
    schedule_hint: int = 0  # informational only


def load_source_config(path: str | Path) -> SourceConfig:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            doc = json.load(handle)
    except OSError as exc:
        raise IngestError(f"cannot read source config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IngestError(f"source config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc.get("source_id"), str) or not doc["source_id"]:
        raise IngestError(f"source config {path} must declare a source_id")
    return SourceConfig(
        source_id=doc["source_id"],
        source_type=doc.get("source_type", ""),
        mapping=dict(doc.get("mapping", {})),
        schedule_hint=int(doc.get("schedule_hint", 0)),
    )


@dataclass(frozen=True)
class RawRecord:
    kind: str | None
    fields: dict[str, Any]
    origin: Origin
    line: int = 0


@dataclass(frozen=True)
class Snapshot:
    source_id: str
    records: tuple[RawRecord, ...]
    captured_at: int = 0


_URL_RE = re.compile(r"^([A-Za-z][A-Za-z0-9+.-]*)://([^/]*)(/.*)?$")
_DEFAULT_PORTS = {"http": "80", "https": "443"}


def normalize_address(addr: str) -> str:
    """Canonicalize an endpoint address for equality matching.

    URLs get a lowercase scheme and host, default ports stripped, and
    no trailing slash; the path keeps its case. Anything that is not a
    URL is trimmed and lowercased.
    """
    addr = addr.strip()
    m = _URL_RE.match(addr)
    if m is None:
        return addr.lower()
    scheme = m.group(1).lower()
    netloc = m.group(2).lower()
    path = m.group(3) or ""
    host, sep, port = netloc.rpartition(":")
    if sep and port.isdigit():
        if _DEFAULT_PORTS.get(scheme) == port:
            netloc = host
    path = path.rstrip("/")
    return f"{scheme}://{netloc}{path}"


def _dig(record: Mapping[str, Any], path: str) -> tuple[bool, Any]:
    node: Any = record
    for part in path.split("."):
        if isinstance(node, Mapping) and part in node:
            node = node[part]
        else:
            return False, None
    return True, node


def _delete_path(fields: dict, path: str) -> None:
    parts = path.split(".")
    node = fields
    for part in parts[:-1]:
        nxt = node.get(part)
        if not isinstance(nxt, dict):
            return
        node = nxt
    node.pop(parts[-1], None)


def load_snapshot(
    path: str | Path, config: SourceConfig, captured_at: int = 0
) -> Snapshot:
    """Load a JSON Lines snapshot file and map it into raw records.

    Each line must be a JSON object. The mapping is applied first; the
    record must then carry an object id (the mapping target "object_id",
    falling back to the field "id"). Malformed lines and missing ids
    are reported with their line number.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read snapshot {path}: {exc}") from exc

    records: list[RawRecord] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IngestError(f"{path}: line {lineno}: malformed JSON ({exc.msg})") from exc
        if not isinstance(doc, dict):
            raise IngestError(f"{path}: line {lineno}: record must be a JSON object")

        fields = json.loads(json.dumps(doc))  # deep copy, JSON types only
        for source_path, target in config.mapping.items():
            found, value = _dig(doc, source_path)
            if found:
                _delete_path(fields, source_path)
                fields[target] = value

        object_id = fields.pop("object_id", None)
        if object_id is None:
            object_id = fields.get("id")
        if object_id is None or str(object_id) == "":
            raise IngestError(
                f"{path}: line {lineno}: record has no object id "
                "(map a field to \"object_id\" or provide \"id\")"
            )
        object_id = str(object_id)
        fields["id"] = object_id

        record_captured = captured_at
        raw_captured = fields.pop("captured_at", None)
        if isinstance(raw_captured, int) and raw_captured >= 0:
            record_captured = raw_captured

        kind = fields.pop("kind", None)
        records.append(
            RawRecord(
                kind=kind if isinstance(kind, str) else None,
                fields=fields,
                origin=Origin(config.source_id, object_id, config.source_type, record_captured),
                line=lineno,
            )
        )
    return Snapshot(config.source_id, tuple(records), captured_at)


# ---------------------------------------------------------------------------
# Entity construction

_IDENTITY_FIELDS = {
    "system": ("id", "name", "type", "space"),
    "host": ("id", "hostname"),
    "runs_on": ("id", "system_id", "host_id"),
    "out_conf": (
        "id",
        "owner_system_id",
        "interface_name",
        "interface_namespace",
        "operation",
        "receiver_address",
        "adapter",
    ),
    "in_conf": (
        "id",
        "owner_system_id",
        "interface_name",
        "interface_namespace",
        "operation",
        "endpoint_address",
        "adapter",
    ),
    "correlation": ("id", "left_space", "left_id", "right_space", "right_id", "link_kind"),
}


def _scalar(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return value if isinstance(value, str) else str(value)


def _split_props(rec: RawRecord, consumed: tuple[str, ...]):
    simple: dict[str, str] = {}
    complexes: list[ComplexProperty] = []
    for key in sorted(rec.fields):
        if key in consumed:
            continue
        value = rec.fields[key]
        if value is None:
            continue
        if isinstance(value, (Mapping, list)):
            complexes.append(ComplexProperty.create(key, value, rec.origin))
        else:
            simple[key] = _scalar(value)
    return simple, complexes


def build_entities(snapshot: Snapshot):
    """Turn a conformance-checked snapshot into typed entities."""
    sid = snapshot.source_id
    systems, hosts, runs, outs, ins, corrs = [], [], [], [], [], []
    for rec in snapshot.records:
        engine_id = f"{sid}/{rec.origin.object_id}"
        f = rec.fields
        if rec.kind == "system":
            simple, complexes = _split_props(rec, _IDENTITY_FIELDS["system"])
            systems.append(
                SystemEntity.create(
                    engine_id,
                    f["name"],
                    f.get("type", ""),
                    rec.origin,
                    simple_props=simple,
                    complex_props=complexes,
                    space=f.get("space") or DEFAULT_SPACE,
                )
            )
        elif rec.kind == "host":
            simple, complexes = _split_props(rec, _IDENTITY_FIELDS["host"])
            # Hosts have no complex-property bag; keep nested extras as
            # canonical JSON strings so nothing is dropped.
            for cp in complexes:
                simple[cp.kind] = json.dumps(
                    cp.payload, sort_keys=True, separators=(",", ":")
                )
            hosts.append(
                HostEntity.create(engine_id, f["hostname"], rec.origin, simple)
            )
        elif rec.kind == "runs_on":
            runs.append(
                RunsOn(
                    resolve_ref(f["system_id"], sid),
                    resolve_ref(f["host_id"], sid),
                    rec.origin,
                )
            )
        elif rec.kind == "out_conf":
            outs.append(
                OutgoingConfiguration(
                    engine_id,
                    resolve_ref(f["owner_system_id"], sid),
                    InterfaceRef(
                        f["interface_name"],
                        f.get("interface_namespace", "") or "",
                        f.get("operation", "") or "",
                    ),
                    normalize_address(f["receiver_address"]),
                    f.get("adapter", "") or "",
                    rec.origin,
                )
            )
        elif rec.kind == "in_conf":
            ins.append(
                IncomingConfiguration(
                    engine_id,
                    resolve_ref(f["owner_system_id"], sid),
                    InterfaceRef(
                        f["interface_name"],
                        f.get("interface_namespace", "") or "",
                        f.get("operation", "") or "",
                    ),
                    normalize_address(f["endpoint_address"]),
                    f.get("adapter", "") or "",
                    rec.origin,
                )
            )
        elif rec.kind == "correlation":
            corrs.append(
                CorrelationHint(
                    f["left_space"],
                    resolve_ref(f["left_id"], sid),
                    f["right_space"],
                    resolve_ref(f["right_id"], sid),
                    f["link_kind"],
                    rec.origin,
                )
            )
    return systems, hosts, runs, outs, ins, corrs


def commit(
    snapshot: Snapshot, store: RawStore, checker: CompiledChecker
) -> RawStore | ConformanceReport:
    """Validate and commit a snapshot, replacing the source's prior data.

    Conformance runs against the store as it will look after the
    source's old entities are dropped, so an accepted batch can never
    leave dangling references behind. On findings the store is untouched
    and the report is returned instead.
    """
    base = store.without_source(snapshot.source_id)
    report = check_batch(checker, snapshot.records, base)
    if not report.ok:
        return report
    systems, hosts, runs, outs, ins, corrs = build_entities(snapshot)
    return base.with_entities(
        store.version + 1, systems, hosts, runs, outs, ins, corrs
    )
