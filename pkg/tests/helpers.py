"""Shared helpers for building stores and workspaces in tests."""

from __future__ import annotations

from netloom.conformance import compile_schema, default_schema_doc, parse_schema
from netloom.ingest import RawRecord, Snapshot, commit
from netloom.model import Origin, RawStore

CHECKER = compile_schema(parse_schema(default_schema_doc()))


def snapshot_of(records: list[dict], src: str) -> Snapshot:
    out = []
    for i, r in enumerate(records):
        r = dict(r)
        kind = r.pop("kind", None)
        obj = str(r.get("id", f"anon{i}"))
        r["id"] = obj
        out.append(RawRecord(kind, r, Origin(src, obj, "test", 0), i + 1))
    return Snapshot(src, tuple(out), 0)


def commit_records(store: RawStore, records: list[dict], src: str) -> RawStore:
    result = commit(snapshot_of(records, src), store, CHECKER)
    if not isinstance(result, RawStore):
        raise AssertionError(
            f"snapshot for {src} rejected: {[f.message for f in result.findings]}"
        )
    return result


def store_from_sources(
    source_records: dict[str, list[dict]], order: list[str] | None = None
) -> RawStore:
    store = RawStore.empty()
    for src in order or sorted(source_records):
        store = commit_records(store, source_records[src], src)
    return store
