"""The logical network model and its canonical serializations.

A Network is an immutable value: named spaces holding participants and
message flows, plus cross-space participant links and flow links. The
JSON rendering is canonical (sorted keys, entities sorted by id, no
timestamps), so two equal networks always serialize to the same bytes
and the version id can simply be a digest of the content. GraphML and
DOT exports cover the graph-shaped subset for standard tooling.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence
from xml.sax.saxutils import escape, quoteattr

from .reconstruct import Reconstruction, flow_id_for

BUILTIN_SPACES = ("business-process", "integration")


class EmitError(Exception):
    """An internal invariant of the network model was violated."""


@dataclass(frozen=True)
class ComplexPropertyView:
    kind: str
    digest: str
    payload: Any = field(hash=False, default=None)


@dataclass(frozen=True)
class Participant:
    id: str
    label: str
    space: str
    props: dict[str, str] = field(default_factory=dict)
    complex_props: tuple[ComplexPropertyView, ...] = ()
    origins: tuple[tuple[str, str], ...] = ()  # (source_id, object_id)


@dataclass(frozen=True)
class MessageFlow:
    id: str
    source: str
    target: str
    interface_label: str
    origins: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class ParticipantLink:
    id: str
    left: str
    right: str
    kind: str


@dataclass(frozen=True)
class MessageFlowLink:
    id: str
    left_flow: str
    right_flow: str
    kind: str


@dataclass(frozen=True)
class NetworkSpace:
    name: str
    participants: tuple[Participant, ...] = ()
    flows: tuple[MessageFlow, ...] = ()


@dataclass(frozen=True)
class Network:
    version: str
    spaces: tuple[NetworkSpace, ...] = ()
    participant_links: tuple[ParticipantLink, ...] = ()
    flow_links: tuple[MessageFlowLink, ...] = ()

    def space(self, name: str) -> NetworkSpace | None:
        for s in self.spaces:
            if s.name == name:
                return s
        return None

    def participants(self) -> dict[str, Participant]:
        return {p.id: p for s in self.spaces for p in s.participants}

    def flows(self) -> dict[str, MessageFlow]:
        return {f.id: f for s in self.spaces for f in s.flows}

    def space_of_participant(self) -> dict[str, str]:
        return {p.id: s.name for s in self.spaces for p in s.participants}

    def counts(self) -> dict[str, int]:
        return {
            "participants": sum(len(s.participants) for s in self.spaces),
            "flows": sum(len(s.flows) for s in self.spaces),
            "links": len(self.participant_links) + len(self.flow_links),
        }


def _link_id(prefix: str, *parts: str) -> str:
    blob = "\x1f".join(parts)
    return f"{prefix}:{hashlib.sha256(blob.encode('utf-8')).hexdigest()[:16]}"


def emit(recon: Reconstruction) -> Network:
    """Assemble the client-facing network from reconstruction output.

    One participant per merged system, placed in its space; flows and
    links are lifted with deterministic content-derived ids. Built-in
    spaces are always present. Any dangling or cross-space-inconsistent
    reference is an internal invariant breach and fails hard.
    """
    by_space: dict[str, list[Participant]] = {name: [] for name in BUILTIN_SPACES}
    participant_space: dict[str, str] = {}
    for m in recon.merged:
        props = {k: v for k, v in m.simple_props.items() if k != "space"}
        participant = Participant(
            id=m.canonical_id,
            label=m.name,
            space=m.space,
            props=props,
            complex_props=tuple(
                ComplexPropertyView(cp.kind, cp.digest, cp.payload)
                for cp in m.complex_props
            ),
            origins=tuple((o.source_id, o.object_id) for o in m.origins),
        )
        by_space.setdefault(m.space, []).append(participant)
        participant_space[m.canonical_id] = m.space

    flows_by_space: dict[str, list[MessageFlow]] = {name: [] for name in BUILTIN_SPACES}
    flow_space: dict[str, str] = {}
    for f in recon.flows:
        for endpoint in (f.source_class, f.target_class):
            if endpoint not in participant_space:
                raise EmitError(f"flow endpoint {endpoint!r} has no participant")
        src_space = participant_space[f.source_class]
        tgt_space = participant_space[f.target_class]
        if src_space != tgt_space:
            raise EmitError(
                f"flow {f.source_class!r} -> {f.target_class!r} crosses spaces "
                f"({src_space!r} vs {tgt_space!r})"
            )
        fid = flow_id_for(f.source_class, f.target_class, f.interface)
        flows_by_space.setdefault(src_space, []).append(
            MessageFlow(
                id=fid,
                source=f.source_class,
                target=f.target_class,
                interface_label=f.interface.label(),
                origins=tuple((o.source_id, o.object_id) for o in f.origins),
            )
        )
        flow_space[fid] = src_space

    links = []
    for l in recon.links:
        for endpoint in (l.left, l.right):
            if endpoint not in participant_space:
                raise EmitError(f"link endpoint {endpoint!r} has no participant")
        links.append(
            ParticipantLink(
                _link_id("pl", l.left, l.right, l.kind), l.left, l.right, l.kind
            )
        )

    flow_links = []
    for fl in recon.flow_links:
        for endpoint in (fl.left_flow, fl.right_flow):
            if endpoint not in flow_space:
                raise EmitError(f"flow link endpoint {endpoint!r} has no flow")
        if flow_space[fl.left_flow] == flow_space[fl.right_flow]:
            raise EmitError(
                f"flow link ({fl.left_flow!r}, {fl.right_flow!r}) must bridge "
                "different spaces"
            )
        flow_links.append(
            MessageFlowLink(
                _link_id("fl", fl.left_flow, fl.right_flow, fl.kind),
                fl.left_flow,
                fl.right_flow,
                fl.kind,
            )
        )

    spaces = tuple(
        NetworkSpace(
            name=name,
            participants=tuple(sorted(by_space.get(name, []), key=lambda p: p.id)),
            flows=tuple(sorted(flows_by_space.get(name, []), key=lambda f: f.id)),
        )
        for name in sorted(set(by_space) | set(flows_by_space))
    )
    body = Network(
        version="",
        spaces=spaces,
        participant_links=tuple(sorted(links, key=lambda l: l.id)),
        flow_links=tuple(sorted(flow_links, key=lambda l: l.id)),
    )
    return _with_content_version(body)


def _with_content_version(network: Network) -> Network:
    doc = _network_doc(network)
    doc.pop("version", None)
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    version = hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]
    return Network(version, network.spaces, network.participant_links, network.flow_links)


# ---------------------------------------------------------------------------
# Canonical JSON


def _network_doc(network: Network) -> dict:
    return {
        "version": network.version,
        "spaces": [
            {
                "name": s.name,
                "participants": [
                    {
                        "id": p.id,
                        "label": p.label,
                        "space": p.space,
                        "props": dict(sorted(p.props.items())),
                        "complex_props": [
                            {"kind": c.kind, "digest": c.digest, "payload": c.payload}
                            for c in sorted(
                                p.complex_props, key=lambda c: (c.kind, c.digest)
                            )
                        ],
                        "origins": [list(o) for o in sorted(p.origins)],
                    }
                    for p in s.participants
                ],
                "flows": [
                    {
                        "id": f.id,
                        "source": f.source,
                        "target": f.target,
                        "interface": f.interface_label,
                        "origins": [list(o) for o in sorted(f.origins)],
                    }
                    for f in s.flows
                ],
            }
            for s in network.spaces
        ],
        "participant_links": [
            {"id": l.id, "left": l.left, "right": l.right, "kind": l.kind}
            for l in network.participant_links
        ],
        "flow_links": [
            {"id": l.id, "left_flow": l.left_flow, "right_flow": l.right_flow, "kind": l.kind}
            for l in network.flow_links
        ],
    }


def export_json(network: Network) -> bytes:
    """Canonical JSON bytes: equal networks export byte-identically."""
    return (
        json.dumps(_network_doc(network), sort_keys=True, separators=(",", ":")) + "\n"
    ).encode("utf-8")


def parse_network(data: bytes) -> Network:
    doc = json.loads(data.decode("utf-8"))
    spaces = tuple(
        NetworkSpace(
            name=s["name"],
            participants=tuple(
                Participant(
                    id=p["id"],
                    label=p["label"],
                    space=p["space"],
                    props=p["props"],
                    complex_props=tuple(
                        ComplexPropertyView(c["kind"], c["digest"], c["payload"])
                        for c in p["complex_props"]
                    ),
                    origins=tuple((o[0], o[1]) for o in p["origins"]),
                )
                for p in s["participants"]
            ),
            flows=tuple(
                MessageFlow(
                    id=f["id"],
                    source=f["source"],
                    target=f["target"],
                    interface_label=f["interface"],
                    origins=tuple((o[0], o[1]) for o in f["origins"]),
                )
                for f in s["flows"]
            ),
        )
        for s in doc["spaces"]
    )
    return Network(
        version=doc["version"],
        spaces=spaces,
        participant_links=tuple(
            ParticipantLink(l["id"], l["left"], l["right"], l["kind"])
            for l in doc["participant_links"]
        ),
        flow_links=tuple(
            MessageFlowLink(l["id"], l["left_flow"], l["right_flow"], l["kind"])
            for l in doc["flow_links"]
        ),
    )


def build_fragment(
    participants: Iterable[Participant],
    flows: Iterable[MessageFlow],
    participant_links: Iterable[ParticipantLink],
    flow_links: Iterable[MessageFlowLink] = (),
) -> Network:
    """Assemble a valid Network from already-validated pieces (used for
    traversal results); built-in spaces are always present."""
    by_space: dict[str, list[Participant]] = {name: [] for name in BUILTIN_SPACES}
    for p in participants:
        by_space.setdefault(p.space, []).append(p)
    flow_by_space: dict[str, list[MessageFlow]] = {}
    participant_space = {p.id: p.space for ps in by_space.values() for p in ps}
    for f in flows:
        flow_by_space.setdefault(participant_space[f.source], []).append(f)
    spaces = tuple(
        NetworkSpace(
            name,
            tuple(sorted(by_space.get(name, []), key=lambda p: p.id)),
            tuple(sorted(flow_by_space.get(name, []), key=lambda f: f.id)),
        )
        for name in sorted(set(by_space) | set(flow_by_space))
    )
    body = Network(
        "",
        spaces,
        tuple(sorted(participant_links, key=lambda l: l.id)),
        tuple(sorted(flow_links, key=lambda l: l.id)),
    )
    return _with_content_version(body)


# ---------------------------------------------------------------------------
# Graph exports


GRAPH_FORMATS = ("graphml", "dot")


def export_graph(
    network: Network, format: str, spaces: Sequence[str] | None = None
) -> bytes:
    """Render participants and flows (plus bridging participant links)
    of the selected spaces in GraphML or DOT."""
    if format not in GRAPH_FORMATS:
        raise ValueError(f"unknown graph format {format!r}")
    selected = set(spaces) if spaces else {s.name for s in network.spaces}
    participants = [
        p for s in network.spaces if s.name in selected for p in s.participants
    ]
    flows = [f for s in network.spaces if s.name in selected for f in s.flows]
    ids = {p.id for p in participants}
    links = [
        l
        for l in network.participant_links
        if l.left in ids and l.right in ids
    ]
    if format == "dot":
        return _render_dot(participants, flows, links)
    return _render_graphml(participants, flows, links)


def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _render_dot(participants, flows, links) -> bytes:
    lines = ["digraph network {"]
    for p in sorted(participants, key=lambda p: p.id):
        lines.append(f"  {_dot_quote(p.id)} [label={_dot_quote(p.label)}];")
    for f in sorted(flows, key=lambda f: f.id):
        lines.append(
            f"  {_dot_quote(f.source)} -> {_dot_quote(f.target)} "
            f"[label={_dot_quote(f.interface_label)}];"
        )
    for l in sorted(links, key=lambda l: l.id):
        lines.append(
            f"  {_dot_quote(l.left)} -> {_dot_quote(l.right)} "
            f"[label={_dot_quote(l.kind)}, style=dashed];"
        )
    lines.append("}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _render_graphml(participants, flows, links) -> bytes:
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<graphml xmlns="http://graphml.graphdrawing.org/xmlns">',
        '  <key id="d_label" for="node" attr.name="label" attr.type="string"/>',
        '  <key id="d_space" for="node" attr.name="space" attr.type="string"/>',
        '  <key id="d_edge_label" for="edge" attr.name="label" attr.type="string"/>',
        '  <key id="d_edge_kind" for="edge" attr.name="kind" attr.type="string"/>',
        '  <graph id="network" edgedefault="directed">',
    ]
    for p in sorted(participants, key=lambda p: p.id):
        out.append(f"    <node id={quoteattr(p.id)}>")
        out.append(f'      <data key="d_label">{escape(p.label)}</data>')
        out.append(f'      <data key="d_space">{escape(p.space)}</data>')
        out.append("    </node>")
    for f in sorted(flows, key=lambda f: f.id):
        out.append(
            f"    <edge id={quoteattr(f.id)} source={quoteattr(f.source)} "
            f"target={quoteattr(f.target)}>"
        )
        out.append(f'      <data key="d_edge_label">{escape(f.interface_label)}</data>')
        out.append('      <data key="d_edge_kind">flow</data>')
        out.append("    </edge>")
    for l in sorted(links, key=lambda l: l.id):
        out.append(
            f"    <edge id={quoteattr(l.id)} source={quoteattr(l.left)} "
            f"target={quoteattr(l.right)}>"
        )
        out.append(f'      <data key="d_edge_label">{escape(l.kind)}</data>')
        out.append(f'      <data key="d_edge_kind">link:{escape(l.kind)}</data>')
        out.append("    </edge>")
    out.append("  </graph>")
    out.append("</graphml>")
    return ("\n".join(out) + "\n").encode("utf-8")
