"""Query, traversal, and full-text search over a published network.

Indexes are rebuilt per network version and immutable afterwards:
an id index, an exact attribute index, an inverted token index over
labels and simple properties, and adjacency lists over flows and
participant links.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .network import Network, build_fragment

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric characters."""
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


@dataclass(frozen=True)
class NetworkIndex:
    network: Network
    by_id: dict = field(default_factory=dict)
    attr_index: dict = field(default_factory=dict)  # (key, value) -> set of ids
    text_index: dict = field(default_factory=dict)  # token -> set of ids
    label_tokens: dict = field(default_factory=dict)  # id -> set of tokens
    flow_adjacency: dict = field(default_factory=dict)  # id -> set of neighbor ids
    link_adjacency: dict = field(default_factory=dict)
    participant_space: dict = field(default_factory=dict)


def build_index(network: Network) -> NetworkIndex:
    by_id = {}
    attr_index: dict[tuple[str, str], set[str]] = {}
    text_index: dict[str, set[str]] = {}
    label_tokens: dict[str, set[str]] = {}
    flow_adjacency: dict[str, set[str]] = {}
    link_adjacency: dict[str, set[str]] = {}
    participant_space: dict[str, str] = {}

    for space in network.spaces:
        for p in space.participants:
            by_id[p.id] = p
            participant_space[p.id] = space.name
            label_tokens[p.id] = set(tokenize(p.label))
            tokens = set(label_tokens[p.id])
            for key, value in p.props.items():
                attr_index.setdefault((key, value), set()).add(p.id)
                tokens.update(tokenize(key))
                tokens.update(tokenize(value))
            for token in tokens:
                text_index.setdefault(token, set()).add(p.id)
            flow_adjacency.setdefault(p.id, set())
            link_adjacency.setdefault(p.id, set())
        for f in space.flows:
            flow_adjacency.setdefault(f.source, set()).add(f.target)
            flow_adjacency.setdefault(f.target, set()).add(f.source)
    for l in network.participant_links:
        link_adjacency.setdefault(l.left, set()).add(l.right)
        link_adjacency.setdefault(l.right, set()).add(l.left)

    return NetworkIndex(
        network=network,
        by_id=by_id,
        attr_index=attr_index,
        text_index=text_index,
        label_tokens=label_tokens,
        flow_adjacency=flow_adjacency,
        link_adjacency=link_adjacency,
        participant_space=participant_space,
    )


def search(index: NetworkIndex, query: str) -> list[str]:
    """Participants matching every query token, best label matches first.

    Ties rank by id; an empty query matches nothing. Equivalent to a
    full scan over the network.
    """
    tokens = tokenize(query)
    if not tokens:
        return []
    result: set[str] | None = None
    for token in tokens:
        hits = index.text_index.get(token, set())
        result = hits if result is None else result & hits
        if not result:
            return []
    assert result is not None

    def rank(pid: str):
        label_matches = sum(1 for t in tokens if t in index.label_tokens[pid])
        return (-label_matches, pid)

    return sorted(result, key=rank)


def attribute_lookup(index: NetworkIndex, key: str, value: str) -> list[str]:
    return sorted(index.attr_index.get((key, value), set()))


def traverse(
    index: NetworkIndex,
    start: str,
    depth: int,
    follow_links: bool = False,
    spaces: list[str] | None = None,
) -> Network:
    """Breadth-first closed neighborhood over flows (and participant
    links when follow_links), truncated at ``depth``, returned as a
    valid network fragment."""
    if start not in index.by_id:
        raise KeyError(f"unknown participant {start!r}")
    if depth < 0:
        raise ValueError("depth must be >= 0")
    allowed = set(spaces) if spaces else None

    def admitted(pid: str) -> bool:
        return allowed is None or index.participant_space[pid] in allowed

    selected = {start}
    frontier = [start]
    for _ in range(depth):
        nxt = []
        for pid in frontier:
            neighbors = set(index.flow_adjacency.get(pid, ()))
            if follow_links:
                neighbors |= index.link_adjacency.get(pid, set())
            for n in neighbors:
                if n not in selected and admitted(n):
                    selected.add(n)
                    nxt.append(n)
        frontier = nxt
        if not frontier:
            break

    participants = [index.by_id[pid] for pid in sorted(selected)]
    flows = [
        f
        for space in index.network.spaces
        for f in space.flows
        if f.source in selected and f.target in selected
    ]
    links = [
        l
        for l in index.network.participant_links
        if l.left in selected and l.right in selected
    ]
    return build_fragment(participants, flows, links)
