import random

import pytest

from visrooms.graph import GraphState
from visrooms.model import LinkRecord, NodeRecord, Operation, OpKind


def make_node(nid, label=None, pos=(0.0, 0.0, 0.0), creator="u1", anchor=False):
    return NodeRecord(
        id=nid, label=label or nid, position3=pos, creator=creator, is_doc_anchor=anchor
    )


def make_link(lid, a, b, label="", creator="u1", default=False):
    return LinkRecord(
        id=lid, endpoints=(a, b), label=label, creator=creator, is_default_doc_link=default
    )


def make_state(nodes=(), links=(), version=0):
    return GraphState(
        nodes={n.id: n for n in nodes},
        links={l.id: l for l in links},
        version=version,
    )


def make_op(kind, payload, actor="u1", seq=0, ts=0):
    return Operation(seq=seq, actor=actor, kind=OpKind(kind), payload=payload, timestamp_ms=ts)


@pytest.fixture
def rng():
    return random.Random(1234)
