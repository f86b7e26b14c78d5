import { describe, expect, it } from "vitest";

import { Replica } from "../src/replica.js";
import type { GraphDelta, LayoutDelta, NodeRecord, ServerMessage, SnapshotBody } from "../src/protocol.js";

function node(id: string, label = id): NodeRecord {
  return { id, label, position3: [0, 0, 0], creator: "u1", isDocAnchor: false, pinnedIn2d: false };
}

function snapshot(version = 0): SnapshotBody {
  return {
    graph: { nodes: {}, links: {}, version },
    layout: { positions3: {}, positions2: {}, pinned: [] },
    documents: [
      { id: "d1", title: "One", body: "alpha beta", wordCount: 2 },
      { id: "d2", title: "Two", body: "gamma delta", wordCount: 2 },
    ],
    panelPoses: [],
    sessions: [
      {
        id: "u1", name: "ana", color: [230, 25, 75], platform: "flat2d",
        currentDocument: null, selectedNode: null, cursor: null, headPose: null,
      },
    ],
    version,
  };
}

function joinAck(): ServerMessage {
  return {
    type: "JoinAck",
    room: "r",
    protocolVersion: "1",
    body: { userId: "u1", color: [230, 25, 75], warning: null, snapshot: snapshot() },
  };
}

function opApplied(version: number, upserts: NodeRecord[]): ServerMessage {
  const graphDelta: GraphDelta = {
    nodesUpserted: upserts,
    nodesRemoved: [],
    linksUpserted: [],
    linksRemoved: [],
    version,
  };
  const layoutDelta: LayoutDelta = {
    positions3: Object.fromEntries(upserts.map((n) => [n.id, n.position3])),
    positions2: Object.fromEntries(upserts.map((n) => [n.id, [n.position3[0], n.position3[1]]])),
    removed: [],
  };
  return {
    type: "OpApplied",
    room: "r",
    protocolVersion: "1",
    body: {
      op: { seq: version, actor: "u1", kind: "AddNode", payload: { nodeId: upserts[0]!.id, label: upserts[0]!.label }, timestamp: 0 },
      graphDelta,
      layoutDelta,
      version,
      requestId: null,
    },
  };
}

describe("Replica", () => {
  it("applies deltas in version order, buffering early arrivals", () => {
    const replica = new Replica();
    replica.handle(joinAck());
    replica.handle(opApplied(2, [node("n2")]));
    expect(replica.graph.version).toBe(0); // waiting for v1
    replica.handle(opApplied(1, [node("n1")]));
    expect(replica.graph.version).toBe(2);
    expect(Object.keys(replica.graph.nodes).sort()).toEqual(["n1", "n2"]);
    expect(replica.layout.positions2["n1"]).toEqual([0, 0]);
  });

  it("snapshot replaces state and supersedes stale deltas", () => {
    const replica = new Replica();
    replica.handle(joinAck());
    replica.handle(opApplied(1, [node("n1")]));
    const snap = snapshot(5);
    snap.graph.nodes["n9"] = node("n9");
    replica.handle({ type: "StateSnapshot", room: "r", protocolVersion: "1", body: snap });
    expect(replica.graph.version).toBe(5);
    expect(replica.graph.nodes["n1"]).toBeUndefined();
    replica.handle(opApplied(3, [node("n3")])); // stale: already covered
    expect(replica.graph.version).toBe(5);
  });

  it("merges awareness latest-value per user and discards stale timestamps", () => {
    const replica = new Replica();
    replica.handle(joinAck());
    replica.handle({
      type: "Awareness", room: "r", protocolVersion: "1",
      body: { changes: [{ user: "u2", ts: 100, name: "bo", color: [67, 99, 216], platform: "spatial3d", currentDocument: "d1" }] },
    });
    expect(replica.readingStatus().get("d1")).toEqual(["bo"]);
    replica.handle({
      type: "Awareness", room: "r", protocolVersion: "1",
      body: { changes: [{ user: "u2", ts: 50, currentDocument: "d2" }] }, // stale
    });
    expect(replica.readingStatus().get("d1")).toEqual(["bo"]);
    replica.handle({
      type: "Awareness", room: "r", protocolVersion: "1",
      body: { changes: [{ user: "u2", ts: 200, currentDocument: null }] },
    });
    expect(replica.readingStatus().get("d1")).toEqual([]);
  });

  it("records rejections and drops departed peers", () => {
    const replica = new Replica();
    replica.handle(joinAck());
    replica.handle({
      type: "OpRejected", room: "r", protocolVersion: "1",
      body: { reason: "DuplicateLink", detail: "a--b", requestId: "r1" },
    });
    expect(replica.rejections[0]!.reason).toBe("DuplicateLink");
    replica.handle({
      type: "Awareness", room: "r", protocolVersion: "1",
      body: { changes: [{ user: "u2", ts: 1, name: "bo", joined: true }] },
    });
    replica.handle({ type: "Leave", room: "r", protocolVersion: "1", body: { user: "u2" } });
    expect(replica.peers.has("u2")).toBe(false);
  });
});
