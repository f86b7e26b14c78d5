/**
 * Client-side reconstruction of room state from the server stream.
 *
 * The graph is never mutated locally ahead of the server: OpApplied deltas
 * are applied strictly in version order (early arrivals buffer), and a
 * StateSnapshot replaces everything. Awareness changes merge latest-value
 * per user and field.
 */

import type {
  AwarenessChange,
  DocumentDict,
  GraphDelta,
  GraphDict,
  LayoutDelta,
  LayoutDict,
  OperationDict,
  PanelPoseDict,
  RGB,
  ServerMessage,
  SessionDict,
  SnapshotBody,
} from "./protocol.js";

export interface RejectionNotice {
  reason: string;
  detail: string;
  requestId: string | null;
}

export interface PeerState {
  id: string;
  name: string;
  color: RGB;
  platform: string;
  currentDocument: string | null;
  selectedNode: string | null;
  cursor: AwarenessChange["cursor"];
  headPose: AwarenessChange["headPose"];
  lastTs: number;
}

export class Replica {
  userId: string | null = null;
  color: RGB | null = null;
  warning: string | null = null;
  protocolBanner: string | null = null;

  graph: GraphDict = { nodes: {}, links: {}, version: 0 };
  layout: LayoutDict = { positions3: {}, positions2: {}, pinned: [] };
  documents: DocumentDict[] = [];
  panelPoses: PanelPoseDict[] = [];
  peers = new Map<string, PeerState>();
  rejections: RejectionNotice[] = [];
  appliedOps: OperationDict[] = [];

  private pendingDeltas = new Map<number, { graphDelta: GraphDelta; layoutDelta: LayoutDelta; op: OperationDict }>();
  private listeners = new Set<() => void>();

  onChange(listener: () => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private emit(): void {
    for (const fn of this.listeners) fn();
  }

  handle(msg: ServerMessage): void {
    switch (msg.type) {
      case "JoinAck":
        this.userId = msg.body.userId;
        this.color = msg.body.color;
        this.warning = msg.body.warning;
        this.loadSnapshot(msg.body.snapshot);
        break;
      case "StateSnapshot":
        this.loadSnapshot(msg.body);
        break;
      case "OpApplied":
        this.queueDelta(msg.body);
        break;
      case "OpRejected":
        this.rejections.push(msg.body);
        break;
      case "Awareness":
        for (const change of msg.body.changes) this.mergeAwareness(change);
        break;
      case "Leave":
        this.peers.delete(msg.body.user);
        break;
      case "Error":
        if (msg.body.code === "Protocol") this.protocolBanner = msg.body.message;
        break;
    }
    this.emit();
  }

  private loadSnapshot(snapshot: SnapshotBody): void {
    this.graph = structuredClone(snapshot.graph);
    this.layout = structuredClone(snapshot.layout);
    this.documents = snapshot.documents;
    this.panelPoses = snapshot.panelPoses;
    for (const session of snapshot.sessions) this.mergeSession(session);
    this.drainPending();
  }

  private mergeSession(session: SessionDict): void {
    this.peers.set(session.id, {
      id: session.id,
      name: session.name,
      color: session.color,
      platform: session.platform,
      currentDocument: session.currentDocument,
      selectedNode: session.selectedNode,
      cursor: session.cursor,
      headPose: session.headPose,
      lastTs: 0,
    });
  }

  private mergeAwareness(change: AwarenessChange): void {
    let peer = this.peers.get(change.user);
    if (!peer) {
      peer = {
        id: change.user,
        name: change.name ?? change.user,
        color: change.color ?? [128, 128, 128],
        platform: change.platform ?? "flat2d",
        currentDocument: null,
        selectedNode: null,
        cursor: null,
        headPose: null,
        lastTs: 0,
      };
      this.peers.set(change.user, peer);
    }
    if (change.ts < peer.lastTs) return; // stale
    peer.lastTs = change.ts;
    if (change.name !== undefined) peer.name = change.name;
    if (change.color !== undefined) peer.color = change.color;
    if (change.platform !== undefined) peer.platform = change.platform;
    if (change.currentDocument !== undefined) peer.currentDocument = change.currentDocument;
    if (change.selectedNode !== undefined) peer.selectedNode = change.selectedNode;
    if (change.cursor !== undefined) peer.cursor = change.cursor;
    if (change.headPose !== undefined) peer.headPose = change.headPose;
  }

  private queueDelta(body: { op: OperationDict; graphDelta: GraphDelta; layoutDelta: LayoutDelta; version: number }): void {
    if (body.version <= this.graph.version) return; // superseded by a snapshot
    this.pendingDeltas.set(body.version, body);
    this.drainPending();
  }

  private drainPending(): void {
    for (;;) {
      const next = this.pendingDeltas.get(this.graph.version + 1);
      if (!next) break;
      this.pendingDeltas.delete(this.graph.version + 1);
      this.applyDelta(next.graphDelta, next.layoutDelta);
      this.appliedOps.push(next.op);
    }
    for (const version of [...this.pendingDeltas.keys()]) {
      if (version <= this.graph.version) this.pendingDeltas.delete(version);
    }
  }

  private applyDelta(delta: GraphDelta, layoutDelta: LayoutDelta): void {
    for (const node of delta.nodesUpserted) this.graph.nodes[node.id] = node;
    for (const id of delta.nodesRemoved) delete this.graph.nodes[id];
    for (const link of delta.linksUpserted) this.graph.links[link.id] = link;
    for (const id of delta.linksRemoved) delete this.graph.links[id];
    this.graph.version = delta.version;
    for (const [id, p3] of Object.entries(layoutDelta.positions3 ?? {})) this.layout.positions3[id] = p3;
    for (const [id, p2] of Object.entries(layoutDelta.positions2 ?? {})) this.layout.positions2[id] = p2;
    for (const id of layoutDelta.removed ?? []) {
      delete this.layout.positions3[id];
      delete this.layout.positions2[id];
    }
  }

  /** Reading-status table: document id -> names of users with it open. */
  readingStatus(): Map<string, string[]> {
    const table = new Map<string, string[]>(this.documents.map((d) => [d.id, []]));
    for (const peer of this.peers.values()) {
      if (peer.currentDocument && table.has(peer.currentDocument)) {
        table.get(peer.currentDocument)!.push(peer.name);
      }
    }
    return table;
  }
}
