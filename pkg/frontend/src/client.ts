/**
 * Room session: joins, submits operation intents, and publishes local
 * awareness with 20 Hz coalescing. The graph itself lives in the Replica;
 * nothing here mutates state before the server confirms it.
 */

import { naturalNeighborWeights2d, syntheticTopDownPose } from "./geometry.js";
import {
  decodeServerMessage,
  encodeMessage,
  makeClientMessage,
  ProtocolVersionError,
  type Vec2,
} from "./protocol.js";
import { Replica } from "./replica.js";
import type { Transport } from "./transport.js";

export const AWARENESS_INTERVAL_MS = 50; // 20 Hz cap, matches the server

export class RoomClient {
  readonly replica = new Replica();
  private requestCounter = 0;
  private pendingAwareness: Record<string, unknown> = {};
  private lastAwarenessSent = -Infinity;
  private awarenessTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly transport: Transport,
    readonly room: string,
    private readonly now: () => number = () => Date.now(),
  ) {
    transport.onLine((line) => {
      if (!line.trim()) return;
      try {
        this.replica.handle(decodeServerMessage(line));
      } catch (err) {
        if (err instanceof ProtocolVersionError) {
          this.replica.protocolBanner = err.message;
        } else {
          throw err;
        }
      }
    });
  }

  join(name: string, platform: "flat2d" | "spatial3d"): void {
    this.transport.send(encodeMessage(makeClientMessage("Join", this.room, { name, platform })));
  }

  leave(): void {
    this.transport.send(encodeMessage(makeClientMessage("Leave", this.room, {})));
    this.transport.close();
  }

  submitOp(kind: string, payload: Record<string, unknown>): string {
    const requestId = `${this.replica.userId ?? "anon"}-${++this.requestCounter}`;
    this.transport.send(
      encodeMessage(makeClientMessage("OpSubmit", this.room, { kind, payload, requestId })),
    );
    return requestId;
  }

  /**
   * Queue awareness fields; at most one message every 50 ms leaves the
   * client, carrying only the newest value per field.
   */
  publishAwareness(fields: Record<string, unknown>): void {
    Object.assign(this.pendingAwareness, fields);
    const since = this.now() - this.lastAwarenessSent;
    if (since >= AWARENESS_INTERVAL_MS) {
      this.flushAwareness();
    } else if (this.awarenessTimer === null) {
      this.awarenessTimer = setTimeout(() => {
        this.awarenessTimer = null;
        this.flushAwareness();
      }, AWARENESS_INTERVAL_MS - since);
    }
  }

  flushAwareness(): void {
    if (Object.keys(this.pendingAwareness).length === 0) return;
    this.lastAwarenessSent = this.now();
    this.transport.send(
      encodeMessage(makeClientMessage("Awareness", this.room, this.pendingAwareness)),
    );
    this.pendingAwareness = {};
  }

  /** Pointer moved over the graph view at world coordinates (x, y). */
  publishCursorAt(world: Vec2): void {
    const sites = new Map<string, Vec2>(Object.entries(this.replica.layout.positions2));
    if (sites.size === 0) return;
    const entries = naturalNeighborWeights2d(world, sites);
    this.publishAwareness({
      cursor: {
        entries: entries.map(([node, w]) => ({ node, w })),
        sourcePlatform: "flat2d",
        ts: this.now(),
      },
    });
  }

  /** Viewport changed: let spatial users see this desktop view as a frustum. */
  publishViewportPose(view: { minX: number; minY: number; maxX: number; maxY: number }): void {
    const pose = syntheticTopDownPose(view);
    this.publishAwareness({
      headPose: {
        position: pose.position,
        orientation: pose.orientation,
        fovVertical: pose.fovVertical,
        fovHorizontal: pose.fovHorizontal,
      },
    });
  }

  setCurrentDocument(documentId: string | null): void {
    this.submitOp("SetCurrentDocument", { documentId });
  }

  selectNode(nodeId: string | null): void {
    if (nodeId === null) this.submitOp("DeselectNode", {});
    else this.submitOp("SelectNode", { nodeId });
  }
}
