/**
 * Wire protocol: one JSON object per line over any ordered byte stream.
 * Mirrors the server's message schema exactly; protocolVersion must be "1".
 */

export const PROTOCOL_VERSION = "1";

export type RGB = [number, number, number];
export type Vec3 = [number, number, number];
export type Vec2 = [number, number];

export interface NodeRecord {
  id: string;
  label: string;
  position3: Vec3;
  creator: string;
  isDocAnchor: boolean;
  pinnedIn2d: boolean;
}

export interface LinkRecord {
  id: string;
  endpoints: [string, string];
  label: string;
  creator: string;
  isDefaultDocLink: boolean;
}

export interface GraphDict {
  nodes: Record<string, NodeRecord>;
  links: Record<string, LinkRecord>;
  version: number;
}

export interface LayoutDict {
  positions3: Record<string, Vec3>;
  positions2: Record<string, Vec2>;
  pinned: string[];
}

export interface DocumentDict {
  id: string;
  title: string;
  body: string;
  wordCount: number;
}

export interface PanelPoseDict {
  documentId: string;
  center: Vec3;
  facingNormal: Vec3;
  anchorOffset: Vec3;
}

export interface CursorHintDict {
  entries: { node: string; w: number }[];
  sourcePlatform: string;
  ts: number;
}

export interface HeadPoseDict {
  position: Vec3;
  orientation: [number, number, number, number];
  fovVertical: number;
  fovHorizontal: number;
}

export interface SessionDict {
  id: string;
  name: string;
  color: RGB;
  platform: string;
  currentDocument: string | null;
  selectedNode: string | null;
  cursor: CursorHintDict | null;
  headPose: HeadPoseDict | null;
}

export interface SnapshotBody {
  graph: GraphDict;
  layout: LayoutDict;
  documents: DocumentDict[];
  panelPoses: PanelPoseDict[];
  sessions: SessionDict[];
  version: number;
}

export interface OperationDict {
  seq: number;
  actor: string;
  kind: string;
  payload: Record<string, unknown>;
  timestamp: number;
}

export interface GraphDelta {
  nodesUpserted: NodeRecord[];
  nodesRemoved: string[];
  linksUpserted: LinkRecord[];
  linksRemoved: string[];
  version: number;
}

export interface LayoutDelta {
  positions3: Record<string, Vec3>;
  positions2: Record<string, Vec2>;
  removed: string[];
}

export interface AwarenessChange {
  user: string;
  ts: number;
  name?: string;
  color?: RGB;
  platform?: string;
  joined?: boolean;
  cursor?: CursorHintDict | null;
  headPose?: HeadPoseDict | null;
  currentDocument?: string | null;
  selectedNode?: string | null;
}

export type ServerMessage =
  | { type: "JoinAck"; room: string; protocolVersion: string; body: { userId: string; color: RGB; warning: string | null; snapshot: SnapshotBody } }
  | { type: "StateSnapshot"; room: string; protocolVersion: string; body: SnapshotBody }
  | { type: "OpApplied"; room: string; protocolVersion: string; body: { op: OperationDict; graphDelta: GraphDelta; layoutDelta: LayoutDelta; version: number; requestId: string | null } }
  | { type: "OpRejected"; room: string; protocolVersion: string; body: { reason: string; detail: string; requestId: string | null } }
  | { type: "Awareness"; room: string; protocolVersion: string; body: { changes: AwarenessChange[] } }
  | { type: "Leave"; room: string; protocolVersion: string; body: { user: string } }
  | { type: "Error"; room: string; protocolVersion: string; body: { code: string; message: string } };

export type ClientMessage =
  | { type: "Join"; room: string; protocolVersion: string; body: { name: string; platform: string } }
  | { type: "OpSubmit"; room: string; protocolVersion: string; body: { kind: string; payload: Record<string, unknown>; requestId?: string } }
  | { type: "Awareness"; room: string; protocolVersion: string; body: Record<string, unknown> }
  | { type: "Leave"; room: string; protocolVersion: string; body: Record<string, never> };

export class ProtocolVersionError extends Error {
  constructor(public readonly got: string | undefined) {
    super(`protocol version mismatch: got ${got ?? "none"}, want ${PROTOCOL_VERSION}`);
  }
}

export function encodeMessage(msg: ClientMessage): string {
  return JSON.stringify(msg) + "\n";
}

export function decodeServerMessage(line: string): ServerMessage {
  const msg = JSON.parse(line) as ServerMessage;
  if (msg.protocolVersion !== PROTOCOL_VERSION) {
    throw new ProtocolVersionError((msg as { protocolVersion?: string }).protocolVersion);
  }
  return msg;
}

export function makeClientMessage<T extends ClientMessage["type"]>(
  type: T,
  room: string,
  body: Extract<ClientMessage, { type: T }>["body"],
): ClientMessage {
  return { type, room, protocolVersion: PROTOCOL_VERSION, body } as ClientMessage;
}
