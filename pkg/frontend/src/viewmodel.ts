/**
 * Pure derivation of everything the desktop UI renders, from a replica plus
 * local view state. Every entity in the view model exists in the replica's
 * current graph version; remote cursors come only from relocating received
 * hint weights against the local 2D positions.
 */

import { applyTransform, fitTransform, frustumFootprint, relocateCursor, type MapTransform } from "./geometry.js";
import type { RGB, Vec2 } from "./protocol.js";
import type { Replica } from "./replica.js";

export interface UserRow {
  id: string;
  name: string;
  color: RGB;
  platform: string;
  isSelf: boolean;
}

export interface DocumentRow {
  id: string;
  title: string;
  usingUsers: string[];
}

export interface GraphNodeView {
  id: string;
  label: string;
  position: Vec2;
  color: RGB;
  isDocAnchor: boolean;
  highlights: RGB[]; // remote selection squares stacked on the node
}

export interface GraphLinkView {
  id: string;
  from: Vec2;
  to: Vec2;
  label: string;
  isDefaultDocLink: boolean;
}

export interface RemoteCursorView {
  user: string;
  name: string;
  color: RGB;
  position: Vec2;
}

export interface MinimapView {
  width: number;
  height: number;
  nodes: { position: Vec2; color: RGB }[];
  frustums: { user: string; color: RGB; polygon: Vec2[]; ray: [Vec2, Vec2] }[];
}

export interface ViewModel {
  userList: UserRow[];
  taskDescription: string;
  documentList: DocumentRow[];
  selectedDocument: { id: string; title: string; body: string } | null;
  graph: { nodes: GraphNodeView[]; links: GraphLinkView[]; cursors: RemoteCursorView[] };
  minimap: MinimapView;
  warning: string | null;
  protocolBanner: string | null;
  version: number;
}

export const TASK_DESCRIPTION =
  "Read the documents, build the shared node-link diagram, and work out the " +
  "who, what, where, when, how, and why of the case together.";

const GREY: RGB = [140, 140, 140];

export function deriveViewModel(
  replica: Replica,
  local: { selectedDocumentId: string | null; minimapSize?: { width: number; height: number } },
): ViewModel {
  const positions2 = new Map<string, Vec2>(Object.entries(replica.layout.positions2));
  const peerColor = (creator: string): RGB =>
    creator === "system" ? [40, 40, 40] : replica.peers.get(creator)?.color ?? GREY;

  const using = replica.readingStatus();
  const documentList: DocumentRow[] = replica.documents.map((d) => ({
    id: d.id,
    title: d.title,
    usingUsers: using.get(d.id) ?? [],
  }));

  const nodes: GraphNodeView[] = [];
  for (const node of Object.values(replica.graph.nodes)) {
    const pos = positions2.get(node.id);
    if (!pos) continue;
    const highlights: RGB[] = [];
    for (const peer of replica.peers.values()) {
      if (peer.id !== replica.userId && peer.selectedNode === node.id) {
        highlights.push(peer.color);
      }
    }
    nodes.push({
      id: node.id,
      label: node.label,
      position: pos,
      color: peerColor(node.creator),
      isDocAnchor: node.isDocAnchor,
      highlights,
    });
  }

  const links: GraphLinkView[] = [];
  for (const link of Object.values(replica.graph.links)) {
    const from = positions2.get(link.endpoints[0]);
    const to = positions2.get(link.endpoints[1]);
    if (!from || !to) continue;
    links.push({ id: link.id, from, to, label: link.label, isDefaultDocLink: link.isDefaultDocLink });
  }

  const cursors: RemoteCursorView[] = [];
  for (const peer of replica.peers.values()) {
    if (peer.id === replica.userId || !peer.cursor) continue;
    const pos = relocateCursor(peer.cursor.entries, positions2);
    if (pos) cursors.push({ user: peer.id, name: peer.name, color: peer.color, position: pos });
  }

  const size = local.minimapSize ?? { width: 180, height: 140 };
  const xs = nodes.map((n) => n.position[0]);
  const ys = nodes.map((n) => n.position[1]);
  const bounds = nodes.length
    ? { minX: Math.min(...xs), minY: Math.min(...ys), maxX: Math.max(...xs), maxY: Math.max(...ys) }
    : { minX: -1, minY: -1, maxX: 1, maxY: 1 };
  const transform: MapTransform = fitTransform(bounds, size.width, size.height);

  const minimap: MinimapView = {
    width: size.width,
    height: size.height,
    nodes: nodes.map((n) => ({ position: applyTransform(transform, n.position), color: n.color })),
    frustums: [],
  };
  for (const peer of replica.peers.values()) {
    if (peer.id === replica.userId || !peer.headPose) continue;
    const fp = frustumFootprint({
      position: peer.headPose.position,
      orientation: peer.headPose.orientation,
      fovVertical: peer.headPose.fovVertical,
      fovHorizontal: peer.headPose.fovHorizontal,
    });
    minimap.frustums.push({
      user: peer.id,
      color: peer.color,
      polygon: fp.polygon.map((p) => applyTransform(transform, p)),
      ray: [applyTransform(transform, fp.ray[0]), applyTransform(transform, fp.ray[1])],
    });
  }

  const selectedDoc = replica.documents.find((d) => d.id === local.selectedDocumentId) ?? null;
  const userList: UserRow[] = [...replica.peers.values()].map((p) => ({
    id: p.id,
    name: p.name,
    color: p.color,
    platform: p.platform,
    isSelf: p.id === replica.userId,
  }));
  userList.sort((a, b) => (a.id < b.id ? -1 : 1));

  return {
    userList,
    taskDescription: TASK_DESCRIPTION,
    documentList,
    selectedDocument: selectedDoc ? { id: selectedDoc.id, title: selectedDoc.title, body: selectedDoc.body } : null,
    graph: { nodes, links, cursors },
    minimap,
    warning: replica.warning,
    protocolBanner: replica.protocolBanner,
    version: replica.graph.version,
  };
}
