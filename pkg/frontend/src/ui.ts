/**
 * Desktop (flat-2D) collaboration UI.
 *
 * Renders the view model into plain DOM/SVG and maps user input onto
 * operation submissions. The replica is the only source of graph truth:
 * edits appear when the server's OpApplied comes back, with at most a
 * translucent ghost as optimistic feedback in between. Rejections surface
 * as toasts.
 */

import type { RoomClient } from "./client.js";
import type { RGB, Vec2 } from "./protocol.js";
import { deriveViewModel, type ViewModel } from "./viewmodel.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const NODE_RADIUS = 10;
const MOVE_THROTTLE_MS = 50; // drag streams MoveNode at <= 20 Hz

interface Viewport {
  x: number; // world coords of the view center
  y: number;
  scale: number; // pixels per world unit
}

interface Ghost {
  requestId: string;
  label: string;
  position: Vec2;
}

function rgb(c: RGB): string {
  return `rgb(${c[0]},${c[1]},${c[2]})`;
}

export class App {
  readonly root: HTMLElement;
  private viewport: Viewport = { x: 0, y: 0, scale: 2.0 };
  private selectedDocumentId: string | null = null;
  private ghosts = new Map<string, Ghost>();
  private seenRejections = 0;
  private mergeSource: string | null = null;
  private moveArmed: string | null = null;
  private lastMoveSent = 0;
  private graphSize = { width: 640, height: 480 };

  private userListEl!: HTMLElement;
  private docTableEl!: HTMLTableSectionElement;
  private docBodyEl!: HTMLElement;
  private svg!: SVGSVGElement;
  private linksG!: SVGGElement;
  private nodesG!: SVGGElement;
  private cursorsG!: SVGGElement;
  private ghostsG!: SVGGElement;
  private minimapSvg!: SVGSVGElement;
  private toastsEl!: HTMLElement;
  private bannerEl!: HTMLElement;
  private menuEl!: HTMLElement;

  constructor(
    private readonly client: RoomClient,
    container: HTMLElement,
    private readonly doc: Document = document,
  ) {
    this.root = container;
    this.buildSkeleton();
    client.replica.onChange(() => this.render());
    this.render();
  }

  // -- DOM scaffolding ------------------------------------------------------

  private buildSkeleton(): void {
    const d = this.doc;
    this.root.innerHTML = "";
    this.root.classList.add("visrooms-app");

    const aside = d.createElement("aside");

    const users = d.createElement("section");
    users.id = "user-list";
    users.append(this.heading("Participants"));
    this.userListEl = d.createElement("ul");
    users.append(this.userListEl);

    const task = d.createElement("section");
    task.id = "task";
    task.append(this.heading("Task"));
    const taskText = d.createElement("p");
    taskText.id = "task-text";
    task.append(taskText);

    const docs = d.createElement("section");
    docs.id = "documents";
    docs.append(this.heading("Documents"));
    const table = d.createElement("table");
    const head = d.createElement("thead");
    const headRow = d.createElement("tr");
    for (const title of ["ID", "Title", "Using"]) {
      const th = d.createElement("th");
      th.textContent = title;
      headRow.append(th);
    }
    head.append(headRow);
    this.docTableEl = d.createElement("tbody");
    table.append(head, this.docTableEl);
    docs.append(table);

    const docBody = d.createElement("section");
    docBody.id = "document-view";
    docBody.append(this.heading("Document"));
    this.docBodyEl = d.createElement("div");
    this.docBodyEl.id = "document-body";
    const addBtn = d.createElement("button");
    addBtn.id = "add-node-from-selection";
    addBtn.textContent = "Add node from selection";
    addBtn.addEventListener("click", () => this.addNodeFromSelection());
    docBody.append(this.docBodyEl, addBtn);

    aside.append(users, task, docs, docBody);

    const main = d.createElement("main");
    this.svg = d.createElementNS(SVG_NS, "svg") as SVGSVGElement;
    this.svg.id = "graph";
    this.svg.setAttribute("width", String(this.graphSize.width));
    this.svg.setAttribute("height", String(this.graphSize.height));
    this.linksG = d.createElementNS(SVG_NS, "g") as SVGGElement;
    this.nodesG = d.createElementNS(SVG_NS, "g") as SVGGElement;
    this.cursorsG = d.createElementNS(SVG_NS, "g") as SVGGElement;
    this.ghostsG = d.createElementNS(SVG_NS, "g") as SVGGElement;
    this.svg.append(this.linksG, this.nodesG, this.ghostsG, this.cursorsG);

    this.minimapSvg = d.createElementNS(SVG_NS, "svg") as SVGSVGElement;
    this.minimapSvg.id = "minimap";
    this.minimapSvg.setAttribute("width", "180");
    this.minimapSvg.setAttribute("height", "140");

    this.toastsEl = d.createElement("div");
    this.toastsEl.id = "toasts";
    this.bannerEl = d.createElement("div");
    this.bannerEl.id = "protocol-banner";
    this.bannerEl.style.display = "none";
    this.menuEl = d.createElement("div");
    this.menuEl.id = "context-menu";
    this.menuEl.style.display = "none";

    main.append(this.bannerEl, this.svg, this.minimapSvg, this.toastsEl, this.menuEl);
    this.root.append(aside, main);

    this.wireGraphEvents();
  }

  private heading(text: string): HTMLElement {
    const h = this.doc.createElement("h2");
    h.textContent = text;
    return h;
  }

  // -- coordinate transforms --------------------------------------------------

  worldToScreen(p: Vec2): Vec2 {
    return [
      (p[0] - this.viewport.x) * this.viewport.scale + this.graphSize.width / 2,
      (p[1] - this.viewport.y) * this.viewport.scale + this.graphSize.height / 2,
    ];
  }

  screenToWorld(p: Vec2): Vec2 {
    return [
      (p[0] - this.graphSize.width / 2) / this.viewport.scale + this.viewport.x,
      (p[1] - this.graphSize.height / 2) / this.viewport.scale + this.viewport.y,
    ];
  }

  private visibleWorldRect() {
    const halfW = this.graphSize.width / 2 / this.viewport.scale;
    const halfH = this.graphSize.height / 2 / this.viewport.scale;
    return {
      minX: this.viewport.x - halfW,
      minY: this.viewport.y - halfH,
      maxX: this.viewport.x + halfW,
      maxY: this.viewport.y + halfH,
    };
  }

  // -- input wiring -------------------------------------------------------------

  private wireGraphEvents(): void {
    let panFrom: Vec2 | null = null;
    let dragNode: { id: string; last: Vec2 } | null = null;

    this.svg.addEventListener("mousedown", (ev) => {
      const target = ev.target as Element;
      const nodeId = target.getAttribute?.("data-node-id");
      if (ev.button === 0 && nodeId) {
        dragNode = { id: nodeId, last: this.eventWorld(ev) };
      } else if (ev.button === 0) {
        panFrom = [ev.offsetX ?? 0, ev.offsetY ?? 0];
      }
    });

    this.svg.addEventListener("mousemove", (ev) => {
      const world = this.eventWorld(ev);
      if (dragNode) {
        const now = Date.now();
        if (now - this.lastMoveSent >= MOVE_THROTTLE_MS) {
          this.lastMoveSent = now;
          this.client.submitOp("MoveNode", {
            nodeId: dragNode.id,
            position: [world[0], world[1], this.nodeZ(dragNode.id)],
          });
        }
        dragNode.last = world;
      } else if (panFrom) {
        const dx = ((ev.offsetX ?? 0) - panFrom[0]) / this.viewport.scale;
        const dy = ((ev.offsetY ?? 0) - panFrom[1]) / this.viewport.scale;
        this.viewport.x -= dx;
        this.viewport.y -= dy;
        panFrom = [ev.offsetX ?? 0, ev.offsetY ?? 0];
        this.client.publishViewportPose(this.visibleWorldRect());
        this.render();
      }
      this.client.publishCursorAt(world);
    });

    this.svg.addEventListener("mouseup", (ev) => {
      if (dragNode) {
        const world = this.eventWorld(ev);
        this.client.submitOp("MoveNode", {
          nodeId: dragNode.id,
          position: [world[0], world[1], this.nodeZ(dragNode.id)],
        });
      }
      dragNode = null;
      panFrom = null;
    });

    this.svg.addEventListener("wheel", (ev) => {
      ev.preventDefault();
      const factor = (ev as WheelEvent).deltaY < 0 ? 1.15 : 1 / 1.15;
      this.viewport.scale = Math.min(20, Math.max(0.1, this.viewport.scale * factor));
      this.client.publishViewportPose(this.visibleWorldRect());
      this.render();
    });

    this.svg.addEventListener("click", (ev) => {
      const target = ev.target as Element;
      const nodeId = target.getAttribute?.("data-node-id");
      if (this.mergeSource) {
        if (nodeId && nodeId !== this.mergeSource) {
          this.client.submitOp("MergeNodes", { srcId: this.mergeSource, dstId: nodeId });
        }
        this.mergeSource = null;
        return;
      }
      if (this.moveArmed && !nodeId) {
        const world = this.eventWorld(ev);
        this.client.submitOp("MoveNode", {
          nodeId: this.moveArmed,
          position: [world[0], world[1], this.nodeZ(this.moveArmed)],
        });
        this.moveArmed = null;
        return;
      }
      if (nodeId) this.client.selectNode(nodeId);
    });

    this.svg.addEventListener("contextmenu", (ev) => {
      ev.preventDefault();
      const target = ev.target as Element;
      const nodeId = target.getAttribute?.("data-node-id");
      const linkId = target.getAttribute?.("data-link-id");
      if (nodeId) this.openNodeMenu(nodeId, [ev.clientX ?? 0, ev.clientY ?? 0]);
      else if (linkId) this.openLinkMenu(linkId, [ev.clientX ?? 0, ev.clientY ?? 0]);
      else this.closeMenu();
    });
  }

  private eventWorld(ev: MouseEvent): Vec2 {
    return this.screenToWorld([ev.offsetX ?? 0, ev.offsetY ?? 0]);
  }

  private nodeZ(nodeId: string): number {
    return this.client.replica.layout.positions3[nodeId]?.[2] ?? 0;
  }

  // -- commands -------------------------------------------------------------

  addNodeFromSelection(): void {
    const selection = this.doc.defaultView?.getSelection?.()?.toString().trim() ?? "";
    const label = selection || this.promptText("Node label");
    if (!label) return;
    this.addNode(label);
  }

  addNode(label: string, at?: Vec2): void {
    const world = at ?? [this.viewport.x, this.viewport.y];
    const payload: Record<string, unknown> = { label, position: [world[0], world[1], 0] };
    if (this.selectedDocumentId) payload.sourceDocument = this.selectedDocumentId;
    const requestId = this.client.submitOp("AddNode", payload);
    this.ghosts.set(requestId, { requestId, label, position: world });
    this.render();
  }

  addLink(a: string, b: string, label: string): void {
    this.client.submitOp("AddLink", { a, b, label });
  }

  private promptText(message: string, value = ""): string | null {
    const w = this.doc.defaultView as (Window & { prompt?: (m: string, v: string) => string | null }) | null;
    return w?.prompt ? w.prompt(message, value) : null;
  }

  private openNodeMenu(nodeId: string, at: Vec2): void {
    const items: [string, () => void][] = [
      ["Delete", () => this.client.submitOp("DeleteNode", { nodeId })],
      ["Merge into…", () => (this.mergeSource = nodeId)],
      ["Move…", () => (this.moveArmed = nodeId)],
      [
        "Rename…",
        () => {
          const label = this.promptText("New label");
          if (label) this.client.submitOp("RenameNode", { nodeId, label });
        },
      ],
      [
        "Link to…",
        () => {
          const other = this.promptText("Link to node id");
          const label = other ? this.promptText("Link label", "") ?? "" : "";
          if (other) this.addLink(nodeId, other, label);
        },
      ],
      ["Refer to document", () => this.referToDocument(nodeId)],
      ["Highlight", () => this.client.selectNode(nodeId)],
    ];
    this.showMenu(items, at);
  }

  private openLinkMenu(linkId: string, at: Vec2): void {
    const items: [string, () => void][] = [
      ["Delete link", () => this.client.submitOp("DeleteLink", { linkId })],
      [
        "Relabel…",
        () => {
          const label = this.promptText("Link label");
          if (label !== null) this.client.submitOp("RelabelLink", { linkId, label });
        },
      ],
    ];
    this.showMenu(items, at);
  }

  private showMenu(items: [string, () => void][], at: Vec2): void {
    this.menuEl.innerHTML = "";
    this.menuEl.style.display = "block";
    this.menuEl.style.left = `${at[0]}px`;
    this.menuEl.style.top = `${at[1]}px`;
    for (const [label, action] of items) {
      const btn = this.doc.createElement("button");
      btn.textContent = label;
      btn.addEventListener("click", () => {
        this.closeMenu();
        action();
      });
      this.menuEl.append(btn);
    }
  }

  private closeMenu(): void {
    this.menuEl.style.display = "none";
    this.menuEl.innerHTML = "";
  }

  /** Open the document this node's label was taken from. */
  referToDocument(nodeId: string): void {
    const replica = this.client.replica;
    const node = replica.graph.nodes[nodeId];
    if (!node) return;
    const fromOp = replica.appliedOps.find(
      (op) => op.kind === "AddNode" && op.payload["nodeId"] === nodeId,
    );
    const source = (fromOp?.payload["sourceDocument"] as string | undefined) ?? null;
    const byText = replica.documents.find((d) => d.body.includes(node.label))?.id ?? null;
    const docId = source ?? byText;
    if (docId) this.openDocument(docId);
    else this.toast(`No document mentions "${node.label}"`);
  }

  openDocument(documentId: string): void {
    this.selectedDocumentId = documentId;
    this.client.setCurrentDocument(documentId);
    this.render();
  }

  toast(text: string): void {
    const el = this.doc.createElement("div");
    el.className = "toast";
    el.textContent = text;
    this.toastsEl.append(el);
    const w = this.doc.defaultView;
    w?.setTimeout?.(() => el.remove(), 4000);
  }

  // -- rendering --------------------------------------------------------------

  render(): void {
    const vm = deriveViewModel(this.client.replica, {
      selectedDocumentId: this.selectedDocumentId,
      minimapSize: { width: 180, height: 140 },
    });
    this.surfaceRejections();
    this.dropConfirmedGhosts();
    this.renderUserList(vm);
    this.renderTask(vm);
    this.renderDocuments(vm);
    this.renderDocumentBody(vm);
    this.renderGraph(vm);
    this.renderMinimap(vm);
    this.renderBanner(vm);
  }

  private surfaceRejections(): void {
    const rejections = this.client.replica.rejections;
    for (; this.seenRejections < rejections.length; this.seenRejections++) {
      const r = rejections[this.seenRejections]!;
      this.toast(`Rejected: ${r.reason}${r.detail ? ` (${r.detail})` : ""}`);
      if (r.requestId) this.ghosts.delete(r.requestId);
    }
  }

  private dropConfirmedGhosts(): void {
    if (this.ghosts.size === 0) return;
    for (const op of this.client.replica.appliedOps) {
      const byLabel = [...this.ghosts.values()].find((g) => g.label === op.payload["label"]);
      if (op.kind === "AddNode" && byLabel) this.ghosts.delete(byLabel.requestId);
    }
  }

  private renderUserList(vm: ViewModel): void {
    this.userListEl.innerHTML = "";
    for (const user of vm.userList) {
      const li = this.doc.createElement("li");
      li.setAttribute("data-user-id", user.id);
      const swatch = this.doc.createElement("span");
      swatch.className = "swatch";
      swatch.style.backgroundColor = rgb(user.color);
      li.append(swatch, `${user.name}${user.isSelf ? " (you)" : ""} [${user.platform}]`);
      this.userListEl.append(li);
    }
  }

  private renderTask(vm: ViewModel): void {
    const el = this.root.querySelector("#task-text");
    if (el) el.textContent = vm.taskDescription;
  }

  private renderDocuments(vm: ViewModel): void {
    this.docTableEl.innerHTML = "";
    for (const row of vm.documentList) {
      const tr = this.doc.createElement("tr");
      tr.setAttribute("data-doc-id", row.id);
      const id = this.doc.createElement("td");
      id.textContent = row.id;
      const title = this.doc.createElement("td");
      const link = this.doc.createElement("a");
      link.textContent = row.title;
      link.setAttribute("href", "#");
      link.addEventListener("click", (ev) => {
        ev.preventDefault();
        this.openDocument(row.id);
      });
      title.append(link);
      const using = this.doc.createElement("td");
      using.className = "using";
      using.textContent = row.usingUsers.join(", ");
      tr.append(id, title, using);
      this.docTableEl.append(tr);
    }
  }

  private renderDocumentBody(vm: ViewModel): void {
    this.docBodyEl.innerHTML = "";
    if (!vm.selectedDocument) {
      this.docBodyEl.textContent = "Select a document from the list.";
      return;
    }
    const h = this.doc.createElement("h3");
    h.textContent = vm.selectedDocument.title;
    const p = this.doc.createElement("p");
    p.textContent = vm.selectedDocument.body;
    this.docBodyEl.append(h, p);
  }

  private renderGraph(vm: ViewModel): void {
    this.linksG.innerHTML = "";
    this.nodesG.innerHTML = "";
    this.cursorsG.innerHTML = "";
    this.ghostsG.innerHTML = "";
    const d = this.doc;

    for (const link of vm.graph.links) {
      const [x1, y1] = this.worldToScreen(link.from);
      const [x2, y2] = this.worldToScreen(link.to);
      const line = d.createElementNS(SVG_NS, "line");
      line.setAttribute("data-link-id", link.id);
      line.setAttribute("x1", String(x1));
      line.setAttribute("y1", String(y1));
      line.setAttribute("x2", String(x2));
      line.setAttribute("y2", String(y2));
      line.setAttribute("stroke", link.isDefaultDocLink ? "#bbb" : "#555");
      if (link.isDefaultDocLink) line.setAttribute("stroke-dasharray", "4 3");
      this.linksG.append(line);
      if (link.label) {
        const text = d.createElementNS(SVG_NS, "text");
        text.setAttribute("x", String((x1 + x2) / 2));
        text.setAttribute("y", String((y1 + y2) / 2 - 3));
        text.setAttribute("class", "link-label");
        text.textContent = link.label;
        this.linksG.append(text);
      }
    }

    for (const node of vm.graph.nodes) {
      const [cx, cy] = this.worldToScreen(node.position);
      const r = NODE_RADIUS * Math.min(this.viewport.scale, 2);
      for (let i = 0; i < node.highlights.length; i++) {
        const square = d.createElementNS(SVG_NS, "rect");
        const pad = r + 4 + i * 3;
        square.setAttribute("class", "remote-highlight");
        square.setAttribute("data-highlight-node", node.id);
        square.setAttribute("x", String(cx - pad));
        square.setAttribute("y", String(cy - pad));
        square.setAttribute("width", String(2 * pad));
        square.setAttribute("height", String(2 * pad));
        square.setAttribute("fill", "none");
        square.setAttribute("stroke", rgb(node.highlights[i]!));
        square.setAttribute("stroke-width", "2");
        this.nodesG.append(square);
      }
      const circle = d.createElementNS(SVG_NS, "circle");
      circle.setAttribute("data-node-id", node.id);
      circle.setAttribute("cx", String(cx));
      circle.setAttribute("cy", String(cy));
      circle.setAttribute("r", String(r));
      circle.setAttribute("fill", node.isDocAnchor ? "#202020" : rgb(node.color));
      this.nodesG.append(circle);
      const label = d.createElementNS(SVG_NS, "text");
      label.setAttribute("class", "node-label");
      label.setAttribute("data-node-label", node.id);
      label.setAttribute("x", String(cx));
      label.setAttribute("y", String(cy - r - 4));
      label.setAttribute("text-anchor", "middle");
      label.textContent = node.label;
      this.nodesG.append(label);
    }

    for (const ghost of this.ghosts.values()) {
      const [cx, cy] = this.worldToScreen(ghost.position);
      const circle = d.createElementNS(SVG_NS, "circle");
      circle.setAttribute("class", "ghost");
      circle.setAttribute("cx", String(cx));
      circle.setAttribute("cy", String(cy));
      circle.setAttribute("r", String(NODE_RADIUS));
      circle.setAttribute("fill", "#888");
      circle.setAttribute("opacity", "0.35");
      this.ghostsG.append(circle);
    }

    for (const cursor of vm.graph.cursors) {
      const [cx, cy] = this.worldToScreen(cursor.position);
      const g = d.createElementNS(SVG_NS, "g");
      g.setAttribute("class", "remote-cursor");
      g.setAttribute("data-cursor-user", cursor.user);
      const dot = d.createElementNS(SVG_NS, "circle");
      dot.setAttribute("cx", String(cx));
      dot.setAttribute("cy", String(cy));
      dot.setAttribute("r", "4");
      dot.setAttribute("fill", rgb(cursor.color));
      const tag = d.createElementNS(SVG_NS, "text");
      tag.setAttribute("x", String(cx + 6));
      tag.setAttribute("y", String(cy - 6));
      tag.textContent = cursor.name;
      g.append(dot, tag);
      this.cursorsG.append(g);
    }
  }

  private renderMinimap(vm: ViewModel): void {
    this.minimapSvg.innerHTML = "";
    const d = this.doc;
    for (const node of vm.minimap.nodes) {
      const dot = d.createElementNS(SVG_NS, "circle");
      dot.setAttribute("cx", String(node.position[0]));
      dot.setAttribute("cy", String(node.position[1]));
      dot.setAttribute("r", "2");
      dot.setAttribute("fill", rgb(node.color));
      this.minimapSvg.append(dot);
    }
    for (const frustum of vm.minimap.frustums) {
      const poly = d.createElementNS(SVG_NS, "polygon");
      poly.setAttribute("class", "frustum");
      poly.setAttribute("data-frustum-user", frustum.user);
      poly.setAttribute("points", frustum.polygon.map((p) => `${p[0]},${p[1]}`).join(" "));
      poly.setAttribute("fill", "none");
      poly.setAttribute("stroke", rgb(frustum.color));
      this.minimapSvg.append(poly);
      const ray = d.createElementNS(SVG_NS, "line");
      ray.setAttribute("x1", String(frustum.ray[0][0]));
      ray.setAttribute("y1", String(frustum.ray[0][1]));
      ray.setAttribute("x2", String(frustum.ray[1][0]));
      ray.setAttribute("y2", String(frustum.ray[1][1]));
      ray.setAttribute("stroke", rgb(frustum.color));
      this.minimapSvg.append(ray);
    }
  }

  private renderBanner(vm: ViewModel): void {
    if (vm.protocolBanner) {
      this.bannerEl.textContent = vm.protocolBanner;
      this.bannerEl.style.display = "block";
    } else {
      this.bannerEl.style.display = "none";
    }
  }
}
