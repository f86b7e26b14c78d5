// @vitest-environment jsdom
//
// End-to-end smoke against the real Python server over the NDJSON wire
// protocol on loopback: two clients join one room, edits propagate within
// the latency budget, awareness renders, and rejections surface as toasts.

import { spawn, type ChildProcess } from "node:child_process";
import net from "node:net";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { RoomClient } from "../src/client.js";
import { App } from "../src/ui.js";
import { TcpTransport } from "./helpers/tcp.js";

const PORT = 7640 + Math.floor(Math.random() * 200);
const ROOM = "rivergate-6";

let server: ChildProcess;

function waitForPort(port: number, timeoutMs = 15000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  return new Promise((resolve, reject) => {
    const attempt = () => {
      const socket = net.createConnection({ host: "127.0.0.1", port }, () => {
        socket.end();
        resolve();
      });
      socket.on("error", () => {
        socket.destroy();
        if (Date.now() > deadline) reject(new Error(`server never opened :${port}`));
        else setTimeout(attempt, 100);
      });
    };
    attempt();
  });
}

async function until(predicate: () => boolean, timeoutMs: number, what: string): Promise<number> {
  const start = performance.now();
  for (;;) {
    if (predicate()) return performance.now() - start;
    if (performance.now() - start > timeoutMs) throw new Error(`timed out waiting for ${what}`);
    await new Promise((r) => setTimeout(r, 10));
  }
}

interface TestClient {
  client: RoomClient;
  app: App;
  container: HTMLElement;
}

function makeClient(name: string): TestClient {
  const container = document.createElement("div");
  container.id = `app-${name}`;
  document.body.append(container);
  const transport = new TcpTransport("127.0.0.1", PORT);
  const client = new RoomClient(transport, ROOM);
  const app = new App(client, container);
  client.join(name, "flat2d");
  return { client, app, container };
}

beforeAll(async () => {
  server = spawn(
    "python3",
    ["-m", "visrooms.cli", "serve", "--config", ROOM, "--listen", `127.0.0.1:${PORT}`],
    { stdio: ["ignore", "inherit", "inherit"] },
  );
  await waitForPort(PORT);
}, 30000);

afterAll(() => {
  server?.kill();
});

describe("two clients against the live server", () => {
  let ana: TestClient;
  let bo: TestClient;

  it("both clients join and see the corpus snapshot", async () => {
    ana = makeClient("ana");
    bo = makeClient("bo");
    await until(() => ana.client.replica.userId !== null, 5000, "ana join");
    await until(() => bo.client.replica.userId !== null, 5000, "bo join");
    await until(
      () => ana.container.querySelectorAll("#documents tbody tr").length === 6,
      5000,
      "ana documents",
    );
    expect(bo.container.querySelectorAll("circle[data-node-id]").length).toBe(6); // doc anchors
    await until(() => [...ana.container.querySelectorAll("#user-list li")].length === 2, 5000, "roster");
  });

  it("a node added in one client appears in the other within 500 ms", async () => {
    ana.app.addNode("stolen manifest", [30, 20]);
    const elapsed = await until(
      () =>
        [...bo.container.querySelectorAll("text[data-node-label]")].some(
          (el) => el.textContent === "stolen manifest",
        ),
      2000,
      "node propagation",
    );
    expect(elapsed).toBeLessThan(500);
    expect(ana.client.replica.graph.version).toBeGreaterThanOrEqual(1);
  });

  it("remote cursor and Using-column status render", async () => {
    // bo opens a document: ana's Using column shows bo
    const link = bo.container.querySelector('tr[data-doc-id="d01"] a') as HTMLAnchorElement;
    link.click();
    await until(
      () => ana.container.querySelector('tr[data-doc-id="d01"] .using')?.textContent === "bo",
      2000,
      "Using column",
    );

    // bo's pointer becomes a cursor in ana's view
    bo.client.publishCursorAt([10, 10]);
    bo.client.flushAwareness();
    await until(
      () => ana.container.querySelector("g.remote-cursor") !== null,
      2000,
      "remote cursor",
    );
    const cursor = ana.container.querySelector("g.remote-cursor")!;
    expect(cursor.textContent).toContain("bo");
  });

  it("a duplicate link is rejected by the server and surfaces as a toast", async () => {
    const ids = Object.keys(ana.client.replica.graph.nodes).sort();
    const [a, b] = [ids[0]!, ids[1]!];
    ana.app.addLink(a, b, "first");
    await until(
      () => Object.values(ana.client.replica.graph.links).some((l) => l.label === "first"),
      2000,
      "first link applied",
    );
    ana.app.addLink(b, a, "second"); // same unordered pair: server rejects
    await until(
      () => [...ana.container.querySelectorAll(".toast")].some((t) => t.textContent?.includes("DuplicateLink")),
      2000,
      "rejection toast",
    );
    // the rejection is private: bo saw no toast and no second link
    expect(bo.container.querySelectorAll(".toast").length).toBe(0);
    expect(Object.keys(bo.client.replica.graph.links)).toHaveLength(
      Object.keys(ana.client.replica.graph.links).length,
    );
  });

  it("clients leave cleanly", () => {
    ana.client.leave();
    bo.client.leave();
  });
});
