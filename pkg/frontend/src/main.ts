/**
 * Browser entry point. Connects over WebSocket framing; room and display
 * name come from URL parameters: ?room=rivergate-6&name=ana&server=host:port
 */

import { RoomClient } from "./client.js";
import { WebSocketTransport } from "./transport.js";
import { App } from "./ui.js";

function start(): void {
  const params = new URLSearchParams(location.search);
  const room = params.get("room") ?? "rivergate-6";
  const name = params.get("name") ?? `guest-${Math.floor(Math.random() * 1000)}`;
  const server = params.get("server") ?? location.host;

  const transport = new WebSocketTransport(`ws://${server}/ws`);
  const client = new RoomClient(transport, room);
  const container = document.getElementById("app");
  if (!container) throw new Error("missing #app container");
  new App(client, container);
  client.join(name, "flat2d");
  window.addEventListener("beforeunload", () => client.leave());
}

start();
