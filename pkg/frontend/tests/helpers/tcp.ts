/** Raw TCP NDJSON transport for Node-side tests (browsers use WebSocket). */

import net from "node:net";
import type { Transport } from "../../src/transport.js";

export class TcpTransport implements Transport {
  private socket: net.Socket;
  private buffer = "";
  private lineHandler: ((line: string) => void) | null = null;
  private closeHandler: (() => void) | null = null;
  private backlog: string[] = [];
  private connected = false;

  constructor(host: string, port: number) {
    this.socket = net.createConnection({ host, port }, () => {
      this.connected = true;
      for (const line of this.backlog) this.socket.write(line);
      this.backlog = [];
    });
    this.socket.setNoDelay(true);
    this.socket.on("data", (chunk) => {
      this.buffer += chunk.toString("utf-8");
      for (;;) {
        const nl = this.buffer.indexOf("\n");
        if (nl < 0) break;
        const line = this.buffer.slice(0, nl);
        this.buffer = this.buffer.slice(nl + 1);
        if (line.trim()) this.lineHandler?.(line);
      }
    });
    this.socket.on("close", () => this.closeHandler?.());
    this.socket.on("error", () => undefined);
  }

  send(line: string): void {
    if (this.connected) this.socket.write(line);
    else this.backlog.push(line);
  }

  onLine(handler: (line: string) => void): void {
    this.lineHandler = handler;
  }

  onClose(handler: () => void): void {
    this.closeHandler = handler;
  }

  close(): void {
    this.socket.end();
  }
}
