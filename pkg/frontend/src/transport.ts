/**
 * Transports deliver NDJSON lines both ways. The browser uses WebSocket
 * framing (one text frame = one line); tests inject a raw TCP transport.
 */

export interface Transport {
  send(line: string): void;
  onLine(handler: (line: string) => void): void;
  onClose(handler: () => void): void;
  close(): void;
}

export class WebSocketTransport implements Transport {
  private ws: WebSocket;
  private lineHandler: ((line: string) => void) | null = null;
  private closeHandler: (() => void) | null = null;
  private backlog: string[] = [];

  constructor(url: string) {
    this.ws = new WebSocket(url);
    this.ws.onopen = () => {
      for (const line of this.backlog) this.ws.send(line);
      this.backlog = [];
    };
    this.ws.onmessage = (ev) => this.lineHandler?.(String(ev.data));
    this.ws.onclose = () => this.closeHandler?.();
  }

  send(line: string): void {
    if (this.ws.readyState === WebSocket.OPEN) this.ws.send(line);
    else this.backlog.push(line);
  }

  onLine(handler: (line: string) => void): void {
    this.lineHandler = handler;
  }

  onClose(handler: () => void): void {
    this.closeHandler = handler;
  }

  close(): void {
    this.ws.close();
  }
}
