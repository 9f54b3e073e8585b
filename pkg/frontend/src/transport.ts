// Transport abstraction: the client speaks the wire protocol over anything
// duplex. Production uses a WebSocket; tests use an in-process pair wired to
// a local echo server that implements the same protocol.

export type WireData = string | ArrayBuffer;

export interface Transport {
  send(data: WireData): void;
  close(): void;
  onMessage(cb: (data: WireData) => void): void;
  onOpen(cb: () => void): void;
  onClose(cb: () => void): void;
}

export class WebSocketTransport implements Transport {
  private ws: WebSocket;

  constructor(url: string) {
    this.ws = new WebSocket(url);
    this.ws.binaryType = 'arraybuffer';
  }

  send(data: WireData): void {
    this.ws.send(data);
  }

  close(): void {
    this.ws.close();
  }

  onMessage(cb: (data: WireData) => void): void {
    this.ws.addEventListener('message', (ev) => cb(ev.data as WireData));
  }

  onOpen(cb: () => void): void {
    this.ws.addEventListener('open', cb);
  }

  onClose(cb: () => void): void {
    this.ws.addEventListener('close', cb);
  }
}

/** One side of an in-process duplex pair; delivery is async (microtask). */
export class LoopbackEndpoint implements Transport {
  private peer: LoopbackEndpoint | null = null;
  private messageCbs: Array<(data: WireData) => void> = [];
  private openCbs: Array<() => void> = [];
  private closeCbs: Array<() => void> = [];
  private closed = false;

  static pair(): [LoopbackEndpoint, LoopbackEndpoint] {
    const a = new LoopbackEndpoint();
    const b = new LoopbackEndpoint();
    a.peer = b;
    b.peer = a;
    queueMicrotask(() => {
      a.openCbs.forEach((cb) => cb());
      b.openCbs.forEach((cb) => cb());
    });
    return [a, b];
  }

  send(data: WireData): void {
    if (this.closed || !this.peer) return;
    const target = this.peer;
    queueMicrotask(() => {
      if (!target.closed) target.messageCbs.forEach((cb) => cb(data));
    });
  }

  close(): void {
    if (this.closed) return;
    this.closed = true;
    const target = this.peer;
    queueMicrotask(() => {
      this.closeCbs.forEach((cb) => cb());
      if (target && !target.closed) {
        target.closed = true;
        target.closeCbs.forEach((cb) => cb());
      }
    });
  }

  onMessage(cb: (data: WireData) => void): void {
    this.messageCbs.push(cb);
  }

  onOpen(cb: () => void): void {
    this.openCbs.push(cb);
  }

  onClose(cb: () => void): void {
    this.closeCbs.push(cb);
  }

  /** Run queued microtask deliveries to completion (test helper). */
  static async settle(): Promise<void> {
    for (let i = 0; i < 16; i++) await Promise.resolve();
  }
}
