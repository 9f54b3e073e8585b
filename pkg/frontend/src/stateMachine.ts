// Client session view: a reducer over the server's event alphabet plus the
// local socket lifecycle. All UI state derives from wire events and the
// local audio clock; nothing is guessed.

import { ServerEvent, parseServerEvent } from './protocol.js';

export type ConnectionState =
  | 'disconnected'
  | 'connecting'
  | 'queued'
  | 'active'
  | 'expired'
  | 'closed';

export class SessionView {
  state: ConnectionState = 'disconnected';
  queuePosition: number | null = null;
  activeSpeaker: string | null = null;
  pendingSpeaker: string | null = null;
  lastError: string | null = null;
  framesSent = 0;
  framesReceived = 0;
  inputLevelDb = -90;
  outputLevelDb = -90;
  roundTripMs: number | null = null;
  protocolViolations = 0;

  private sendTimes: number[] = [];
  private readonly now: () => number;

  constructor(now: () => number = () => Date.now()) {
    this.now = now;
  }

  onConnecting(): void {
    this.state = 'connecting';
  }

  onClose(): void {
    if (this.state !== 'expired') this.state = 'closed';
  }

  /** Feed a raw server text message; false when it violates the alphabet. */
  onServerMessage(text: string): boolean {
    const ev = parseServerEvent(text);
    if (ev === null) {
      this.protocolViolations += 1;
      return false;
    }
    this.onServerEvent(ev);
    return true;
  }

  onServerEvent(ev: ServerEvent): void {
    switch (ev.type) {
      case 'active':
        this.state = 'active';
        this.queuePosition = null;
        break;
      case 'queue':
        this.state = 'queued';
        this.queuePosition = ev.position;
        break;
      case 'expired':
        this.state = 'expired';
        break;
      case 'speaker':
        this.activeSpeaker = ev.id;
        this.pendingSpeaker = null;
        break;
      case 'error':
        this.lastError = ev.reason;
        // A rejected selection keeps the previous speaker highlighted.
        this.pendingSpeaker = null;
        break;
      case 'stats':
        break;
    }
  }

  selectSpeakerRequested(id: string): void {
    this.pendingSpeaker = id;
  }

  get canSelectSpeaker(): boolean {
    return this.state === 'active';
  }

  onFrameSent(levelDb: number): void {
    this.framesSent += 1;
    this.inputLevelDb = levelDb;
    this.sendTimes.push(this.now());
  }

  onFrameReceived(levelDb: number): void {
    this.framesReceived += 1;
    this.outputLevelDb = levelDb;
    const sentAt = this.sendTimes.shift();
    if (sentAt !== undefined) this.roundTripMs = this.now() - sentAt;
  }
}
