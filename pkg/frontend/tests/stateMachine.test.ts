import { readFileSync } from 'node:fs';

import { describe, expect, it } from 'vitest';

import { SessionView } from '../src/stateMachine.js';

interface Trace {
  name: string;
  terminal: string;
  events: Array<Record<string, unknown>>;
}

const fixture = JSON.parse(
  readFileSync(new URL('./fixtures/server_traces.json', import.meta.url), 'utf-8')
) as { traces: Trace[] };

describe('session state machine against recorded server traces', () => {
  it('accepts every event in every recorded trace', () => {
    for (const trace of fixture.traces) {
      const view = new SessionView();
      view.onConnecting();
      for (const ev of trace.events) {
        expect(view.onServerMessage(JSON.stringify(ev)), `${trace.name}: ${ev.type}`).toBe(true);
      }
      expect(view.protocolViolations).toBe(0);
      expect(view.state).toBe(trace.terminal);
    }
  });

  it('tracks queue position then promotion', () => {
    const trace = fixture.traces.find((t) => t.name === 'queued_then_promoted')!;
    const view = new SessionView();
    view.onConnecting();
    view.onServerMessage(JSON.stringify(trace.events[0]));
    expect(view.state).toBe('queued');
    expect(view.queuePosition).toBe(1);
    expect(view.canSelectSpeaker).toBe(false);
    view.onServerMessage(JSON.stringify(trace.events[1]));
    expect(view.state).toBe('active');
    expect(view.queuePosition).toBeNull();
    expect(view.canSelectSpeaker).toBe(true);
  });

  it('keeps the previous speaker highlighted when a selection errors', () => {
    const view = new SessionView();
    view.onServerEvent({ type: 'active' });
    view.selectSpeakerRequested('p001');
    view.onServerEvent({ type: 'speaker', id: 'p001' });
    expect(view.activeSpeaker).toBe('p001');
    view.selectSpeakerRequested('bogus');
    view.onServerEvent({ type: 'error', reason: 'unknown_speaker' });
    expect(view.activeSpeaker).toBe('p001');
    expect(view.pendingSpeaker).toBeNull();
    expect(view.lastError).toBe('unknown_speaker');
  });

  it('expiry is terminal even through a socket close', () => {
    const view = new SessionView();
    view.onServerEvent({ type: 'active' });
    view.onServerEvent({ type: 'expired' });
    view.onClose();
    expect(view.state).toBe('expired');
  });

  it('counts alphabet violations without crashing', () => {
    const view = new SessionView();
    expect(view.onServerMessage('{"type":"martian"}')).toBe(false);
    expect(view.onServerMessage('garbage')).toBe(false);
    expect(view.protocolViolations).toBe(2);
  });

  it('measures round trips from frame echo timing', () => {
    let t = 0;
    const view = new SessionView(() => t);
    view.onFrameSent(-20);
    t += 42;
    view.onFrameReceived(-22);
    expect(view.roundTripMs).toBe(42);
    expect(view.framesSent).toBe(1);
    expect(view.framesReceived).toBe(1);
  });
});
