// Browser entry point: microphone capture at 16 kHz, duplex streaming to the
// conversion service, jitter-buffered playback, speaker grid, live meters.

import { ConversionClient } from './client.js';
import { SAMPLE_RATE } from './protocol.js';
import { WebSocketTransport } from './transport.js';

interface SpeakerInfo {
  id: string;
  name: string;
}

const el = (id: string) => document.getElementById(id) as HTMLElement;

let client: ConversionClient | null = null;
let context: AudioContext | null = null;
let uiTimer: number | null = null;

async function loadSpeakers(): Promise<SpeakerInfo[]> {
  const res = await fetch('/speakers');
  if (!res.ok) throw new Error(`speaker catalog unavailable (${res.status})`);
  return (await res.json()).speakers as SpeakerInfo[];
}

function renderSpeakerGrid(speakers: SpeakerInfo[]): void {
  const grid = el('speakers');
  grid.innerHTML = '';
  for (const s of speakers) {
    const btn = document.createElement('button');
    btn.className = 'speaker';
    btn.textContent = s.name;
    btn.dataset.id = s.id;
    btn.onclick = () => {
      if (client && client.view.canSelectSpeaker) client.selectSpeaker(s.id);
    };
    grid.appendChild(btn);
  }
}

function refreshUi(): void {
  if (!client) return;
  const v = client.view;
  el('status').textContent =
    v.state === 'queued' ? `queued (position ${v.queuePosition})` : v.state;
  el('rtt').textContent = v.roundTripMs === null ? '-' : `${v.roundTripMs.toFixed(0)} ms`;
  el('underruns').textContent = String(client.underruns);
  el('frames').textContent = `${v.framesSent} sent / ${v.framesReceived} received`;
  el('error').textContent = v.lastError ?? '';
  (el('meter-in') as HTMLProgressElement).value = Math.max(0, v.inputLevelDb + 90);
  (el('meter-out') as HTMLProgressElement).value = Math.max(0, v.outputLevelDb + 90);
  document.querySelectorAll<HTMLButtonElement>('.speaker').forEach((btn) => {
    btn.classList.toggle('selected', btn.dataset.id === v.activeSpeaker);
    btn.disabled = !v.canSelectSpeaker;
  });
}

async function start(): Promise<void> {
  let stream: MediaStream;
  try {
    stream = await navigator.mediaDevices.getUserMedia({
      audio: { channelCount: 1, echoCancellation: true },
    });
  } catch {
    el('error').textContent =
      'Microphone permission denied. Allow access in the browser settings and retry.';
    return;
  }

  context = new AudioContext({ sampleRate: SAMPLE_RATE });
  await context.audioWorklet.addModule('dist/captureWorklet.js');
  await context.audioWorklet.addModule('dist/playbackWorklet.js');

  const proto = location.protocol === 'https:' ? 'wss' : 'ws';
  const transport = new WebSocketTransport(`${proto}://${location.host}/stream`);
  client = new ConversionClient(transport, { deviceSampleRate: context.sampleRate });

  const source = context.createMediaStreamSource(stream);
  const capture = new AudioWorkletNode(context, 'capture');
  const playback = new AudioWorkletNode(context, 'playback');
  source.connect(capture);
  playback.connect(context.destination);

  capture.port.onmessage = (ev: MessageEvent) => {
    client?.sendAudio(ev.data as Float32Array);
  };
  playback.port.onmessage = () => {
    if (client) playback.port.postMessage(client.pullPlayback());
  };

  stream.getAudioTracks()[0].addEventListener('ended', () => {
    el('error').textContent = 'Audio device lost; refresh the page to reconnect.';
    stop();
  });

  el('start').setAttribute('disabled', '');
  el('stop').removeAttribute('disabled');
  uiTimer = window.setInterval(refreshUi, 100);
}

function stop(): void {
  client?.bye();
  client = null;
  context?.close();
  context = null;
  if (uiTimer !== null) window.clearInterval(uiTimer);
  el('stop').setAttribute('disabled', '');
  el('start').removeAttribute('disabled');
  el('status').textContent = 'disconnected';
}

async function init(): Promise<void> {
  try {
    renderSpeakerGrid(await loadSpeakers());
  } catch (err) {
    el('error').textContent = String(err);
  }
  el('start').onclick = () => void start();
  el('stop').onclick = stop;
}

void init();
