"""Operator command line: offline conversion, enrollment, streaming
self-test, latency benchmark, noise sweep, synthetic probes, and the server.

Exit codes are fixed for CI consumption: 0 ok, 1 internal error, 2 bad
input, 3 deadline violation, 4 streaming/offline equivalence failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import audio_io, report, runtime, speaker as speaker_mod, vocoder
from .errors import ArtivocError
from .eval_harness import NOISE_COLORS, run_sweep
from .frontend import FrameSpec

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2
EXIT_DEADLINE = 3
EXIT_EQUIVALENCE = 4

ENV_CONFIG = "RTVC_CONFIG"


class CliInputError(Exception):
    pass


class DeadlineExceeded(Exception):
    pass


class EquivalenceFailure(Exception):
    pass


def _load_config(path: str | None) -> runtime.PipelineConfig:
    path = path or os.environ.get(ENV_CONFIG)
    if path is None:
        return runtime.default_config()
    if not os.path.exists(path):
        raise CliInputError(f"config file not found: {path}")
    return runtime.load_config(path)


def _config_base(path: str | None) -> str | None:
    path = path or os.environ.get(ENV_CONFIG)
    return os.path.dirname(os.path.abspath(path)) if path else None


def _require_file(path: str, kind: str) -> str:
    if not os.path.isfile(path):
        raise CliInputError(f"{kind} not found: {path}")
    return path


def _load_speaker(args) -> tuple[speaker_mod.SpeakerEmbedding, float]:
    """Resolve --speaker: a .spke file (median from --m-tgt or sidecar JSON)
    or a catalog id when --catalog is given."""
    ref = args.speaker
    if args.catalog:
        from .service import load_catalog

        catalog = load_catalog(_require_file(args.catalog, "catalog"))
        entry = catalog.get(ref)
        if entry is None:
            raise CliInputError(f"speaker id {ref!r} not in catalog")
        base = os.path.dirname(os.path.abspath(args.catalog))
        path = entry.embedding_path
        if not os.path.isabs(path):
            path = os.path.join(base, path)
        return speaker_mod.load_embedding(_require_file(path, "embedding"), ref), entry.m_tgt_hz
    _require_file(ref, "speaker file")
    embedding = speaker_mod.load_embedding(ref)
    m_tgt = getattr(args, "m_tgt", None)
    if m_tgt is None:
        sidecar = os.path.splitext(ref)[0] + ".json"
        if os.path.isfile(sidecar):
            with open(sidecar, "r", encoding="utf-8") as fh:
                m_tgt = json.load(fh).get("m_tgt_hz")
    if m_tgt is None:
        raise CliInputError(
            "no pitch median for this speaker: pass --m-tgt or keep the sidecar JSON"
        )
    return embedding, float(m_tgt)


def _read_wav_16k(path: str, spec: FrameSpec) -> np.ndarray:
    signal, rate = audio_io.read_wav(_require_file(path, "input WAV"))
    if rate != spec.sample_rate:
        raise CliInputError(f"{path}: expected {spec.sample_rate} Hz WAV, got {rate}")
    return signal


def cmd_convert(args) -> int:
    config = _load_config(args.config)
    signal = _read_wav_16k(args.infile, config.frame_spec)
    embedding, m_tgt = _load_speaker(args)
    models = runtime.build_models(config, _config_base(args.config))

    import time

    t0 = time.perf_counter()
    audio = runtime.convert_offline(signal, embedding, m_tgt, config, models)
    elapsed = time.perf_counter() - t0

    tmp = args.out + ".tmp"
    audio_io.write_wav(tmp, audio, config.frame_spec.sample_rate)
    os.replace(tmp, args.out)
    duration = audio.size / config.frame_spec.sample_rate
    print(f"wrote {args.out}: {duration:.2f} s, rtf {elapsed / duration:.3f}")
    return EXIT_OK


def cmd_enroll(args) -> int:
    config = _load_config(args.config)
    signal = _read_wav_16k(args.infile, config.frame_spec)
    models = runtime.build_models(config, _config_base(args.config))
    result = speaker_mod.enroll(
        signal, models.graphs, models.weights, config.frame_spec, source_id=args.id
    )
    speaker_mod.save_embedding(result.embedding, args.out)
    sidecar = os.path.splitext(args.out)[0] + ".json"
    with open(sidecar, "w", encoding="utf-8") as fh:
        json.dump(
            {"id": args.id, "m_tgt_hz": result.median_f0_hz,
             "voiced_fraction": result.voiced_fraction},
            fh, indent=2,
        )
    if args.catalog:
        from .service import CatalogEntry, SpeakerCatalog, load_catalog

        if os.path.exists(args.catalog):
            catalog = load_catalog(args.catalog)
        else:
            catalog = SpeakerCatalog([], path=args.catalog)
        rel = os.path.relpath(
            os.path.abspath(args.out), os.path.dirname(os.path.abspath(args.catalog)) or "."
        )
        catalog.add(CatalogEntry(args.id, args.name or args.id, rel, result.median_f0_hz))
        catalog.save(args.catalog)
    print(
        f"enrolled {args.id}: median f0 {result.median_f0_hz:.1f} Hz, "
        f"voiced {100 * result.voiced_fraction:.0f}%"
    )
    return EXIT_OK


def cmd_stream_sim(args) -> int:
    config = _load_config(args.config)
    if args.infile:
        signal = _read_wav_16k(args.infile, config.frame_spec)
    else:
        rng = np.random.default_rng(args.seed)
        signal = rng.uniform(-0.5, 0.5, args.seconds * config.frame_spec.sample_rate)
    models = runtime.build_models(config, _config_base(args.config))
    embedding = speaker_mod.SpeakerEmbedding(np.zeros(128, np.float32), "self-test")
    m_tgt = config.default_median_hz

    chunk_ms_list = [int(v) for v in args.chunk_ms.split(",")]
    for ms in chunk_ms_list:
        if ms <= 0 or (ms * config.frame_spec.sample_rate) % (1000 * config.chunk_samples):
            raise CliInputError(f"chunk size {ms} ms is not a whole number of chunks")

    offline = runtime.convert_offline(signal, embedding, m_tgt, config, models)
    delay = runtime.stream_delay_samples(config)
    worst = 0.0
    failed = None
    for ms in chunk_ms_list:
        block = ms * config.frame_spec.sample_rate // 1000
        session = runtime.Session(config, models, embedding, m_tgt)
        n_blocks = signal.size // block
        out = []
        for b in range(n_blocks):
            if args.corrupt_state and b == n_blocks // 2:
                # Test hook: damage a ring buffer to prove the check can fail.
                session._source_state.buffers[3] += 1.0
            out.append(session.process(signal[b * block : (b + 1) * block].astype(np.float32)))
        stream = np.concatenate(out)
        n = min(stream.size - delay, offline.size)
        diff = float(np.max(np.abs(stream[delay : delay + n] - offline[:n])))
        status = "ok" if diff <= args.tolerance else "FAIL"
        print(f"chunk {ms:3d} ms: max abs diff {diff:.3e} [{status}]")
        if diff > worst:
            worst = diff
            if diff > args.tolerance:
                failed = (ms, int(np.argmax(np.abs(stream[delay : delay + n] - offline[:n]))))
    if failed is not None:
        raise EquivalenceFailure(
            f"worst offender: chunk {failed[0]} ms at sample {failed[1]} (diff {worst:.3e})"
        )
    return EXIT_OK


def cmd_bench(args) -> int:
    config = _load_config(args.config)
    if args.mock_processing_ms is not None:
        rep = runtime.mock_latency_report(config, args.mock_processing_ms)
    else:
        if args.seconds <= 0:
            raise CliInputError("--seconds must be positive")
        models = runtime.build_models(config, _config_base(args.config))
        embedding = speaker_mod.SpeakerEmbedding(np.zeros(128, np.float32), "bench")
        session = runtime.Session(config, models, embedding, config.default_median_hz)
        rng = np.random.default_rng(0)
        signal = rng.uniform(-0.3, 0.3, args.seconds * config.frame_spec.sample_rate)
        rep = runtime.measure_latency(session, signal.astype(np.float32))

    print(f"t_lookahead_ms:  {rep.t_lookahead_ms:.1f}")
    print(f"t_chunksize_ms:  {rep.t_chunksize_ms:.1f}")
    print(f"t_processing_ms: {rep.t_processing_ms:.2f} (p95 {rep.t_processing_p95_ms:.2f})")
    print(f"total_ms:        {rep.total_ms:.1f}")
    print(f"rtf:             {rep.rtf:.3f}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rep.as_dict(), fh, indent=2)
    if args.figure:
        report.plot_latency(rep.as_dict(), args.figure)
    if args.strict and rep.rtf >= 1.0:
        raise DeadlineExceeded(f"rtf {rep.rtf:.3f} >= 1.0")
    return EXIT_OK


def _parse_snr(text: str) -> list[float]:
    out = []
    for tok in text.split(","):
        tok = tok.strip().lower()
        out.append(math.inf if tok in ("inf", "+inf") else float(tok))
    return out


def cmd_noise_eval(args) -> int:
    config = _load_config(args.config)
    if not os.path.isdir(args.dir):
        raise CliInputError(f"not a directory: {args.dir}")
    wavs = sorted(
        os.path.join(args.dir, f) for f in os.listdir(args.dir) if f.lower().endswith(".wav")
    )
    if not wavs:
        raise CliInputError(f"no WAV files in {args.dir}")
    sources = [_read_wav_16k(p, config.frame_spec) for p in wavs]
    embedding, m_tgt = _load_speaker(args)
    models = runtime.build_models(config, _config_base(args.config))

    colors = [c.strip() for c in args.colors.split(",")]
    for c in colors:
        if c not in NOISE_COLORS:
            raise CliInputError(f"unknown noise color {c!r}")
    rows = run_sweep(config, models, sources, embedding, m_tgt, _parse_snr(args.snr), colors)
    report.save_sweep_csv(rows, args.out)
    figure = args.figure or os.path.splitext(args.out)[0] + ".png"
    if figure != "none":
        report.plot_sweep(rows, figure)
        print(f"wrote {args.out} and {figure} ({len(rows)} rows)")
    else:
        print(f"wrote {args.out} ({len(rows)} rows)")
    return EXIT_OK


def cmd_synth_probe(args) -> int:
    """Emit the oracle signals the acceptance checks are built on: a pure
    single-harmonic tone, flat and low-passed filtered noise, and a pitched
    sweep usable as test speech."""
    os.makedirs(args.out_dir, exist_ok=True)
    sr = 16000
    seconds = args.seconds
    frames = seconds * 200

    from .graphs import HARMONICS, NOISE_BANDS, default_registry

    registry = default_registry()
    written = []

    def probe_state():
        return vocoder.make_synth_state(registry["vocoder_post"], noise_seed=args.seed)

    one_hot = np.zeros((frames, HARMONICS))
    one_hot[:, 0] = 1.0
    tone = vocoder.synth_harmonic(
        np.full(frames, 200.0),
        vocoder.HarmonicControls(np.full(frames, 0.8), one_hot),
        probe_state(),
    )
    written.append(("tone_200hz.wav", tone))

    flat = vocoder.synth_noise(
        vocoder.NoiseControls(np.full((frames, NOISE_BANDS), 1.0)), probe_state()
    )
    written.append(("noise_flat.wav", 0.5 * flat / np.abs(flat).max()))

    edges = np.linspace(0, sr / 2, NOISE_BANDS)
    lowpass = vocoder.synth_noise(
        vocoder.NoiseControls(np.tile((edges < 2000.0).astype(float), (frames, 1))),
        probe_state(),
    )
    written.append(("noise_lowpass.wav", 0.5 * lowpass / np.abs(lowpass).max()))

    f0 = 150.0 + 100.0 * np.sin(np.linspace(0, 2 * np.pi * seconds / 2.0, frames))
    rich = np.zeros((frames, HARMONICS))
    rich[:, :8] = 1.0 / 8.0
    sweep = vocoder.synth_harmonic(
        f0, vocoder.HarmonicControls(np.full(frames, 0.6), rich), probe_state()
    )
    written.append(("sweep.wav", sweep))

    for name, signal in written:
        path = os.path.join(args.out_dir, name)
        audio_io.write_wav(path, signal, sr)
        if args.figures:
            report.plot_spectrum(signal, sr, os.path.splitext(path)[0] + ".png", title=name)
    print(f"wrote {len(written)} probe signals to {args.out_dir}")
    return EXIT_OK


def cmd_serve(args) -> int:
    config = _load_config(args.config)
    models = runtime.build_models(config, _config_base(args.config))
    from .service import create_app, load_catalog

    catalog = load_catalog(_require_file(args.catalog, "catalog"))
    if not catalog.entries:
        raise CliInputError("catalog has no speakers; enroll at least one first")
    if args.web and not os.path.isdir(args.web):
        raise CliInputError(f"web root not found: {args.web}")
    app = create_app(config, models, catalog, admin_enabled=args.admin,
                     web_root=args.web)

    import uvicorn

    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="artivoc",
        description="Real-time articulatory voice conversion toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="convert a WAV offline")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--speaker", required=True, help=".spke file or catalog id")
    p.add_argument("--catalog", help="catalog JSON when --speaker is an id")
    p.add_argument("--m-tgt", dest="m_tgt", type=float, help="target pitch median (Hz)")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("enroll", help="enroll a target speaker from a WAV")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--id", required=True)
    p.add_argument("--name")
    p.add_argument("--out", required=True, help="embedding output path (.spke)")
    p.add_argument("--catalog", help="append to this catalog JSON")
    p.add_argument("--config")
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("stream-sim", help="verify streaming equals offline")
    p.add_argument("--config")
    p.add_argument("--in", dest="infile")
    p.add_argument("--seconds", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--chunk-ms", dest="chunk_ms", default="15,30,45")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--corrupt-state", dest="corrupt_state", action="store_true",
                   help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_stream_sim)

    p = sub.add_parser("bench", help="latency benchmark")
    p.add_argument("--config")
    p.add_argument("--seconds", type=int, default=3)
    p.add_argument("--mock-processing-ms", dest="mock_processing_ms", type=float,
                   help="skip the pipeline and report this processing time")
    p.add_argument("--strict", action="store_true", help="exit 3 unless rtf < 1")
    p.add_argument("--json", help="write the report as JSON")
    p.add_argument("--figure", help="write a latency budget figure (PNG)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("noise-eval", help="noise robustness sweep")
    p.add_argument("--config")
    p.add_argument("--dir", required=True, help="directory of source WAVs")
    p.add_argument("--speaker", required=True)
    p.add_argument("--catalog")
    p.add_argument("--m-tgt", dest="m_tgt", type=float)
    p.add_argument("--snr", default="0,10,20,inf")
    p.add_argument("--colors", default=",".join(NOISE_COLORS))
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--figure", help="figure path (default: CSV path with .png, 'none' to skip)")
    p.set_defaults(func=cmd_noise_eval)

    p = sub.add_parser("synth-probe", help="emit oracle test signals")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--seconds", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--figures", action="store_true")
    p.set_defaults(func=cmd_synth_probe)

    p = sub.add_parser("serve", help="run the streaming service")
    p.add_argument("--config")
    p.add_argument("--catalog", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--admin", action="store_true", help="enable POST /enroll")
    p.add_argument("--web", help="serve the browser client from this directory")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DeadlineExceeded as exc:
        print(f"deadline: {exc}", file=sys.stderr)
        return EXIT_DEADLINE
    except EquivalenceFailure as exc:
        print(f"equivalence: {exc}", file=sys.stderr)
        return EXIT_EQUIVALENCE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ArtivocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - map anything else to internal
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
