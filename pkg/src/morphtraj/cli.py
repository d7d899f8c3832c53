"""Command-line entry point.

Subcommands: ``morph`` (search + render + manifest), ``alphas`` (search
only), ``eval`` (metric report, CSV row, figures), ``plot`` (PGM
spectrogram tiles and strip). Every run writes a ``run.json`` echoing the
fully resolved configuration so runs are reproducible from artifacts
alone. A flat ``key = value`` config file can seed any run; flags win.

Output layout for morph runs::

    <out>/run.json
    <out>/schedule.json
    <out>/manifest.json
    <out>/clips/NN.wav          (+ source.wav, target.wav, dynamic.wav)
    <out>/plots/NN.pgm          (with --plot)
    <out>/report.json           (written later by eval)
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import shutil
import sys
from pathlib import Path

import numpy as np

from morphtraj import audio, figures
from morphtraj.backends import build_backend, parse_backend
from morphtraj.evaluate import (
    CSV_FIELDS,
    ExternalCommandDistance,
    ExternalCommandEmbedding,
    LogMelDistance,
    MelStatsEmbedding,
    evaluate,
    timbre_points,
    _consecutive_distances,
)
from morphtraj.features import pgm_bytes, log_mel
from morphtraj.modes import cyclostationary_morph, dynamic_morph, load_trajectory, save_trajectory, static_morph
from morphtraj.spdp import SearchConfig, binary_search_alphas

ENDPOINT_ENV = "MORPHTRAJ_ENDPOINT"

DEFAULTS = {
    "backend": "linear-mel",
    "mode": "cyclostationary",
    "n": 5,
    "tol": 1e-2,
    "max_iters": 40,
    "feature": "log-mel",
    "target_p": 0.5,
    "pad_policy": "pad",
    "prompt": "",
    "distance": "lmd",
    "plot": False,
}


class CliError(Exception):
    pass


def parse_config_file(path) -> dict:
    """Flat ``key = value`` lines; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _coerce(key: str, value):
    if key in ("n", "max_iters"):
        return int(value)
    if key in ("tol", "target_p"):
        return float(value)
    if key == "plot":
        return value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes", "on")
    return value


def resolve_config(args, required=()) -> dict:
    """defaults < config file < flags; returns the materialized run config."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        for k, v in parse_config_file(args.config).items():
            cfg[k] = _coerce(k, v)
    for key in ("source", "target", "backend", "mode", "n", "tol", "max_iters",
                "feature", "target_p", "pad_policy", "prompt", "distance", "plot", "out"):
        val = getattr(args, key, None)
        if val is not None and val is not False:
            cfg[key] = _coerce(key, val)
    for key in required:
        if not cfg.get(key):
            raise CliError(f"missing required option --{key.replace('_', '-')}")
    for key in ("source", "target"):
        if key in required and not Path(cfg[key]).exists():
            raise CliError(f"{key} file not found: {cfg[key]}")
    return cfg


class _RunDir:
    """Tracks files this run creates so a failed run leaves nothing behind."""

    def __init__(self, out):
        self.root = Path(out)
        self.created_root = not self.root.exists()
        self.root.mkdir(parents=True, exist_ok=True)
        self.written: list[Path] = []

    def path(self, rel: str) -> Path:
        p = self.root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        self.written.append(p)
        return p

    def discard(self):
        if self.created_root:
            shutil.rmtree(self.root, ignore_errors=True)
            return
        for p in self.written:
            p.unlink(missing_ok=True)


def _write_run_json(run: _RunDir, cfg: dict, endpoint_from_env: bool):
    echo = dict(cfg)
    if endpoint_from_env:
        echo["backend"] = f"remote:${ENDPOINT_ENV}"  # no secrets in artifacts
    run.path("run.json").write_text(json.dumps(echo, indent=2, sort_keys=True))


def _build(cfg: dict, run: _RunDir | None):
    """Load + prepare the pair and construct backend and search config."""
    pair = audio.prepare_pair(
        audio.load_wav(cfg["source"]), audio.load_wav(cfg["target"]), policy=cfg["pad_policy"]
    )
    backend_text = cfg["backend"]
    endpoint_env = os.environ.get(ENDPOINT_ENV)
    endpoint_from_env = False
    if backend_text == "remote" or (backend_text.startswith("remote") and endpoint_env):
        if endpoint_env:
            backend_text = f"remote:{endpoint_env}"
            endpoint_from_env = True
    desc = parse_backend(backend_text)
    cache_dir = (run.root / "cache") if (run is not None and desc.kind == "remote") else None
    search = SearchConfig(n_points=cfg["n"], tol=cfg["tol"], max_iters=cfg["max_iters"],
                          feature=cfg["feature"])
    backend = build_backend(desc, pair, stft_cfg=search.stft, prompt=cfg["prompt"],
                            cache_dir=cache_dir)
    return pair, backend, search, endpoint_from_env


def cmd_morph(args) -> int:
    cfg = resolve_config(args, required=("source", "target", "out"))
    run = _RunDir(cfg["out"])
    try:
        pair, backend, search, from_env = _build(cfg, run)
        _write_run_json(run, cfg, from_env)
        mode = cfg["mode"]
        if mode == "static":
            traj = static_morph(backend, pair, cfg["target_p"], search)
        elif mode == "cyclostationary":
            traj = cyclostationary_morph(backend, pair, search)
        elif mode == "dynamic":
            traj = dynamic_morph(backend, pair, search)
        else:
            raise CliError(f"unknown mode: {mode!r}")
        run.path("schedule.json").write_text(traj.schedule.to_json())
        for i in range(len(traj.clips)):
            run.path(f"clips/{i:02d}.wav")
        run.path("clips/source.wav")
        run.path("clips/target.wav")
        if traj.dynamic_clip is not None:
            run.path("clips/dynamic.wav")
        manifest = save_trajectory(traj, run.root)
        run.written.append(manifest)
        if cfg["plot"]:
            _write_pgms(traj, run)
        return 0
    except Exception:
        run.discard()
        raise


def cmd_alphas(args) -> int:
    cfg = resolve_config(args, required=("source", "target", "out"))
    run = _RunDir(cfg["out"])
    try:
        pair, backend, search, from_env = _build(cfg, run)
        _write_run_json(run, cfg, from_env)
        schedule = binary_search_alphas(backend, pair, search)
        run.path("schedule.json").write_text(schedule.to_json())
        return 0
    except Exception:
        run.discard()
        raise


def _write_pgms(traj, run: _RunDir, subdir: str = "plots"):
    """One PGM per clip plus a strip with 2px separators."""
    tiles = []
    for i, clip in enumerate(traj.clips):
        mel = log_mel(clip).values
        run.path(f"{subdir}/{i:02d}.pgm").write_bytes(pgm_bytes(mel))
        tiles.append(mel)
    heights = tiles[0].shape[1]
    sep = np.full((2, heights), np.max([t.max() for t in tiles]))
    strip_rows = []
    for i, tile in enumerate(tiles):
        if i:
            strip_rows.append(sep)
        strip_rows.append(tile)
    run.path(f"{subdir}/strip.pgm").write_bytes(pgm_bytes(np.vstack(strip_rows)))


def _parse_distance(text: str):
    if text == "lmd":
        return LogMelDistance()
    if text.startswith("cmd:"):
        return ExternalCommandDistance(text[4:].split())
    raise CliError(f"unknown distance: {text!r} (use 'lmd' or 'cmd:<argv with {{a}} {{b}}>')")


def _parse_extractor(text: str, include_std: bool):
    if text == "internal":
        return MelStatsEmbedding(include_std=include_std)
    if text.startswith("cmd:"):
        return ExternalCommandEmbedding(text[4:].split())
    raise CliError(f"unknown extractor: {text!r}")


def _manifests_under(path: Path) -> list[Path]:
    if path.is_file():
        return [path]
    found = sorted(path.rglob("manifest.json"))
    if not found:
        raise CliError(f"no manifest.json under {path}")
    return found


def cmd_eval(args) -> int:
    manifests = _manifests_under(Path(args.manifest))
    out_base = Path(args.out) if args.out else None
    distance = _parse_distance(args.distance or "lmd")
    ex_fad = _parse_extractor(args.extractor or "internal", include_std=True)
    ex_fid = _parse_extractor(args.extractor or "internal", include_std=False)
    source_set = None
    if args.source_set:
        wavs = sorted(Path(args.source_set).glob("*.wav"))
        if not wavs:
            raise CliError(f"no WAV files in source set {args.source_set}")
        source_set = [audio.load_wav(p) for p in wavs]

    rows = []
    for manifest in manifests:
        traj = load_trajectory(manifest)
        if args.feature and args.feature != traj.schedule.feature:
            print(
                f"warning: manifest feature {traj.schedule.feature!r} != requested "
                f"{args.feature!r}; proceeding with manifest settings",
                file=sys.stderr,
            )
        report = evaluate(traj, source_set=source_set, distance=distance,
                          extractor_fad=ex_fad, extractor_fid=ex_fid)
        outdir = out_base if out_base else manifest.parent
        outdir.mkdir(parents=True, exist_ok=True)
        stem = manifest.parent.name or "run"
        report_path = outdir / ("report.json" if len(manifests) == 1 else f"report-{stem}.json")
        report_path.write_text(report.to_json())
        figdir = outdir / "figures" if len(manifests) == 1 else outdir / f"figures-{stem}"
        figdir.mkdir(parents=True, exist_ok=True)
        figures.render_spdp_curve(traj.schedule, figdir / "spdp_curve.png")
        figures.render_timbre_space(timbre_points(traj), figdir / "timbre_space.png")
        figures.render_distance_bars(_consecutive_distances(traj, distance), figdir / "consecutive_distances.png")
        rows.append(report.csv_row(label=str(manifest.parent)))

    csv_path = (out_base if out_base else manifests[0].parent) / "report.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        writer.writerows(rows)
    return 0


def cmd_plot(args) -> int:
    manifest = Path(args.manifest)
    if not manifest.is_file():
        raise CliError(f"manifest not found: {manifest}")
    traj = load_trajectory(manifest)
    run = _RunDir(args.out or manifest.parent)
    try:
        _write_pgms(traj, run)
        return 0
    except Exception:
        run.discard()
        raise


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="morphtraj", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_flags(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--source", help="source WAV path")
        p.add_argument("--target", help="target WAV path")
        p.add_argument("--backend", help="linear-mel | warped:E | crossfade | additive-sine:... | remote[:URL]")
        p.add_argument("--n", type=int, help="number of schedule points")
        p.add_argument("--tol", type=float, help="proportion tolerance for the search")
        p.add_argument("--max-iters", dest="max_iters", type=int, help="bisection iteration cap")
        p.add_argument("--feature", help="log-mel | mfcc | spectral-contrast | reduced-mel[:n]")
        p.add_argument("--prompt", help="initial text prompt forwarded to a remote backend")
        p.add_argument("--pad-policy", dest="pad_policy", choices=("pad", "truncate"))
        p.add_argument("--out", help="output directory")

    p_morph = sub.add_parser("morph", help="search a schedule and render the morph")
    add_run_flags(p_morph)
    p_morph.add_argument("--mode", choices=("static", "cyclostationary", "dynamic"))
    p_morph.add_argument("--target-p", dest="target_p", type=float,
                         help="target proportion for static mode")
    p_morph.add_argument("--plot", action="store_true", default=None,
                         help="also write PGM spectrogram tiles")
    p_morph.set_defaults(func=cmd_morph)

    p_alphas = sub.add_parser("alphas", help="run the factor search only")
    add_run_flags(p_alphas)
    p_alphas.set_defaults(func=cmd_alphas)

    p_eval = sub.add_parser("eval", help="score a trajectory manifest (or a directory of them)")
    p_eval.add_argument("manifest", help="manifest.json path or a directory to scan")
    p_eval.add_argument("--distance", help="lmd | cmd:<argv with {a} {b}>")
    p_eval.add_argument("--extractor", help="internal | cmd:<argv with {wav}>")
    p_eval.add_argument("--source-set", dest="source_set", help="directory of reference WAVs")
    p_eval.add_argument("--feature", help="warn if the manifest used a different feature")
    p_eval.add_argument("--out", help="where to write report/CSV/figures (default: next to manifest)")
    p_eval.set_defaults(func=cmd_eval)

    p_plot = sub.add_parser("plot", help="render PGM spectrogram tiles for a manifest")
    p_plot.add_argument("manifest")
    p_plot.add_argument("--out", help="output directory (default: next to manifest)")
    p_plot.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # module errors surface with context
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
