"""Operator command line: run decodes, compare modes, analyze traces, serve.

All outputs are deterministic for identical inputs and are written
atomically (temp file in the target directory, then rename), so an
interrupted command never leaves a half-written artifact.
"""

from __future__ import annotations

import csv
import io
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import click

from ccd import analysis, trace_io
from ccd.backends import resolve_backend
from ccd.engine import MODES, DecodeConfig, RegionSpec, SamplerSpec, decode
from ccd.errors import BackendError, CCDError, TraceSchemaError
from ccd.keywords import KeywordCatalog, default_catalog, keyword_frequency

COMPARE_SCHEMA = "ccd-compare/1"
ANALYZE_SCHEMA = "ccd-analyze/1"


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + f".tmp-{os.getpid()}")
    try:
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def _read_prompts(path: Path) -> list[list[int]]:
    prompts = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            prompts.append([int(tok) for tok in line.split()])
        except ValueError:
            raise click.ClickException(
                f"{path}:{lineno}: prompts must be whitespace-separated token ids"
            )
    if not prompts:
        raise click.ClickException(f"{path}: no prompts found")
    return prompts


def _load_config(path: Path | None) -> DecodeConfig:
    if path is None:
        return DecodeConfig()
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        return DecodeConfig.from_json(doc)
    except (OSError, ValueError, TypeError) as exc:
        raise click.ClickException(f"bad config {path}: {exc}")


@click.group()
@click.version_option(package_name="ccd-engine")
def main() -> None:
    """Confidence-driven contrastive decoding tools."""


_config_options = [
    click.option("--config", "config_path", type=click.Path(path_type=Path, exists=True, dir_okay=False), default=None, help="DecodeConfig JSON file used as the base."),
    click.option("--alpha", type=float, default=None, help="Contrastive fusion weight."),
    click.option("--window", "W", type=int, default=None, help="Confidence window size W."),
    click.option("--topk", "k", type=int, default=None, help="Top-k for token confidence."),
    click.option("--q-cd", type=float, default=None, help="Low-confidence percentile."),
    click.option("--q-rep-top", type=float, default=None, help="Masking percentile, from the top."),
    click.option("--sampler", type=click.Choice(["greedy", "temperature", "top-p"]), default=None, help="Sampling rule."),
    click.option("--temperature", type=float, default=None),
    click.option("--top-p", type=float, default=None),
    click.option("--seed", type=int, default=None),
    click.option("--max-new-tokens", type=int, default=None),
    click.option("--mode", type=click.Choice(list(MODES)), default=None),
    click.option("--lazy/--eager", "lazy", default=None, help="Defer contrastive-branch forwards until needed."),
    click.option("--attribution", type=click.Choice(["algorithm1", "sampled-step"]), default=None),
    click.option("--region-start", type=int, default=None, help="First generated step eligible for intervention."),
    click.option("--region-end-token", type=int, default=None, help="Token id that closes the eligible region."),
]


def _with_config_options(fn):
    for opt in reversed(_config_options):
        fn = opt(fn)
    return fn


def _build_config(config_path: Path | None, **flags) -> DecodeConfig:
    cfg = _load_config(config_path)
    sampler = cfg.sampler
    for name in ("sampler", "temperature", "top_p"):
        value = flags.get("sampler" if name == "sampler" else name)
        if value is not None:
            key = "kind" if name == "sampler" else name
            sampler = replace(sampler, **{key: value})
    region = cfg.region
    if flags.get("region_start") is not None:
        region = replace(region, start=flags["region_start"])
    if flags.get("region_end_token") is not None:
        region = replace(region, end_token=flags["region_end_token"])
    updates = {}
    for field, key in (
        ("W", "W"),
        ("k", "k"),
        ("q_cd", "q_cd"),
        ("q_rep_top", "q_rep_top"),
        ("alpha", "alpha"),
        ("seed", "seed"),
        ("max_new_tokens", "max_new_tokens"),
        ("mode", "mode"),
        ("attribution", "attribution"),
    ):
        if flags.get(key) is not None:
            updates[field] = flags[key]
    if flags.get("lazy") is not None:
        updates["lazy_contrastive"] = flags["lazy"]
    try:
        return replace(cfg, sampler=sampler, region=region, **updates)
    except ValueError as exc:
        raise click.ClickException(str(exc))


@main.command("run")
@click.option("--manifest", type=click.Path(path_type=Path, exists=True, dir_okay=False), default=None, help="JSON manifest describing the full (prompt, seed, mode) product.")
@click.option("--backend", "backend_sel", default=None, help="Backend selector, e.g. mock:alternator, toy:7, remote:host:port.")
@click.option("--prompts", "prompts_path", type=click.Path(path_type=Path, exists=True, dir_okay=False), default=None, help="Prompt file: one whitespace-separated token-id sequence per line.")
@click.option("--out", "out_dir", type=click.Path(path_type=Path, file_okay=False), default=None, help="Output directory for trace files.")
@_with_config_options
def cmd_run(manifest, backend_sel, prompts_path, out_dir, config_path, **flags):
    """Decode prompts and write one trajectory JSONL file per job."""
    if manifest is not None:
        if backend_sel or prompts_path or out_dir:
            raise click.ClickException("--manifest replaces --backend/--prompts/--out")
        jobs = _jobs_from_manifest(manifest)
    else:
        if not (backend_sel and prompts_path and out_dir):
            raise click.ClickException(
                "either --manifest or all of --backend/--prompts/--out are required"
            )
        cfg = _build_config(config_path, **flags)
        jobs = (
            backend_sel,
            _read_prompts(prompts_path),
            Path(out_dir),
            [cfg.seed],
            [cfg.mode],
            cfg,
        )
    backend_sel, prompts, out_dir, seeds, modes, cfg = jobs
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        backend = resolve_backend(backend_sel)
    except (ValueError, BackendError) as exc:
        raise click.ClickException(str(exc))
    written = 0
    for idx, prompt in enumerate(prompts):
        for seed in seeds:
            for mode in modes:
                job_cfg = replace(cfg, seed=seed, mode=mode)
                try:
                    traj = decode(job_cfg, prompt, backend)
                except CCDError as exc:
                    raise click.ClickException(f"decode failed: {exc}")
                name = f"{idx}_{seed}_{mode}.jsonl"
                _atomic_write(out_dir / name, trace_io.to_line(traj) + "\n")
                written += 1
    click.echo(f"wrote {written} trace file(s) to {out_dir}")


def _jobs_from_manifest(path: Path):
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise click.ClickException(f"bad manifest {path}: {exc}")
    allowed = {"config", "prompts", "backend", "out", "seeds", "modes"}
    unknown = set(doc) - allowed
    if unknown:
        raise click.ClickException(f"unknown manifest fields: {sorted(unknown)}")
    missing = {"prompts", "backend", "out", "seeds", "modes"} - set(doc)
    if missing:
        raise click.ClickException(f"manifest is missing fields: {sorted(missing)}")
    base = path.parent
    cfg = _load_config(base / doc["config"] if "config" in doc else None)
    seeds = doc["seeds"]
    modes = doc["modes"]
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        raise click.ClickException("manifest seeds must be a nonempty integer list")
    if not isinstance(modes, list) or not modes or not set(modes) <= set(MODES):
        raise click.ClickException(f"manifest modes must be a nonempty subset of {MODES}")
    prompts = _read_prompts(base / doc["prompts"])
    return doc["backend"], prompts, base / doc["out"], seeds, modes, cfg


def _load_traces(paths: list[Path]) -> list:
    trajectories = []
    for p in paths:
        try:
            trajectories.extend(trace_io.read_file(p))
        except TraceSchemaError as exc:
            raise click.ClickException(f"{p}: {exc}")
    return trajectories


@main.command("compare")
@click.argument("trace_dir", type=click.Path(path_type=Path, exists=True, file_okay=False))
@click.option("--catalog", "catalog_path", type=click.Path(path_type=Path, exists=True, dir_okay=False), default=None, help="Keyword catalog JSON; defaults to the packaged one.")
@click.option("-o", "--output", type=click.Path(path_type=Path, dir_okay=False), default=None, help="Write CSV here instead of stdout.")
def cmd_compare(trace_dir: Path, catalog_path, output):
    """Aggregate a trace directory into one CSV row per decoding mode."""
    paths = sorted(trace_dir.glob("*.jsonl"))
    if not paths:
        raise click.ClickException(f"no .jsonl trace files in {trace_dir}")
    trajectories = _load_traces(paths)
    vocabs = {json.dumps(t.vocab, sort_keys=True) for t in trajectories}
    if len(vocabs) > 1:
        raise click.ClickException("trace directory mixes different vocabularies")
    catalog = (
        KeywordCatalog.from_file(catalog_path) if catalog_path else default_catalog()
    )
    text = _compare_csv(trajectories, catalog)
    if output is None:
        click.echo(text, nl=False)
    else:
        _atomic_write(output, text)


def _compare_csv(trajectories, catalog: KeywordCatalog) -> str:
    categories = list(catalog.categories)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["schema", "mode", "trajectories", "mean_length", "intervention_rate",
         "pre_conf", "post_conf"] + [f"keyword_{c}" for c in categories]
    )
    for mode, trajs in sorted(analysis.group_by_mode(trajectories).items()):
        total_tokens = sum(len(t.generated) for t in trajs)
        hits = [
            tr
            for t in trajs
            for tr in t.traces
            if tr.i_cd == 1 and tr.post_confidence is not None
        ]
        rate = len(hits) / total_tokens if total_tokens else 0.0
        pre = sum(h.confidence for h in hits) / len(hits) if hits else None
        post = sum(h.post_confidence for h in hits) / len(hits) if hits else None
        counts = {c: 0 for c in categories}
        for t in trajs:
            if t.text:
                for cat, n in keyword_frequency(t.text, catalog).items():
                    counts[cat] += n
        writer.writerow(
            [
                COMPARE_SCHEMA,
                mode,
                len(trajs),
                repr(total_tokens / len(trajs)),
                repr(rate),
                "" if pre is None else repr(pre),
                "" if post is None else repr(post),
            ]
            + [counts[c] for c in categories]
        )
    return buf.getvalue()


@main.command("analyze")
@click.argument("trace_file", type=click.Path(path_type=Path, exists=True, dir_okay=False))
@click.option("--bin-width", type=float, default=0.25, show_default=True, help="Confidence histogram bin width in nats.")
@click.option("-o", "--output", type=click.Path(path_type=Path, dir_okay=False), default=None, help="Write the JSON report here instead of stdout.")
def cmd_analyze(trace_file: Path, bin_width: float, output):
    """Per-trajectory summaries and confidence histograms as JSON."""
    if bin_width <= 0:
        raise click.ClickException("--bin-width must be positive")
    trajectories = _load_traces([trace_file])
    reports = []
    for i, traj in enumerate(trajectories):
        hist = analysis.confidence_histogram(
            (t.confidence for t in traj.traces), bin_width
        )
        doc = analysis.summarize(traj).to_dict()
        doc["trajectory"] = i
        doc["mode"] = traj.config.mode
        doc["label"] = traj.label
        doc["confidence_histogram"] = {str(k): v for k, v in hist.items()}
        reports.append(doc)
    report = {
        "schema": ANALYZE_SCHEMA,
        "bin_width": bin_width,
        "trajectories": reports,
    }
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if output is None:
        click.echo(text, nl=False)
    else:
        _atomic_write(output, text)


@main.command("serve")
@click.option("--backend", "backend_sel", required=True, help="Local backend to expose, e.g. toy:0 or mock:alternator.")
@click.option("--bind", default=None, metavar="HOST:PORT", help="Listen address; port 0 picks a free port.")
@click.option("--stdio", is_flag=True, help="Serve a single connection over stdin/stdout.")
def cmd_serve(backend_sel, bind, stdio):
    """Expose a local backend over the wire protocol."""
    from ccd.protocol.server import TCPLogitServer, serve_stream

    if stdio == (bind is not None):
        raise click.ClickException("exactly one of --bind or --stdio is required")
    try:
        backend = resolve_backend(backend_sel)
    except (ValueError, BackendError) as exc:
        raise click.ClickException(str(exc))
    if stdio:
        serve_stream(
            backend, sys.stdin.buffer, sys.stdout.buffer, model_name=backend_sel
        )
        return
    host, sep, port = bind.rpartition(":")
    if not sep or not port.lstrip("-").isdigit():
        raise click.ClickException("--bind must be HOST:PORT")
    server = TCPLogitServer(backend, host, int(port), model_name=backend_sel)
    bound_host, bound_port = server.address
    click.echo(f"listening on {bound_host}:{bound_port}", err=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.stop()


if __name__ == "__main__":
    main()
