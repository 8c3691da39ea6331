"""Command line entry points: serve a checkpoint, tokenize prompt files."""

from __future__ import annotations

import sys

import click

from ccd_hf_adapter import __version__


@click.group()
@click.version_option(version=__version__, prog_name="ccd-hf-adapter")
def main() -> None:
    """Serve transformer checkpoints to the decoding engine over ccd/1."""


def _parse_bind(value: str) -> tuple[str, int]:
    host, sep, port = value.rpartition(":")
    if not sep or not host or not port.isdigit():
        raise click.UsageError(f"--bind expects HOST:PORT, got {value!r}")
    return host, int(port)


@main.command()
@click.option("--model", required=True, help="Checkpoint path or hub identifier.")
@click.option(
    "--bind", "bind_addr", default=None, metavar="HOST:PORT", help="Listen on TCP."
)
@click.option("--stdio", is_flag=True, help="Serve one connection over stdin/stdout.")
@click.option(
    "--placeholder-token",
    type=int,
    default=None,
    help="Token id to advertise as the masking placeholder.",
)
@click.option(
    "--dtype",
    type=click.Choice(["float32", "float64"]),
    default="float32",
    show_default=True,
    help="Numeric dtype for weights and logits.",
)
def serve(
    model: str,
    bind_addr: str | None,
    stdio: bool,
    placeholder_token: int | None,
    dtype: str,
) -> None:
    """Expose a checkpoint as a ccd/1 logit server."""
    if (bind_addr is not None) == stdio:
        raise click.UsageError("exactly one of --bind or --stdio is required")
    if bind_addr is not None:
        host, port = _parse_bind(bind_addr)

    from ccd_hf_adapter.model import CheckpointRunner
    from ccd_hf_adapter.server import TCPAdapterServer, serve_stream

    try:
        runner = CheckpointRunner(
            model, dtype=dtype, placeholder_override=placeholder_token
        )
    except Exception as exc:
        raise click.ClickException(f"cannot serve {model!r}: {exc}") from exc

    if stdio:
        serve_stream(runner, sys.stdin.buffer, sys.stdout.buffer, model_name=model)
        return
    server = TCPAdapterServer(runner, host, port, model_name=model)
    bound_host, bound_port = server.address
    click.echo(f"serving {model} on {bound_host}:{bound_port}", err=True)
    server.serve_forever()


def _tokenizer_or_fail(model: str):
    from transformers import AutoTokenizer

    try:
        return AutoTokenizer.from_pretrained(model)
    except Exception as exc:
        raise click.ClickException(f"cannot load tokenizer for {model!r}: {exc}") from exc


def _input_lines(args: tuple[str, ...]) -> list[str]:
    return list(args) if args else sys.stdin.read().splitlines()


@main.command()
@click.option("--model", required=True, help="Checkpoint path or hub identifier.")
@click.argument("text", nargs=-1)
def tokenize(model: str, text: tuple[str, ...]) -> None:
    """Print token ids in the engine's prompt-file format.

    One line of space-separated ids per input line; lines come from the
    arguments or, without arguments, from stdin.
    """
    tok = _tokenizer_or_fail(model)
    for line in _input_lines(text):
        ids = tok.encode(line, add_special_tokens=False)
        click.echo(" ".join(str(i) for i in ids))


@main.command()
@click.option("--model", required=True, help="Checkpoint path or hub identifier.")
@click.argument("ids", nargs=-1)
def detokenize(model: str, ids: tuple[str, ...]) -> None:
    """Invert tokenize: print the text of each line of token ids."""
    tok = _tokenizer_or_fail(model)
    for line in _input_lines(ids):
        parts = line.split()
        try:
            token_ids = [int(p) for p in parts]
        except ValueError:
            raise click.UsageError(f"token ids must be integers, got {line!r}")
        click.echo(
            tok.decode(
                token_ids, skip_special_tokens=False, clean_up_tokenization_spaces=False
            )
        )


if __name__ == "__main__":
    main()
