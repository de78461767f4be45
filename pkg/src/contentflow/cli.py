"""Thin CLI client for the contentflow service.

By default the commands talk to an in-process app instance; pass
--server to target a running deployment instead. Exit status is nonzero
when a run reports invariant violations.
"""

from __future__ import annotations

import asyncio
import sys
from typing import Optional

import click
import httpx


async def _post_inprocess(path: str, payload: dict) -> httpx.Response:
    from .service import app
    transport = httpx.ASGITransport(app=app)
    async with httpx.AsyncClient(transport=transport,
                                 base_url="http://contentflow",
                                 timeout=300.0) as client:
        return await client.post(path, json=payload)


def _post(server: Optional[str], path: str, payload: dict) -> dict:
    if server:
        with httpx.Client(base_url=server, timeout=300.0) as client:
            response = client.post(path, json=payload)
    else:
        response = asyncio.run(_post_inprocess(path, payload))
    if response.status_code == 422:
        detail = response.json().get("detail", "invalid config")
        raise click.ClickException(str(detail))
    response.raise_for_status()
    return response.json()


@click.group()
def main() -> None:
    """Run ContentFlow scenarios against the service."""


@main.command()
@click.argument("config", type=click.File("r"))
@click.option("--server", default=None, help="Base URL of a running service.")
@click.option("--csv", "csv_path", type=click.Path(), default=None,
              help="Write the metrics CSV to this file.")
@click.option("--trace-out", type=click.Path(), default=None,
              help="Write the event trace to this file.")
def run(config, server, csv_path, trace_out) -> None:
    """Execute a scenario and print per-request metrics."""
    data = _post(server, "/run", {"config": config.read()})
    click.echo(data["csv"], nl=False)
    if csv_path:
        with open(csv_path, "w") as f:
            f.write(data["csv"])
    if trace_out:
        with open(trace_out, "w") as f:
            f.write("\n".join(data["trace"]) + "\n")
    click.echo("trace_hash: %s" % data["trace_hash"], err=True)
    for violation in data["violations"]:
        click.echo("violation: %s" % violation, err=True)
    if data["violations"]:
        sys.exit(1)


@main.command()
@click.argument("config", type=click.File("r"))
@click.option("--sizes", required=True,
              help="Comma-separated content sizes in bytes.")
@click.option("--server", default=None, help="Base URL of a running service.")
def sweep(config, sizes, server) -> None:
    """Miss/hit delay table over a set of content sizes."""
    try:
        size_list = [int(s) for s in sizes.split(",") if s.strip()]
    except ValueError:
        raise click.ClickException("--sizes must be comma-separated integers")
    data = _post(server, "/sweep", {"config": config.read(), "sizes": size_list})
    click.echo("size,miss_delay,hit_delay")
    for row in data["rows"]:
        click.echo("%d,%s,%s%s" % (
            row["size"],
            row["miss_delay"] if row["miss_delay"] is not None else "",
            row["hit_delay"] if row["hit_delay"] is not None else "",
            ",flagged" if row["flagged"] else ""))


@main.command()
@click.argument("config", type=click.File("r"))
@click.option("--server", default=None, help="Base URL of a running service.")
def validate(config, server) -> None:
    """Check a scenario config without running it."""
    data = _post(server, "/validate", {"config": config.read()})
    if data["valid"]:
        click.echo("ok")
    else:
        click.echo("invalid: %s" % data["error"])
        sys.exit(1)


@main.command()
@click.argument("config", type=click.File("r"))
@click.option("--server", default=None, help="Base URL of a running service.")
@click.option("--verbose", is_flag=True, help="Include per-packet events.")
def trace(config, server, verbose) -> None:
    """Execute a scenario and print its event trace."""
    data = _post(server, "/run",
                 {"config": config.read(), "trace_packets": verbose})
    for line in data["trace"]:
        click.echo(line)
    if data["violations"]:
        for violation in data["violations"]:
            click.echo("violation: %s" % violation, err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
