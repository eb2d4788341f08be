"""Thin-client CLI for the audit service.

Every subcommand talks to the service over HTTP semantics; with no --server
it mounts the ASGI app in-process, so local runs need no deployment. Exit
codes: 0 = ran with no violations, 1 = ran and found violations, 2 =
operational error.
"""

from __future__ import annotations

import base64
import json
import sys
from pathlib import Path

import click
import httpx
import yaml

EXIT_CLEAN = 0
EXIT_VIOLATIONS = 1
EXIT_ERROR = 2

CONFIG_BASENAME = "lendaudit.yaml"


class CliError(click.ClickException):
    exit_code = EXIT_ERROR


def _load_config(path: str | None) -> dict:
    candidates = [Path(path)] if path else [Path.cwd() / CONFIG_BASENAME]
    for candidate in candidates:
        if candidate.is_file():
            data = yaml.safe_load(candidate.read_text("utf-8")) or {}
            if not isinstance(data, dict):
                raise CliError(f"{candidate}: config must be a mapping")
            return data
        if path:
            raise CliError(f"config file {candidate} not found")
    return {}


def _client(config: dict, server: str | None) -> httpx.Client:
    base_url = server or config.get("server")
    if base_url:
        return httpx.Client(base_url=base_url, timeout=300.0)
    # No server configured: mount the service in-process. The starlette test
    # client is the standard synchronous ASGI bridge and subclasses
    # httpx.Client, so the command code is identical either way.
    from starlette.testclient import TestClient

    from .service import create_app

    return TestClient(create_app(), base_url="http://lendaudit.local")


def _post(client: httpx.Client, path: str, payload: dict) -> dict:
    try:
        response = client.post(path, json=payload)
    except httpx.HTTPError as exc:
        raise CliError(f"request to {path} failed: {exc}") from exc
    if response.status_code != 200:
        try:
            detail = response.json().get("detail")
        except ValueError:
            detail = response.text
        raise CliError(f"{path} returned {response.status_code}: {detail}")
    return response.json()


def _apk_payload(path: Path) -> dict:
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc
    return {"filename": path.name, "content_b64": base64.b64encode(raw).decode("ascii")}


def _policy_payloads(directory: str | None) -> list[dict]:
    if not directory:
        return []
    root = Path(directory)
    if not root.is_dir():
        raise CliError(f"policies directory {directory} not found")
    payloads = []
    for path in sorted(root.glob("*.yaml")):
        payloads.append({"filename": path.name, "content": path.read_text("utf-8")})
    if not payloads:
        raise CliError(f"no .yaml policy files under {directory}")
    return payloads


def _write_json(data: dict, destination: str | None, default_name: str) -> None:
    if destination is None:
        return
    dest = Path(destination)
    if dest.is_dir() or not dest.suffix:
        dest.mkdir(parents=True, exist_ok=True)
        dest = dest / default_name
    dest.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", "utf-8")
    click.echo(f"wrote {dest}")


@click.group()
@click.option("--server", default=None, help="Base URL of a running audit service.")
@click.option("--config", "config_path", default=None, help="YAML config file (flags win).")
@click.pass_context
def main(ctx: click.Context, server: str | None, config_path: str | None) -> None:
    """Audit lending apps against country, platform, and harmonized policy."""
    ctx.ensure_object(dict)
    config = _load_config(config_path)
    ctx.obj["config"] = config
    ctx.obj["server"] = server


@main.command()
@click.argument("apk", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--jurisdiction", required=True, help="Country framework to audit against.")
@click.option("--policies", "policies_dir", default=None, help="Directory of policy .yaml files.")
@click.option("--mapping", "mapping_path", default=None, help="Alternate API mapping file.")
@click.option("--output", default=None, help="Write the structured report here.")
@click.pass_context
def audit(ctx, apk: Path, jurisdiction: str, policies_dir, mapping_path, output) -> None:
    """Audit one APK; exit 1 when it violates any framework."""
    config = ctx.obj["config"]
    payload = {
        "apk": _apk_payload(apk),
        "jurisdiction": jurisdiction,
        "policies": _policy_payloads(policies_dir or config.get("policies")),
    }
    mapping_file = mapping_path or config.get("mapping")
    if mapping_file:
        payload["mapping"] = Path(mapping_file).read_text("utf-8")
    with _client(config, ctx.obj["server"]) as client:
        body = _post(client, "/audit", payload)
    report = body["report"]
    verdict = report["verdict"]
    click.echo(f"package: {report['app']['package_id']}  digest: {report['app']['apk_digest'][:16]}…")
    for framework in ("country", "platform", "harmonized"):
        flag = verdict[f"violates_{framework}"]
        names = sorted({v["permission"] for v in verdict.get(f"{framework}_violations", [])})
        click.echo(f"  {framework:<11} {'VIOLATION' if flag else 'ok':<9} {', '.join(names)}")
    click.echo(f"  asymmetry   {verdict['asymmetry']}")
    click.echo(f"  api usage records: {len(report['api_usage'])}, flows: {len(report['flows'])}")
    _write_json(report, output, f"report-{report['app']['package_id']}.json")
    ctx.exit(EXIT_VIOLATIONS if body["violations_found"] else EXIT_CLEAN)


@main.command()
@click.option("--registry", "registry_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--apk-dir", required=True, type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--policies", "policies_dir", default=None)
@click.option("--mapping", "mapping_path", default=None)
@click.option("--jobs", default=4, show_default=True)
@click.option("--output", default=None, help="Directory for structured reports + summary.")
@click.pass_context
def corpus(ctx, registry_path: Path, apk_dir: Path, policies_dir, mapping_path, jobs, output) -> None:
    """Audit every registry row with an APK present (files named <package_id>.apk)."""
    config = ctx.obj["config"]
    payload = {
        "registry_csv": registry_path.read_text("utf-8"),
        "apks": [_apk_payload(p) for p in sorted(apk_dir.glob("*.apk"))],
        "policies": _policy_payloads(policies_dir or config.get("policies")),
        "jobs": jobs or config.get("jobs", 4),
    }
    mapping_file = mapping_path or config.get("mapping")
    if mapping_file:
        payload["mapping"] = Path(mapping_file).read_text("utf-8")
    with _client(config, ctx.obj["server"]) as client:
        body = _post(client, "/corpus", payload)
    click.echo(body["summary_table"], nl=False)
    for notice in body["missing"]:
        click.echo(f"missing apk: {notice}")
    for failure in body["failures"]:
        click.echo(f"failed: {failure['package_id']} ({failure['error']})")
    if output:
        dest = Path(output)
        dest.mkdir(parents=True, exist_ok=True)
        for report in body["reports"]:
            name = f"report-{report['app']['package_id']}-{report['jurisdiction']}.json"
            (dest / name).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", "utf-8")
        (dest / "summary.txt").write_text(body["summary_table"], "utf-8")
        click.echo(f"wrote {len(body['reports'])} reports to {dest}")
    ctx.exit(EXIT_VIOLATIONS if body["violations_found"] else EXIT_CLEAN)


@main.command(name="map-policy")
@click.argument("document", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--jurisdiction", required=True)
@click.option("--replay", "replay_dir", default=None, help="Directory of recorded {model}/response.txt fixtures.")
@click.option("--title", default="")
@click.option("--source-citation", default="")
@click.option("--output", default=None, help="Write the draft policy YAML here.")
@click.pass_context
def map_policy(ctx, document: Path, jurisdiction, replay_dir, title, source_citation, output) -> None:
    """Map a regulatory text to permissions via recorded model responses."""
    config = ctx.obj["config"]
    responses = []
    replay_root = replay_dir or config.get("replay")
    if replay_root:
        base = Path(replay_root) / jurisdiction
        if not base.is_dir():
            base = Path(replay_root)
        for model_dir in sorted(p for p in base.iterdir() if p.is_dir()):
            response_file = model_dir / "response.txt"
            if response_file.is_file():
                responses.append(
                    {"model_id": model_dir.name, "response_text": response_file.read_text("utf-8")}
                )
        if not responses:
            raise CliError(f"no recorded responses under {base}")
    payload = {
        "jurisdiction": jurisdiction,
        "title": title,
        "body_text": document.read_text("utf-8"),
        "source_citation": source_citation,
        "responses": responses,
    }
    with _client(config, ctx.obj["server"]) as client:
        body = _post(client, "/map-policy", payload)
    for model_id, proposals in body["proposals_per_model"].items():
        click.echo(f"{model_id}: {len(proposals)} proposals")
    for rejection in body["rejected"]:
        click.echo(f"rejected: {rejection['permission']} ({rejection['reason']})")
    for flag in body["review_flags"]:
        click.echo(f"REVIEW: {flag['permission']} — {flag['detail']}")
    if body.get("diff") is not None:
        diff = body["diff"]
        click.echo(
            f"diff vs shipped set: missing={len(diff['missing'])} "
            f"extra={len(diff['extra'])} kind_mismatches={len(diff['kind_mismatches'])}"
        )
    if output:
        Path(output).write_text(body["draft_policy"], "utf-8")
        click.echo(f"wrote {output}")
    else:
        click.echo(body["draft_policy"], nl=False)
    ctx.exit(EXIT_CLEAN)


@main.command()
@click.argument("events", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--manifest-of", "apk_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path), help="APK whose manifest scopes launcher activities.")
@click.option("--output", default=None)
@click.pass_context
def dynlog(ctx, events: Path, apk_path: Path, output) -> None:
    """Analyze an instrumentation event log for pre-registration exfiltration."""
    config = ctx.obj["config"]
    payload = {"events": events.read_text("utf-8"), "apk": _apk_payload(apk_path)}
    with _client(config, ctx.obj["server"]) as client:
        body = _post(client, "/dynlog", payload)
    click.echo(f"events: {body['event_count']}, findings: {len(body['findings'])}")
    for finding in body["findings"]:
        stage = "pre-registration" if finding["pre_registration"] else "post-registration"
        launch = " launch-time" if finding["launch_time"] else ""
        click.echo(
            f"  {finding['category']}: {stage}{launch} -> {finding['endpoint']} "
            f"({finding['source_event_id']} => {finding['sink_event_id']})"
        )
    _write_json({"findings": body["findings"]}, output, "dynamic-findings.json")
    ctx.exit(EXIT_VIOLATIONS if body["findings_found"] else EXIT_CLEAN)


@main.command()
@click.argument("apk", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--jurisdiction", default="Platform", show_default=True)
@click.option("--policies", "policies_dir", default=None)
@click.option("--output", default=None)
@click.pass_context
def hooks(ctx, apk: Path, jurisdiction, policies_dir, output) -> None:
    """Generate the instrumentation hook plan derived from static findings."""
    config = ctx.obj["config"]
    payload = {
        "apk": _apk_payload(apk),
        "jurisdiction": jurisdiction,
        "policies": _policy_payloads(policies_dir or config.get("policies")),
    }
    with _client(config, ctx.obj["server"]) as client:
        body = _post(client, "/hooks", payload)
    if body["empty"]:
        click.echo(f"no hooks to generate: {body['reason']}")
        ctx.exit(EXIT_CLEAN)
    plan = body["plan"]
    click.echo(f"{plan['package_id']}: {len(plan['hooks'])} hooks")
    for hook in plan["hooks"]:
        click.echo(f"  [{hook['tag']}] {hook['class_descriptor']} {hook['method_name']} ({hook['capture']})")
    _write_json(plan, output, f"hooks-{plan['package_id']}.json")
    ctx.exit(EXIT_CLEAN)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8400, show_default=True)
def serve(host: str, port: int) -> None:
    """Run the audit service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
