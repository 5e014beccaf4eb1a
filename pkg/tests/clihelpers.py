import json
from pathlib import Path

from nlpemem import cli

RECORD = "run_record.json"


def run(cmd, config, out, *extra):
    return cli.main([cmd, "--config", str(config), "--out", str(out), *extra])


def artifact_bytes(out: Path) -> dict:
    """All artifacts except the run record, which carries a timestamp."""
    return {p.name: p.read_bytes() for p in sorted(Path(out).iterdir())
            if p.is_file() and p.name != RECORD}


def command_of(config) -> str:
    return json.loads(Path(config).read_text())["command"]
