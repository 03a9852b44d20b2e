import json
import os
import subprocess
from pathlib import Path

import pytest
from jsonschema import Draft202012Validator
from referencing import Registry, Resource

SOURCE = Path(os.environ.get("CLOUDHARM_SOURCE_DIR", Path(__file__).resolve().parents[2]))
SCHEMAS = SOURCE / "schemas"
FIXTURES = SOURCE / "fixtures"


def _registry():
    resources = []
    for path in SCHEMAS.glob("*.schema.json"):
        doc = json.loads(path.read_text())
        resources.append((doc["$id"], Resource.from_contents(doc)))
    return Registry().with_resources(resources)


REGISTRY = _registry()


def validate(doc, schema_name):
    schema = json.loads((SCHEMAS / schema_name).read_text())
    Draft202012Validator(schema, registry=REGISTRY).validate(doc)


class Cli:
    def __init__(self, binary, store):
        self.binary = binary
        self.store = store

    def run(self, *args, json_out=False, check=True, store=True):
        cmd = [self.binary]
        if store:
            cmd += ["--store", str(self.store)]
        if json_out:
            cmd.append("--json")
        cmd += [str(a) for a in args]
        proc = subprocess.run(cmd, capture_output=True, text=True, timeout=120)
        if check and proc.returncode != 0:
            raise AssertionError(f"{cmd} exited {proc.returncode}: {proc.stderr}")
        return proc

    def json(self, *args, schema=None):
        doc = json.loads(self.run(*args, json_out=True).stdout)
        if schema:
            validate(doc, schema)
        return doc


@pytest.fixture
def cli(tmp_path):
    binary = os.environ.get("CLOUDHARM_BIN")
    if not binary:
        pytest.skip("CLOUDHARM_BIN not set")
    return Cli(binary, tmp_path / "store")


@pytest.fixture
def testbed1(cli):
    doc = cli.json("fixtures", "install", "testbed1", schema="fixtures-install.schema.json")
    return doc["model_id"]
