import json
import sys
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).resolve().parent
sys.path.insert(0, str(TESTS_DIR))

FIXTURES = TESTS_DIR / "fixtures"


@pytest.fixture(scope="session")
def policies():
    from lendaudit.resources import default_policies

    return default_policies()


@pytest.fixture(scope="session")
def mapping_table():
    from lendaudit.resources import default_mapping

    return default_mapping()


@pytest.fixture(scope="session")
def sink_patterns():
    from lendaudit.resources import default_sinks

    return default_sinks()


@pytest.fixture(scope="session")
def fixture_apks():
    out = {}
    for path in sorted((FIXTURES / "apks").glob("*.apk")):
        out[path.name] = path.read_bytes()
    return out


@pytest.fixture(scope="session")
def fixture_goldens():
    out = {}
    for path in sorted((FIXTURES / "golden").glob("*.json")):
        out[path.stem] = json.loads(path.read_text("utf-8"))
    return out


@pytest.fixture(scope="session")
def registry_csv_text():
    return (FIXTURES / "registry.csv").read_text("utf-8")
