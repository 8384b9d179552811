import json
import sys
from pathlib import Path

import pytest

from sss3d.space import Genome

WORKER_SCRIPT = Path(__file__).parent / "workers" / "proto_worker.py"

# Published subnetwork configurations used as cost-model fixtures.
TABLE_GENOMES = {
    "sap1": Genome(
        (0.8, 0.8, 0.8, 1.0, 0.4, 0.4, 0.4, 0.8, 0.8, 1.0, 1.0, 0.8, 0.8),
        (1, 1, 1, 1, 3, 1),
        (16, 20, 16, 16, 22),
        (4, 4, 6, 4, 2),
    ),
    "sap2": Genome(
        (0.8, 0.8, 0.8, 0.6, 0.4, 0.4, 0.4, 0.8, 0.8, 1.0, 1.0, 0.8, 0.8),
        (1, 1, 1, 1, 4, 3),
        (16, 18, 16, 16, 20),
        (4, 4, 8, 8, 2),
    ),
    "afp3": Genome(
        (0.8, 0.8, 1.0, 0.8, 0.4, 0.4, 0.4, 0.8, 0.8, 1.0, 1.0, 0.6, 0.8),
        (1, 1, 1, 1, 1, 3),
        (16, 16, 16, 16, 16),
        (8, 4, 8, 8, 2),
    ),
}


@pytest.fixture(scope="session")
def reference_desc():
    from sss3d.supernet import reference_description

    return reference_description()


def worker_command(*extra: str) -> list:
    return [sys.executable, str(WORKER_SCRIPT), *extra]


@pytest.fixture
def write_genome(tmp_path):
    def _write(genome: Genome, name: str = "genome.json") -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(genome.to_json_dict()))
        return path

    return _write
