import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def tiny_config():
    """A small but complete synthetic experiment, cheap enough for unit tests."""
    from fedgs.config import from_dict

    return from_dict({
        "name": "tiny",
        "num_clients": 6,
        "clients_per_round": 2,
        "rounds": 8,
        "trainer": {"E": 2, "B": 5},
        "seeds": {"data_seed": 3, "train_seed": 4, "availability_seed": 5},
    })
