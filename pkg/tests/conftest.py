import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tsa.scenarios import case_dict  # noqa: E402
from tsa.system import build_case  # noqa: E402


@pytest.fixture(scope="session")
def wscc():
    return build_case(case_dict("wscc9"))


@pytest.fixture(scope="session")
def wscc_data():
    return case_dict("wscc9")


def two_machine_case(b_pre=5.0, b_on=5.0, b_post=5.0, pm=(0.5, -0.5), H=(3.0, 3.0), clear=0.1, g=0.0):
    """Lossless two-machine reduced case with unit EMFs and a single tie susceptance per stage."""
    def stage(b):
        return {"G": [[g, -g], [-g, g]], "B": [[-b, b], [b, -b]]}

    return {
        "meta": {"name": "two", "base_mva": 100.0, "omega_syn": 376.99111843077515},
        "mode": "reduced",
        "machines": [
            {"id": "a", "H": H[0], "xd_prime": 0.1, "Pm": pm[0], "E": 1.0},
            {"id": "b", "H": H[1], "xd_prime": 0.1, "Pm": pm[1], "E": 1.0},
        ],
        "reduced": {"prefault": stage(b_pre), "faulton": stage(b_on), "postfault": stage(b_post)},
        "fault": {"bus": 1, "clear_time": clear},
    }
