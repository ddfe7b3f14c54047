import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from amlcell.dataset import make_fixture  # noqa: E402


@pytest.fixture(scope="session")
def small_fixture(tmp_path_factory):
    """10 images per class at 64x64, with ground-truth masks."""
    return make_fixture(tmp_path_factory.mktemp("fixture"), per_class=10, seed=3, size=64)


@pytest.fixture(scope="session")
def segmented_fixture(small_fixture):
    """The small fixture pushed through all four segmentation variants."""
    from amlcell.dataset import scan
    from amlcell.image_core import read_image, write_image
    from amlcell.segmentation import SegMethod, segment

    trees = {}
    samples = scan(small_fixture / "images")
    for sm in SegMethod.all():
        root = small_fixture / f"images-{sm.method.value}-{sm.target.value}"
        for rel, _ in samples:
            write_image(root / rel, segment(read_image(small_fixture / "images" / rel), sm))
        trees[sm.variant] = root
    return trees


# one PASS/FAIL line per acceptance criterion at the end of the run
_acceptance: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance[report.nodeid.split("::")[-1]] = "PASS" if report.outcome == "passed" else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance.items():
        terminalreporter.write_line(f"{outcome}  {name}")
