import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from psogsim.dataset import build_dataset  # noqa: E402
from psogsim.eye import EyeModelParams, StimulusSpec, generate_session  # noqa: E402
from psogsim.sensor import ArrayLayout, receptive_kernel  # noqa: E402
from psogsim.shifts import ShiftDistribution  # noqa: E402


@pytest.fixture(scope="session")
def kernel():
    return receptive_kernel(121)


@pytest.fixture(scope="session")
def small_dataset(kernel):
    """One subject, 25 images x 4 shifts."""
    imgs = generate_session(StimulusSpec(samples_per_fixation=(1, 1)), EyeModelParams(subject_id="S01"),
                            0.05, seed=4)
    return build_dataset(imgs, ShiftDistribution(sigma_mm=1.0), ArrayLayout(), kernel, seed=9,
                         shifts_per_image=4)


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
