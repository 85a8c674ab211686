import numpy as np
import pytest

from memstvit.ingest import SynthSpec, synth_pulse_video
from memstvit.vit import ViTConfig, init_params


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def pulse_video():
    """Default 64x64, 30 fps, 10 s, 1.5 Hz synthetic pulse (no noise)."""
    return synth_pulse_video(SynthSpec())


@pytest.fixture
def toy_params():
    return init_params(ViTConfig.toy(dropout_rate=0.0), seed=3)



def pytest_terminal_summary(terminalreporter):
    import sys

    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("[")[1].split("]")[0])):
            terminalreporter.write_line(line)
