import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from common import config  # noqa: E402
from motionforge.tensor import Tensor  # noqa: E402
from motionforge.video_io import VideoClip, write_image_sequence  # noqa: E402


@pytest.fixture(autouse=True)
def no_ledger(monkeypatch):
    """Runs stay off the ledger unless a test points DB_URL somewhere."""
    monkeypatch.setattr(config, "DB_URL", None)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_frame(rng, height=8, width=8, channels=3) -> Tensor:
    return Tensor(rng.random((channels, height, width), dtype=np.float32), "CHW")


def random_clip(rng, frames=10, height=16, width=16) -> VideoClip:
    return VideoClip.from_array(rng.random((frames, 3, height, width), dtype=np.float32))


@pytest.fixture
def frame_dir(tmp_path, rng):
    """Ten 64x64 PNG frames quantised to 8 bits."""
    array = np.rint(rng.random((10, 3, 64, 64)) * 255.0) / 255.0
    directory = tmp_path / "frames"
    write_image_sequence(VideoClip.from_array(array.astype(np.float32)), directory)
    return directory
