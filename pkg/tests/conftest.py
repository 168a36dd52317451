import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from emorec.audio_io import AudioClip

from synth_corpus import build_corpus


def make_tone(freq=440.0, seconds=1.0, rate=16000, amp=0.5, phase=0.0):
    t = np.arange(int(round(seconds * rate))) / rate
    return AudioClip(amp * np.sin(2 * np.pi * freq * t + phase), rate)


@pytest.fixture
def tone():
    return make_tone


@pytest.fixture(scope="session")
def fixture_corpus(tmp_path_factory):
    """Session-wide synthetic corpus: (manifest path, noise dir, n records)."""
    root = tmp_path_factory.mktemp("corpus")
    return build_corpus(root)
