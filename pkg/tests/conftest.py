from __future__ import annotations

import numpy as np
import pytest

from actioncodec.data import EmbodimentSpec, SynthConfig, synth_dataset


@pytest.fixture(scope="session")
def specs() -> list[EmbodimentSpec]:
    return [
        EmbodimentSpec(name="arm7", index=0, control_hz=20.0, action_dim=7),
        EmbodimentSpec(name="arm5", index=1, control_hz=10.0, action_dim=5),
    ]


@pytest.fixture(scope="session")
def small_dataset(specs):
    config = SynthConfig(
        embodiments=specs,
        n_tasks=3,
        episodes_per_task=4,
        duration_s=2.0,
        amplitude=0.5,
        jitter=0.02,
    )
    return synth_dataset(config, seed=11)


def make_chunk(actions: np.ndarray, hz: float = 20.0, embodiment_index: int = 0):
    from actioncodec.data import ActionChunk

    actions = np.asarray(actions, dtype=np.float64)
    timestamps = np.arange(actions.shape[0], dtype=np.float64) / hz
    return ActionChunk(actions=actions, timestamps=timestamps, embodiment_index=embodiment_index)
