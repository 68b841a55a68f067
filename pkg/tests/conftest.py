import hypothesis
import numpy as np
import pytest

import bridgemark as bm

hypothesis.settings.register_profile("default", deadline=None)
hypothesis.settings.load_profile("default")


@pytest.fixture(scope="session")
def trained_bm_score():
    """Score model trained on a 1-landmark 2D frozen Brownian process.

    Shared by the score-closure and bridge tests; training takes a couple
    of minutes, so it runs once per session.
    """
    shape = bm.LandmarkShape(np.array([[0.3, -0.2]]))
    kernel = bm.KernelSpec(1.0, 1.0)
    proc = bm.frozen_brownian_process(shape, kernel)
    grid = bm.TimeGrid(0.0, 1.0, 64)
    config = bm.ScoreTrainConfig(iterations=5000, paths_per_iter=16, seed=7,
                                 learning_rate=1e-3, lr_halvings=4,
                                 guard_steps=4, log_every=200)
    model, curve = bm.train_score(proc, shape.flat, grid, config)
    return {"model": model, "curve": curve, "proc": proc, "shape": shape,
            "kernel": kernel, "grid": grid}
