import numpy as np
import pytest

from megsim import PipelineParams, build_pipeline


@pytest.fixture(scope="session")
def small_pipeline():
    """16x16 image, 8-dim latent, pool factor 4."""
    return build_pipeline(PipelineParams(
        latent_dim=8, height=16, width=16, pool_factor=4,
        basis_seed=42, gen_seed=43, es_gen_seeds=(51, 52, 53), text_seed=44,
    ))


@pytest.fixture()
def rng():
    return np.random.default_rng(2024014)
