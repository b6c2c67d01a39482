import numpy as np
import pytest

from helpers_conv import canonical_arrays


@pytest.fixture(scope="session")
def npz_checkpoint(tmp_path_factory):
    """Full-size fixture checkpoint keyed by canonical tensor names."""
    path = tmp_path_factory.mktemp("ckpt") / "source.npz"
    np.savez(path, **canonical_arrays(seed=99))
    return path
