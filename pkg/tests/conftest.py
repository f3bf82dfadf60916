import numpy as np
import pytest

from deformcl import CurveSpec, make_phantom


@pytest.fixture(scope="session")
def helix():
    spec = CurveSpec(kind="helix")
    intensity, mask, gt = make_phantom(spec)
    return {"spec": spec, "intensity": intensity, "mask": mask, "gt": gt}


@pytest.fixture(scope="session")
def tube():
    spec = CurveSpec(kind="straight", dims=(48, 48, 48), radius=4.0)
    intensity, mask, gt = make_phantom(spec)
    return {"spec": spec, "intensity": intensity, "mask": mask, "gt": gt}


@pytest.fixture(scope="session")
def ring():
    spec = CurveSpec(kind="ring", dims=(64, 64, 32))
    intensity, mask, gt = make_phantom(spec)
    return {"spec": spec, "intensity": intensity, "mask": mask, "gt": gt}


def random_mask(rng, dims, p=0.5):
    from deformcl import Mask

    return Mask(data=(rng.random(dims) < p).astype(np.uint8))
