import numpy as np
import pytest

from vq3dkit.geometry import (
    PoseDirection,
    RigidPose,
    SimilarityTransform,
    random_unit_quat,
)


def random_pose(rng, direction=PoseDirection.CAMERA_TO_WORLD, span=5.0) -> RigidPose:
    return RigidPose(random_unit_quat(rng), rng.uniform(-span, span, size=3), direction)


def random_similarity(rng, scale_range=(0.5, 2.0), span=5.0) -> SimilarityTransform:
    return SimilarityTransform(
        float(rng.uniform(*scale_range)),
        random_unit_quat(rng),
        rng.uniform(-span, span, size=3),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)
