import pytest

from abloop.curve import build_frame, circle_spec, perturbed_circle_spec


@pytest.fixture(scope="session")
def circle():
    return build_frame(circle_spec())


@pytest.fixture(scope="session")
def wobbly():
    return build_frame(perturbed_circle_spec(0.3))
