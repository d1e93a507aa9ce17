import pytest

from nmifbridge.demo import DEMO_INPUT_SHAPE, demo_cnn


@pytest.fixture(scope="session")
def demo_model():
    return demo_cnn(seed=0)


@pytest.fixture(scope="session")
def demo_container(demo_model, tmp_path_factory):
    from nmifbridge import export_model
    out = tmp_path_factory.mktemp("export") / "demo.nmif"
    return export_model(demo_model, DEMO_INPUT_SHAPE, out, name="demo")
