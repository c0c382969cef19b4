import pytest

from imtk import database
from imtk.config import Settings
from imtk.manifold import GridSpec, build_manifold
from imtk.synthesis import synthesize_P
from imtk.systems import load_fixture


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    monkeypatch.setattr(Settings, "OUT_DIR", str(tmp_path / "out"))
    monkeypatch.setattr(Settings, "DATABASE_URL", f"sqlite:///{tmp_path / 'runs.db'}")
    database.reset_engine()
    yield
    database.reset_engine()


@pytest.fixture(scope="session")
def lin2():
    return load_fixture("SYS-LIN2")


@pytest.fixture(scope="session")
def lin2_cone(lin2):
    return synthesize_P(lin2, 1.0)


@pytest.fixture(scope="session")
def lin2_manifold(lin2, lin2_cone):
    return build_manifold(lin2, lin2_cone, grid=GridSpec(radius=2.0, nodes=21))


@pytest.fixture(scope="session")
def scalar():
    return load_fixture("SYS-SCALAR")


@pytest.fixture(scope="session")
def ode3():
    return load_fixture("SYS-ODE3")


@pytest.fixture(scope="session")
def ode3_cone(ode3):
    return synthesize_P(ode3, 1.5)
