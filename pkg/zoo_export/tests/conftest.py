import mpcq
import pytest

import zoo_export as zoo


@pytest.fixture(scope="session")
def exported(tmp_path_factory):
    """Per-session export cache: family -> (manifest, archive path, graph path).

    Exports are deterministic, so every test can share one copy per family.
    """
    root = tmp_path_factory.mktemp("zoo")
    cache = {}

    def get(name):
        if name not in cache:
            model_path = str(root / f"{name}.mpct")
            graph_path = str(root / f"{name}.txt")
            manifest = zoo.export_model(name, model_path, graph_path)
            cache[name] = (manifest, model_path, graph_path)
        return cache[name]

    return get


@pytest.fixture()
def numpy_backend():
    # the compiled kernel loses badly to BLAS at real network sizes
    previous = mpcq.backend_name()
    mpcq.set_backend("numpy")
    yield
    mpcq.set_backend(previous)
