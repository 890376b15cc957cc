import pytest

from jagq import AnalysisEngine, DatasetRegistry, generate_sample, read_events, read_labels

SEED = 20260808
N_EVENTS = 200
DATASET_ID = "localds://zee-test"


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("dataset")
    events_path = root / "zee.events"
    labels_path = root / "zee.events.labels"
    schema_path = root / "zee.schema"
    generate_sample(SEED, N_EVENTS, events_path=events_path,
                    labels_path=labels_path, schema_path=schema_path)
    registry_path = root / "datasets.ini"
    registry_path.write_text(
        f"[{DATASET_ID}]\nevents = zee.events\nschema = zee.schema\n",
        encoding="utf-8")
    return {
        "root": root,
        "events": events_path,
        "labels": labels_path,
        "schema": schema_path,
        "registry": registry_path,
    }


@pytest.fixture(scope="session")
def events(dataset_dir):
    return read_events(dataset_dir["events"])


@pytest.fixture(scope="session")
def labels(dataset_dir):
    return read_labels(dataset_dir["labels"])


@pytest.fixture(scope="session")
def registry(dataset_dir):
    return DatasetRegistry.load(dataset_dir["registry"])


@pytest.fixture()
def engine(registry, tmp_path):
    return AnalysisEngine(registry, cache_dir=tmp_path / "cache")
