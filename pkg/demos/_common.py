"""Shared setup for the demo scripts: a small synthetic dataset on disk."""
from pathlib import Path

from jagq import AnalysisEngine, DatasetRegistry, generate_sample

DATA_DIR = Path(__file__).parent / "demo_data"
DATASET_ID = "localds://zee-demo"


def demo_engine(**kwargs) -> AnalysisEngine:
    DATA_DIR.mkdir(exist_ok=True)
    events = DATA_DIR / "zee.events"
    schema = DATA_DIR / "zee.schema"
    if not events.exists():
        generate_sample(2026, 500, events_path=events,
                        labels_path=DATA_DIR / "zee.events.labels",
                        schema_path=schema)
    registry = DatasetRegistry()
    registry.register(DATASET_ID, events, schema)
    kwargs.setdefault("cache_dir", DATA_DIR / "cache")
    return AnalysisEngine(registry, **kwargs)
