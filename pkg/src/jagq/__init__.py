"""jagq: declarative analysis over jagged event data.

Expressions are recorded into an immutable DAG, planned across a remote
query service and a local array interpreter, and materialized on demand:

    from jagq import Session, AnalysisEngine, DatasetRegistry

    session = Session()
    df = session.source("localds://zee-small")
    eles = df.Electrons
    good = eles[(eles.pt > 50000.0) & (abs(eles.eta) < 1.5)]
    engine = AnalysisEngine(registry)
    pts_gev = engine.materialize(good.pt / 1000.0)
"""

from .dataio import (DEFAULT_SCHEMA, DatasetRegistry, EventStore,
                     generate_sample, histogram_counts, ingest, read_events,
                     read_labels, store_from_events, write_events)
from .engine import AnalysisEngine, resolve_cache_dir
from .errors import JagqError
from .expr import ExprHandle, Session, atan2, canonicalize, cos, sin, sqrt
from .jagged import (ElementKind, JaggedArray, cross_indices, cross_nest,
                     elementwise_binary, elementwise_unary, kernel_invocations,
                     mask_innermost, reduce_innermost, reset_kernel_counter)
from .local_exec import LocalExecutor, delta_r
from .oracle import oracle_eval
from .planner import (LocalBackend, Plan, PlanStep, RemoteBackend, execute,
                      make_plan, plan_dump)
from .records import RecordArray, Scalar
from .remote.parser import parse_query
from .remote.service import RemoteDataService, RemoteExecutor, cache_key
from .remote.translate import translate
from .schema import DatasetSchema, DataShape, infer, parse_schema_text

__version__ = "0.1.0"

__all__ = [
    "AnalysisEngine", "DatasetRegistry", "DatasetSchema", "DataShape",
    "DEFAULT_SCHEMA", "ElementKind", "EventStore", "ExprHandle", "JaggedArray",
    "JagqError", "LocalBackend", "LocalExecutor", "Plan", "PlanStep",
    "RecordArray", "RemoteBackend", "RemoteDataService", "RemoteExecutor",
    "Scalar", "Session", "atan2", "cache_key", "canonicalize", "cos",
    "cross_indices", "cross_nest", "delta_r", "elementwise_binary",
    "elementwise_unary", "execute", "generate_sample", "histogram_counts",
    "infer", "ingest", "kernel_invocations", "make_plan", "mask_innermost",
    "oracle_eval", "parse_query", "parse_schema_text", "plan_dump",
    "read_events", "read_labels", "reduce_innermost", "reset_kernel_counter",
    "resolve_cache_dir", "sin", "sqrt", "store_from_events", "translate",
    "write_events",
]
