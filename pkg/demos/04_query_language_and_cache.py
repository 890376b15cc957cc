"""The textual query language and the content-addressed result cache.

Expressions translate to canonical query text; submitting the same text
twice hits the on-disk cache instead of re-evaluating.
"""
import tempfile
import time

from jagq import Session, cache_key, canonicalize, parse_query, translate

from _common import DATASET_ID, demo_engine

# a fresh cache so the first submission is really cold
engine = demo_engine(remote_cross_reference=True,
                     cache_dir=tempfile.mkdtemp(prefix="jq-cache-"))

session = Session()
df = session.source(DATASET_ID)
eles = df.Electrons
pipeline = eles[(eles.pt > 50000.0) & (abs(eles.eta) < 1.5)].pt / 1000.0

query = translate(canonicalize(pipeline).root)
print("query text:", query)
print("cache key :", cache_key(DATASET_ID, query))

round_trip = translate(parse_query(query).node)
print("parse/translate fixed point:", round_trip == query)

t0 = time.perf_counter()
_, frame1 = engine.service.submit(DATASET_ID, query)
cold = time.perf_counter() - t0
evaluations = engine.service.evaluations

t0 = time.perf_counter()
_, frame2 = engine.service.submit(DATASET_ID, query)
warm = time.perf_counter() - t0

print(f"cold submit: {cold * 1000:.2f} ms ({evaluations} evaluation)")
print(f"warm submit: {warm * 1000:.2f} ms "
      f"({engine.service.evaluations - evaluations} evaluations, "
      f"byte-identical: {frame1 == frame2})")
