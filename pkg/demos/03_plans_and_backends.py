"""Inspect how the planner splits one pipeline across backends.

With cross-collection pushdown disabled (the default), the remote service
renders the cut mask and the raw pt column and the local interpreter
applies the mask and the unit conversion.  Enabling it moves the whole
pipeline into one remote query.
"""
from jagq import Session

from _common import DATASET_ID, demo_engine

session = Session()
df = session.source(DATASET_ID)
eles = df.Electrons
pipeline = eles[(eles.pt > 50000.0) & (abs(eles.eta) < 1.5)].pt / 1000.0

print("=== restricted remote translator (default) ===")
print(demo_engine(remote_cross_reference=False).explain(pipeline))

print()
print("=== full pushdown ===")
print(demo_engine(remote_cross_reference=True).explain(pipeline))

for flag in (False, True):
    engine = demo_engine(remote_cross_reference=flag)
    value = engine.materialize(pipeline)
    print(f"\nremote_cross_reference={flag}: {len(value.values)} values, "
          f"first few {[round(v, 2) for v in value.values[:4].tolist()]}")
