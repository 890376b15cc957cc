"""Select central high-pt electrons and histogram their pt in GeV.

The expression is recorded lazily; make-local style materialization plans
it across the remote service and the local interpreter.
"""
from jagq import Session, histogram_counts

from _common import DATASET_ID, demo_engine

engine = demo_engine()
session = Session()

df = session.source(DATASET_ID)
eles = df.Electrons
good_eles = eles[(eles.pt > 50000.0) & (abs(eles.eta) < 1.5)]

pts_gev = engine.materialize(good_eles.pt / 1000.0)

flat = pts_gev.values
print(f"{len(flat)} selected electrons over {pts_gev.n_events} events")
counts = histogram_counts(flat, 10, 0.0, 100.0)
for i, count in enumerate(counts):
    lo, hi = 10.0 * i, 10.0 * (i + 1)
    print(f"  [{lo:5.1f}, {hi:5.1f}) {'#' * int(count)} {count}")
