"""Associate reconstructed electrons with truth electrons within dR < 0.1.

Shows aliases extending the data model (ptgev, all, has_match, mc), lambda
capture in the matching filter, and guarded First.
"""
from jagq import ElementKind, Session

from _common import DATASET_ID, demo_engine

engine = demo_engine()
session = Session()
df = session.source(DATASET_ID)
delta_r = session.declare_function("DeltaR", [ElementKind.FLOAT] * 4,
                                   ElementKind.FLOAT)

mc_part = df.TruthParticles
mc_ele = mc_part[(mc_part.pdgId == 11) | (mc_part.pdgId == -11)]
eles = df.Electrons

eles["ptgev"] = lambda e: e.pt / 1000.0
mc_part["ptgev"] = lambda t: t.pt / 1000.0


def good(p):
    return (p.ptgev > 20.0) & (abs(p.eta) < 1.4)


good_eles = eles[good]
good_mc = mc_ele[good]


def very_near(picks, p):
    "Truth candidates closer than dR 0.1 to the probe."
    return picks[lambda ps: delta_r(ps.eta, ps.phi, p.eta, p.phi) < 0.1]


good_eles["all"] = lambda e: very_near(good_mc, e)
good_eles["has_match"] = lambda e: e.all.Count() > 0
matched = good_eles[good_eles.has_match]
matched["mc"] = lambda e: e.all.First()

reco = engine.materialize(matched.ptgev)
truth = engine.materialize(matched.mc.ptgev)
resolution = engine.materialize(matched.mc.ptgev - matched.ptgev)

n = len(reco.values)
print(f"{n} matched electrons")
if n:
    deltas = resolution.values
    print(f"resolution (truth - reco) GeV: mean {deltas.mean():+.3f}, "
          f"spread {deltas.std():.3f}")
    for r, t in list(zip(reco.values, truth.values))[:5]:
        print(f"  reco {r:7.2f} GeV  <->  truth {t:7.2f} GeV")
