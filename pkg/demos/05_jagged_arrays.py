"""The jagged-array kernels every executor is built on."""
from jagq import (JaggedArray, cross_nest, elementwise_binary, mask_innermost,
                  reduce_innermost)

pts = JaggedArray.from_lists([[50000.0, 60000.0], [], [42000.0, 7000.0, 81000.0]])
print("pt (MeV):      ", pts.to_lists())
print("offsets/values:", pts.offset_levels[0].tolist(), pts.values.tolist())

gev = elementwise_binary("/", pts, 1000.0)
print("pt (GeV):      ", gev.to_lists())

mask = elementwise_binary(">", gev, 45.0)
print("pt > 45 GeV:   ", mask.to_lists())

selected = mask_innermost(gev, mask)
print("selected:      ", selected.to_lists())
print("count per event:", reduce_innermost("count", selected).to_lists())
print("sum per event:  ", reduce_innermost("sum", gev).to_lists())

jets = JaggedArray.from_lists([[1.0, 2.0], [3.0]])
eles = JaggedArray.from_lists([[0.1, 0.2, 0.3], []])
level0, level1 = cross_nest(jets, eles)
print("jet x electron pairing offsets:", level0.tolist(), level1.tolist())
