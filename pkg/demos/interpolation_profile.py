"""K-functional bracket between B^0_{2,2} and B^4_{2,2} for one white-noise signal.

The 64-cycle spans only about four octaves, so a level split beats both
trivial splits only when the smoothness gap is large; with a gap of 1 the
trivial splits are optimal at every t.
"""
import numpy as np

from opspaces import build_partition_of_unity, build_space, spectral_decompose
from opspaces.interpolation import k_functional_rows, real_interp_norm
from opspaces.norms import NormSpec, norm

spec = spectral_decompose(build_space("cycle", 64))
pou = build_partition_of_unity()
# white noise touches every dyadic scale, so level splits have room to win
f = np.random.default_rng(2).standard_normal(64)

A1, A2 = NormSpec(0, 2, 2, "besov"), NormSpec(4, 2, 2, "besov")
res = real_interp_norm(spec, pou, f, A1, A2, theta=0.5, q=2)
rows = k_functional_rows(res)
print(f"{len(rows)} grid points; rows where a level split beats both trivial splits:")
print(f"{'t':>10} {'K lower':>10} {'K upper':>10} split")
for r in rows:
    if isinstance(r["split_k"], str):
        continue
    print(f"{r['t']:10.4g} {r['K_lower']:10.4f} {r['K_upper']:10.4f} {r['split_k']}")
target = float(norm(spec, pou, f, NormSpec(2, 2, 2, "besov")))
print(f"interpolation norm (upper) {res.value:.4f}, lower {res.lower:.4f}, target B^2 {target:.4f}")
