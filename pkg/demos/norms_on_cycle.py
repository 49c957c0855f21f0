"""Besov and Triebel-Lizorkin norms of a few signals on the 64-cycle."""
import numpy as np

from opspaces import NormSpec, build_partition_of_unity, build_space, norm, spectral_decompose

spec = spectral_decompose(build_space("cycle", 64))
pou = build_partition_of_unity()
rng = np.random.default_rng(0)

signals = {
    "delta": np.eye(64)[0],
    "smooth": np.cos(2 * np.pi * np.arange(64) / 64),
    "noise": rng.standard_normal(64),
}
cells = [NormSpec(a, p, q, kind) for a in (0.0, 1.0) for p, q in ((2, 2), (1, 2), (0.5, 1))
         for kind in ("besov", "triebel_lizorkin")]

print(f"{'alpha':>5} {'p':>4} {'q':>4} {'kind':>16} " + " ".join(f"{k:>10}" for k in signals))
for ns in cells:
    vals = " ".join(f"{float(norm(spec, pou, f, ns)):10.4f}" for f in signals.values())
    print(f"{ns.alpha:5g} {ns.p:4g} {ns.q:4g} {ns.kind:>16} {vals}")
