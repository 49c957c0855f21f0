"""Decompose one random signal into new atoms and rebuild it."""
import numpy as np

from opspaces import build_partition_of_unity, build_space, spectral_decompose
from opspaces.atoms import atomic_decompose, coefficient_norm, reconstruct, validate_atom
from opspaces.norms import NormSpec, norm

spec = spectral_decompose(build_space("cycle", 64))
pou = build_partition_of_unity()
f = np.random.default_rng(1).standard_normal(64)

dec = atomic_decompose(spec, None, pou, f, alpha=0.0, p=1.0, q=2.0, M=2)
_, dist = reconstruct(dec)
print(f"atoms: {len(dec)}")
print(f"relative residual: {dec.residual:.2e} (L2 distance {dist:.2e})")
print(f"(sum |lambda|)/||f||_F: {coefficient_norm(dec, 1) / float(norm(spec, pou, f, NormSpec(0, 1, 2))):.4f}")
print(f"normalization constant: {dec.normalization:.4g}")
ok = all(validate_atom(a, spec, pou, constant=dec.normalization * (1 + 1e-9)).ok for a in dec.atoms)
print(f"all atoms valid up to that constant: {ok}")
print("stopping-set sizes:", dec.stopping_data["O_sizes"])
