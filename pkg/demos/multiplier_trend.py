"""Empirical norm of lam^{i beta} against F(0) + H, for growing beta, on the 64-cycle."""
from opspaces.experiments import ExperimentConfig, build_context, multiplier_experiment

cfg = ExperimentConfig(alphas=[0.0], qs=[2.0], trials=16)
ctx = build_context(cfg)
res = multiplier_experiment(cfg, ctx)

print(f"{'symbol':>16} {'p':>4} {'s':>6} {'empirical':>10} {'F(0)+H':>10} {'ratio':>8}")
for r in res.extra["reports"]:
    print(f"{r.symbol:>16} {r.p:4g} {r.s:6.3f} {r.empirical_norm:10.4f} {r.hormander_value:10.4f} {r.ratio:8.4f}")
for name, passed, detail in res.checks:
    print(("PASS " if passed else "FAIL ") + name, detail)
