"""
Convergence sweeps from the harness
===================================

The harness wires everything together: a fine reference by RKN4, an
enriched multiscale basis per coarse mesh, a reduced ROW solve, and the
energy error at the final time.  These are the same runs the command line
tool performs with ``ehlod spatial``, ``ehlod temporal`` and
``ehlod localization`` under the desk profile.
"""
from dataclasses import replace

from ehlod.harness import (
    least_squares_eoc,
    profile_config,
    run_localization_sweep,
    run_spatial_convergence,
    run_temporal_convergence,
    temporal_eoc,
    write_csv,
)

# %%
# Spatial convergence for p=1 with one enrichment step.  The slope is fitted
# over the three finest mesh pairs.
cfg = replace(profile_config("spatial"), p=1, j=1)
recs = run_spatial_convergence(cfg)
print(write_csv(recs))
print("least-squares EOC", round(least_squares_eoc(recs), 2))

# %%
# Temporal convergence with a fixed, very accurate space.
recs, floor = run_temporal_convergence(profile_config("temporal"))
print(write_csv(recs))
print(f"spatial floor {floor:.2e}, EOC {temporal_eoc(recs):.2f}")

# %%
# Localization: error against patch size for each strategy.
recs, summary = run_localization_sweep(replace(profile_config("localization"), ell=[1, 2, 3, 4]))
print(write_csv(recs))
print(summary)
