"""Detuning sweeps for both setups, written as CSV and summarized as tables."""

# %%
import csv
import io

from herald_sim.cli import load_config, parse_config, rows_to_csv, run_sweep

# %% [markdown]
# Three-cavity gate versus Delta_E2 at C = 100 and C = 600. The preset grid
# runs from 60 to 240 in steps of 20.

# %%
cfg = parse_config(load_config(None, "fig2", {"samples": 20}))
rows = run_sweep(cfg)
print(f"{'C':>5} {'dE2':>5} {'P':>8} {'P_an':>8} {'1-F':>10}")
for r in rows:
    print(f"{r['C']:5.0f} {r['delta_E2_over_gamma']:5.0f} {r['P_numeric']:8.4f} "
          f"{r['P_analytic']:8.4f} {r['infidelity']:10.3e}")

# %%
text = rows_to_csv(rows)
print(text.splitlines()[0])
assert len(list(csv.reader(io.StringIO(text)))) == len(rows) + 1

# %% [markdown]
# Two-cavity (DFS) gate at lambda = 1.84.

# %%
cfg4 = parse_config(load_config(None, "fig4", {"samples": 20, "C": [600]}))
for r in run_sweep(cfg4):
    print(f"dE2 = {r['delta_E2_over_gamma']:5.0f}   P' = {r['P_numeric']:.4f}   "
          f"1-F = {r['infidelity']:.3e}")
