# %% [markdown]
# Exponential decay to the steady state
# -------------------------------------
# The inlet pressure drops from 100 to 90 during t in [0, 1]. The energy of the
# deviation from the final steady state decays exponentially, at a rate that
# barely depends on the discretization. Coarse settings here keep the run short;
# the full table uses dt = 0.01 and t up to 50 (see `pipewave table1`).

# %%
import numpy as np

from pipewave.diagnostics import ExperimentConfig, run_full_row, table1_csv
from pipewave.solvers import SolverOptions

cfg = ExperimentConfig(options=SolverOptions(dt=0.02, t_end=30.0, sample_times=[0, 5, 10, 15, 20, 25, 30]),
                       fit_window=(10.0, 30.0))
rows = [run_full_row(cfg, "fem", 0.2), run_full_row(cfg, "spectral", 4)]
print(table1_csv(rows))

# %% [markdown]
# Log-energies are straight lines after the ramp. The fitted slope is the same
# for both discretizations to three digits.

# %%
for r in rows:
    slopes = -np.diff(np.log(r.energies)) / np.diff(r.times)
    print(r.method, np.round(slopes, 4), "gamma", round(r.gamma, 4))

# the time derivative energy decays at the same rate
for r in rows:
    print(r.method, "gamma of E(dp/dt, dm/dt):", round(r.gamma_derivative, 4))
