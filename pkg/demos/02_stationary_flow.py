# %% [markdown]
# Stationary flow
# ---------------
# With quadratic friction d(m) = |m| m the stationary problem is nonlinear.
# Newton's method on the saddle-point system converges in a handful of steps.

# %%
import numpy as np

from pipewave.damping import DampingModel
from pipewave.galerkin import assemble, build_space, pressure_traces
from pipewave.netgraph import paper_network, single_pipe
from pipewave.solvers import solve_stationary, steady_residual

# one pipe, pressure 1 -> 0: the exact solution m = 1, p = 1 - x lies in every space
ops = assemble(build_space(single_pipe(1.0, 0.0), "spectral", 5), DampingModel.power_abs())
s = solve_stationary(ops, [1.0, 0.0])
print("flux coefficients:", np.round(s.m, 12))

# %%
net = paper_network()
ops = assemble(build_space(net, "fem", 0.1), DampingModel.power_abs())
hist = []
steady = solve_stationary(ops, net.final_boundary_values(), history=hist)
print("Newton residuals:", " ".join(f"{r:.1e}" for r in hist))
print("residual at solution:", steady_residual(ops, steady, net.final_boundary_values()))

# %% [markdown]
# Pressure is only L2 on each pipe, but junction values can be recovered from
# the flux equation. All pipes meeting at a junction agree.

# %%
traces = pressure_traces(ops, steady.p, steady.m)
for v in net.vertices:
    vals = [traces[(k, v.id)] for k, e in enumerate(net.edges) if v.id in (e.tail, e.head)]
    print(v.id, " ".join(f"{x:.6f}" for x in vals))

# mean flux per pipe; e4 carries nothing by symmetry
for k, e in enumerate(net.edges):
    print(e.id, f"{ops.space.edge_flux(steady.m, k).mean():+.5f}")
