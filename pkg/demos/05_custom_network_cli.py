# %% [markdown]
# Custom networks and the command line
# ------------------------------------
# Networks are plain JSON. This writes a small looped network, then drives the
# `pipewave` command on it. Output goes to a scratch directory.

# %%
import json
import subprocess
import sys
import tempfile
from pathlib import Path

from pipewave.netgraph import BoundaryRamp, Edge, build_network, network_to_dict

net = build_network(
    ["in", "a", "b", "out"],
    [Edge("p1", "in", "a", 2.0), Edge("p2", "a", "b", 1.0), Edge("p3", "a", "b", 1.5), Edge("p4", "b", "out", 1.0)],
    {"in": BoundaryRamp(50.0, 5.0, 2.0), "out": BoundaryRamp(40.0)},
)
work = Path(tempfile.mkdtemp())
(work / "loop.json").write_text(json.dumps(network_to_dict(net), indent=2))
config = {
    "network": "loop.json",
    "discretization": {"method": "spectral", "order": 6},
    "time": {"dt": 0.02, "t_end": 10, "sample_times": [0, 2, 4, 6, 8, 10]},
    "table1": {"fit_window": [4, 10]},
}
(work / "run.json").write_text(json.dumps(config, indent=2))


def pipewave(*args):
    res = subprocess.run([sys.executable, "-m", "pipewave.cli", *args], cwd=work, capture_output=True, text=True)
    print(f"$ pipewave {' '.join(args)}   [exit {res.returncode}]")
    print(res.stdout + res.stderr)


# %%
pipewave("check", "run.json")
pipewave("steady", "run.json", "--set", "discretization.order=2")
pipewave("run", "run.json")
pipewave("run", "run.json", "--set", "time.dt=0")  # config error, exit 2
