"""Artifact emission: JSON reports, CSV/NPZ field dumps, plot data.

Reports are reproducible byte-for-byte for a fixed config and seed: keys
are sorted, iteration orders are fixed, and no wall-clock content enters
numeric fields.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, complex) or isinstance(obj, np.complexfloating):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def write_json(path, payload: dict):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def grid_tag(grid) -> dict:
    return {
        "n_x": grid.n_x, "x_max": grid.x_max, "kappa": grid.kappa,
        "d": grid.ygrid.d, "n_y": grid.ygrid.n_points,
    }


def write_snapshot_csv(path, grid, field):
    """Columns: x, y, Re u_1..N, Im u_1..N."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    x = grid.x_nodes
    y = grid.ygrid.nodes
    vals = field.values
    N = vals.shape[-1]
    cols = ["x", "y"] + [f"re_u{i + 1}" for i in range(N)] + \
        [f"im_u{i + 1}" for i in range(N)]
    with path.open("w") as fh:
        fh.write("# t = %.17g\n" % field.t)
        fh.write(",".join(cols) + "\n")
        for i in range(len(x)):
            for j in range(len(y)):
                row = [x[i], y[j]] + list(vals[i, j].real) + list(vals[i, j].imag)
                fh.write(",".join("%.17g" % v for v in row) + "\n")


def write_snapshots(out_dir, grid, snapshots):
    out_dir = Path(out_dir)
    for idx, snap in enumerate(snapshots):
        write_snapshot_csv(out_dir / f"snapshot_{idx:04d}.csv", grid, snap)
    np.savez(out_dir / "snapshots.npz",
             x=grid.x_nodes, y=grid.ygrid.nodes,
             times=np.array([s.t for s in snapshots]),
             values=np.stack([s.values for s in snapshots]))


def write_energy_csv(path, log):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write("t,u_norm,f_norm\n")
        for t, un, fn in zip(log.times, log.u_norms, log.f_norms):
            fh.write("%.17g,%.17g,%.17g\n" % (t, un, fn))


def write_trace_csv(path, ygrid, times, values):
    """Columns: t, y, Re g_1..N, Im g_1..N for one (p, k)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    y = ygrid.nodes
    N = values.shape[-1]
    cols = ["t", "y"] + [f"re_g{i + 1}" for i in range(N)] + \
        [f"im_g{i + 1}" for i in range(N)]
    with path.open("w") as fh:
        fh.write(",".join(cols) + "\n")
        for it, t in enumerate(times):
            for j in range(len(y)):
                row = [t, y[j]] + list(values[it, j].real) + list(values[it, j].imag)
                fh.write(",".join("%.17g" % v for v in row) + "\n")


def pair_slug(pair) -> str:
    p, k = pair
    return f"p{p.real:+.4f}{p.imag:+.4f}i_k{k}"


_PLOT_STUB = """\
#!/usr/bin/env python3
# Plot stub for charflow artifacts: reads the columnar files next to it.
# Usage: python plot_stub.py [energy.csv | snapshot_XXXX.csv | traces/*.csv]
import sys
import numpy as np
import matplotlib.pyplot as plt

for fname in sys.argv[1:]:
    data = np.genfromtxt(fname, delimiter=",", names=True, comments="#")
    names = data.dtype.names
    xcol = names[0]
    for col in names[1:]:
        plt.plot(data[xcol], data[col], label=col)
    plt.xlabel(xcol)
    plt.legend()
    plt.title(fname)
    plt.show()
"""


def write_plot_stub(out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "plot_stub.py").write_text(_PLOT_STUB)


def error_record(exc) -> dict:
    return {"error": type(exc).__name__, "message": str(exc),
            "exit_code": getattr(exc, "exit_code", 4)}
