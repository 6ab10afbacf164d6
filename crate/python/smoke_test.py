"""Smoke test for the specdim_py extension.

Imports an installed module when available, otherwise loads the shared
library left by `cargo build -p specdim-py --features extension-module`.
"""

import importlib.util
import math
import os
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    try:
        import specdim_py

        return specdim_py
    except ImportError:
        pass
    candidates = [os.environ.get("SPECDIM_PY_LIB")]
    for profile in ("release", "debug"):
        for name in ("libspecdim_py.so", "libspecdim_py.dylib", "specdim_py.dll"):
            candidates.append(str(ROOT / "target" / profile / name))
    for c in candidates:
        if c and os.path.exists(c):
            tmp = tempfile.mkdtemp()
            ext = ".pyd" if c.endswith(".dll") else ".so"
            dst = os.path.join(tmp, "specdim_py" + ext)
            shutil.copy(c, dst)
            spec = importlib.util.spec_from_file_location("specdim_py", dst)
            mod = importlib.util.module_from_spec(spec)
            spec.loader.exec_module(mod)
            return mod
    sys.exit("specdim_py not found; build it with `cargo build -p specdim-py --features extension-module`")


def main():
    sd = load()

    rho = sd.Gauge("power", alpha=0.5)
    assert abs(rho.ln_at(0.01) - 0.5 * math.log(0.01)) < 1e-12
    assert sd.compare(rho, sd.Gauge("power", alpha=1.0)) == "Precedes"
    assert sd.compare(sd.Gauge("log_power", alpha=1.0), sd.Gauge({"name": "log_power", "params": {"alpha": 1.0}})) == "Equivalent"

    mu = sd.Measure.semicircle()
    assert abs(mu.total_mass() - 1.0) < 1e-12
    f = mu.borel(complex(0.0, 1.0))
    assert f.imag > 0

    atoms = [(-1.0, 0.25), (0.5, 0.5), (2.0, 0.25)]
    rows = sd.boole_check(sd.Measure.atomic(atoms), [10.0, 50.0])
    assert all(r["rel_err"] < 0.01 for r in rows), rows

    got = sd.rank_one_spectrum(sd.Measure.atomic(atoms), 0.7)
    want = sd.rank_one_oracle(atoms, 0.7)
    assert len(got) == len(want)
    for (e1, w1), (e2, w2) in zip(got, want):
        assert abs(e1 - e2) < 1e-10 and abs(w1 - w2) < 1e-10

    est, positive = sd.upper_lyapunov({"kind": "constant", "value": 0.0}, 3.0)
    assert abs(est - math.log((3 + math.sqrt(5)) / 2)) < 1e-4 and positive

    t = [1.0, 2.0]
    av = sd.time_average({"radius": 64}, [0], {"kind": "moment", "m": 2.0}, t)
    for T, v in zip(t, av):
        assert abs(v - 2 * T * T / 3) < 1e-9, (T, v)

    cfg = {"command": "lyapunov", "params": {"potential": {"kind": "constant", "value": 0.0}, "n_max": 2000}, "seed": 1}
    csv1, rep1 = sd.run(cfg)
    csv2, rep2 = sd.run(cfg)
    assert csv1 == csv2 and rep1 == rep2
    assert csv1.startswith("#")

    try:
        sd.Gauge("powr")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown gauge accepted")

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
