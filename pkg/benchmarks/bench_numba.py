"""Compare the numba kernels against the interpreted numpy fallback.

Each backend runs in its own interpreter because the switch
(CABLENMPC_DISABLE_NUMBA) is read once at import time.

    python3 benchmarks/bench_numba.py [--repeat 5]
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _best(fn, repeat):
    fn()  # warm-up pays for compilation or the first cache load
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def worker(repeat):
    from cablenmpc import _jit
    from cablenmpc.nmpc.ocp import OcpConfig, PayloadNmpc
    from cablenmpc.payload import PayloadReference, PayloadState
    from cablenmpc.scenario import Scenario
    from cablenmpc.sim import SystemParams, equilibrium_world, run_scenario
    from cablenmpc.sim.dynamics import rk4_world

    sc = Scenario.bundled("hover_separation")
    payload, robots, model = sc.payload_params(), sc.robot_params(), sc.allocation()
    sys_p = SystemParams.build(payload, robots, model.rho)
    pos = np.array([0.0, 0.0, 0.5])
    world, cmd = equilibrium_world(pos, payload, robots, model)
    thrust = np.ascontiguousarray(cmd.thrust, dtype=np.float64)
    moments = np.ascontiguousarray(cmd.moments, dtype=np.float64)
    args = sys_p.args()

    s0 = world.vector.copy()
    s0[7:10] = [0.2, -0.1, 0.05]  # drifting payload so the checksum exercises the dynamics
    s0[10:13] = [0.0, 0.0, 0.3]

    def physics():
        s = s0
        for _ in range(1000):
            s, _ = rk4_world(s, thrust, moments, 1e-3, *args)
        return s

    cfg = OcpConfig(d_r=0.6, mode="rti")
    solver = PayloadNmpc(payload, model, cfg)
    refs = [PayloadReference.hold(pos + [0.1, 0.0, 0.0]) for _ in range(cfg.horizon + 1)]
    x0 = PayloadState.at_rest(pos)

    def nmpc():
        return solver.solve(x0, refs)

    results = {
        "numba": _jit.USE_NUMBA,
        "physics_1000_steps_s": _best(physics, repeat),
        "nmpc_rti_solve_s": _best(nmpc, repeat),
        "closed_loop_1s_s": _best(lambda: run_scenario(sc, 1.0), max(1, repeat // 2)),
        "checksum": float(np.sum(physics())),
    }
    print(json.dumps(results))


def run_backend(disable, repeat):
    env = dict(os.environ, CABLENMPC_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, __file__, "--worker", "--repeat", str(repeat)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.worker:
        worker(args.repeat)
        return

    jit = run_backend(False, args.repeat)
    ref = run_backend(True, args.repeat)
    print(f"{'benchmark':<24}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for key in ("physics_1000_steps_s", "nmpc_rti_solve_s", "closed_loop_1s_s"):
        a, b = jit[key] * 1e3, ref[key] * 1e3
        print(f"{key[:-2]:<24}{a:>12.2f}{b:>12.2f}{b / a:>9.1f}x")
    diff = abs(jit["checksum"] - ref["checksum"])
    print(f"physics checksum difference between backends: {diff:.3e}")


if __name__ == "__main__":
    main()
