"""Gradient-variance probe on the alert-then-off fixture.

Prints the trace estimate for the SAR and FiGAR-C optimal policies and then
shrinks the reaction window x. The FiGAR-C trace grows like 1/x while SAR
stays at 2.

    python demos/fixture_variance.py [--n-traj 4000]
"""
import argparse

from sarlab.varprobe import probe_fixture


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--n-traj", type=int, default=4000)
    args = p.parse_args()

    for kind in ("sar", "figar_c"):
        res = probe_fixture(kind, args.n_traj)
        print(f"{kind:8s} delta=1e-3  trace={res.trace:9.3f}  decisions/episode={res.mean_decisions:.2f}")

    print("\nreaction window sweep at delta = 1e-3")
    for x in (0.08, 0.04, 0.02):
        row = []
        for kind in ("sar", "figar_c"):
            res = probe_fixture(kind, args.n_traj, x=x)
            row.append(f"{kind}={res.trace:8.2f}")
        print(f"  x={x:g}  1/x={1 / x:5.1f}  " + "  ".join(row))


if __name__ == "__main__":
    main()
