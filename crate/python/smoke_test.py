"""Smoke test for the `rhodium` extension module.

Build and install the wheel first:

    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o target/wheels
    pip install target/wheels/rhodium_py-*.whl

then run `python python/smoke_test.py`. Exits non-zero if any check fails.
"""

import math
import sys

import rhodium


def check(name, ok, detail=""):
    print(f"{'ok  ' if ok else 'FAIL'} {name} {detail}")
    return ok


def main():
    results = []

    est = rhodium.estimates()
    results.append(check("linewidth", 1.0e-19 <= est["linewidth_ev"] <= 2.0e-19, est["linewidth_ev"]))
    results.append(check("tau_d ratio", abs(est["tau_d_over_tau0"] - 0.88) < 1e-12, est["tau_d_over_tau0"]))

    results.append(check("bessel zero", abs(rhodium.bessel_j0(2.404825557695773)) < 1e-10))

    solutions = rhodium.bragg_angle_solve()
    theta = math.degrees(solutions[0]["theta"])
    results.append(check("bragg angle", 7.6 < theta < 7.7, f"{theta:.4f} deg"))

    geom = rhodium.Geometry.bragg()
    residual = rhodium.cancellation_residual(geom, n_sites=200, seed=1)
    results.append(check("field cancellation", residual <= 1e-10, residual))
    e = geom.electric_field([0.0, 0.0, 0.0])
    results.append(check("field at origin", max(abs(c) for c in e) < 1e-12))

    results.append(check("closed-form flm", abs(rhodium.flm_closed_form(geom, 0.0) - 9.0) < 1e-12))
    value, stderr = rhodium.flm_mc(geom, 1e-12, n_samples=50_000, seed=3)
    closed = rhodium.flm_closed_form(geom, 1e-12)
    results.append(check("mc flm", abs(value - closed) <= 3 * stderr, f"{value:.5f} vs {closed:.5f}"))

    truth = rhodium.BeatParams(n0=40.0, tau0=rhodium.RH_TAU0_S, tau_d=485.7, phi0=0.7, t_pump=3600.0)
    minima = rhodium.rate_minima(truth, 3)
    expected = [485.7 * (math.pi / 2 + m * math.pi - 0.7) ** 2 for m in range(3)]
    results.append(check("beat minima", all(abs(a / b - 1) < 1e-9 for a, b in zip(minima, expected))))

    gamma, kalpha = rhodium.simulate_counts(truth, 50.0, width=60.0, horizon=36_000.0, seed=7)
    ratio = rhodium.normalize(gamma, kalpha)
    results.append(check("simulate", len(gamma) == 600 and len(ratio) == 600))

    start = rhodium.BeatParams(n0=1.0, tau0=rhodium.RH_TAU0_S, tau_d=4857.0, phi0=0.0, t_pump=3600.0)
    fit = rhodium.fit_beat(gamma, start)
    tau_fit = fit["params"]["tau_d"]
    results.append(check("fit tau_d", abs(tau_fit / 485.7 - 1) < 0.05, f"{tau_fit:.2f} s"))

    try:
        rhodium.tau_d(4857.0, 0.0, 1.0, 1.0)
        results.append(check("domain error raises", False))
    except ValueError:
        results.append(check("domain error raises", True))

    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(main())
