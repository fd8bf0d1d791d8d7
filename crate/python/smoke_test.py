"""Smoke test for the pycurvarb extension module.

Build and install first:
    pip install maturin
    maturin build --release -m crates/py/Cargo.toml -o dist
    pip install dist/pycurvarb-*.whl
"""

import math

import pycurvarb as cv

SHARP_D3 = math.sqrt(3) / (2 * math.pi)


def close(a, b, rel):
    return abs(a - b) <= rel * abs(b)


def main():
    tri = cv.Domain.simplex(3)
    assert tri.dim == 2 and len(tri.vertices) == 3
    assert tri.contains([0.0, 0.0]) and not tri.contains([2.0, 0.0])
    assert close(tri.inradius ** 2, 1 / 6, 1e-12)

    # F(p, M + cI) = F(p, M) - c/2
    m = [[1.0, 0.3], [0.3, -2.0]]
    f = cv.f_operator([1.0, 0.5], m)
    shifted = [[1.5, 0.3], [0.3, -1.5]]
    assert abs(cv.f_operator([1.0, 0.5], shifted) - (f - 0.25)) < 1e-12

    disk = cv.Domain.disk()
    w = cv.solve_mcf(disk, h=0.02)
    assert close(w.max_value, 1.0, 0.02), w.max_value

    wide = cv.solve_mincurv(tri, h=tri.inradius / 20)
    assert close(wide.max_value, SHARP_D3, 0.05), wide.max_value
    assert wide.summary()["dim"] == 2

    extinction, rate = cv.front_area_rate(tri)
    assert close(rate, -2 * math.pi, 0.01), rate
    assert close(2 * extinction, SHARP_D3, 0.01), extinction

    cert = cv.check_certificate("quadratic", 4, samples=2000)
    assert cert["verdict"] == "supersolution-evidence"
    assert abs(cert["bound_value"] - 0.75) < 1e-12

    times = cv.circle_exit_times(tri, dt=1e-4, n_paths=500, seed=1)
    stats = cv.exit_time_statistics(times)
    assert close(stats["essinf_estimate"]["value"], 1 / 6, 0.1), stats["essinf_estimate"]
    assert times == cv.circle_exit_times(tri, dt=1e-4, n_paths=500, seed=1)

    exits = cv.skew_gradient_exit_times(disk, x0=[0.3, 0.0], dt=1e-4, n_paths=100)
    assert all(abs(t - 0.91) < 0.05 for t in exits)

    ts = [0.0, 0.1, 0.2]
    mu = [[1 / 3, 1 / 3, 1 / 3], [0.4, 0.3, 0.3], [0.35, 0.3, 0.35]]
    s = cv.strategy(ts, mu, "quadratic", horizon=0.2)
    assert len(s["theta"]) == 3 and abs(s["self_financing_residual"]) < 1e-12

    try:
        cv.Domain.simplex(1)
    except ValueError:
        pass
    else:
        raise AssertionError("simplex(1) accepted")

    print("pycurvarb", cv.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
