"""Smoke test for the pyrfkde extension module.

Build and install first, e.g.
    pip install maturin
    cd crates/python && maturin develop --release
then run
    python python/smoke_test.py
"""

import json
import math

import pyrfkde as rf


def close(a, b, tol):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main():
    k = rf.Kernel("epanechnikov")
    close(k.mass(), 1.0, 1e-10)
    close(k.squared_integral(), 0.6, 1e-10)
    close(k(0.0), 0.75, 1e-15)

    model = rf.FieldModel.iid_gaussian(0.0, 1.0)
    window = rf.LatticeWindow(2, 30)
    s = rf.sample(model, window, 42)
    assert len(s) == 900 and s.window.d == 2
    assert s.values == rf.sample(model, window, 42).values

    pts = [-1.0, 0.0, 0.5]
    fast = rf.density_estimate(s, k, 0.3, pts)
    slow = rf.naive_density_estimate(s.values, k, 0.3, pts)
    for a, b in zip(fast, slow):
        close(a, b, 1e-12)

    close(rf.limit_variance(model, k, 0.0), 0.6 / math.sqrt(2 * math.pi), 1e-9)
    close(rf.eta(model, k, 0.0, 1.0, 1.0, 0.0), 0.2393653682408596, 1e-9)
    lap = rf.FieldModel.iid_laplace(1.0)
    close(rf.bias(lap, rf.Kernel("uniform"), 0.1, 0.0), 0.5 - (1 - math.exp(-0.05)) / 0.1, 1e-10)

    ma = rf.FieldModel.moving_average(2, 1)
    close(ma.marginal_variance(), 9.0, 1e-12)
    assert ma.dependence_radius == 2

    seq = rf.MixingSequence.power_law(1.0, 4.0)
    assert seq.series_condition(1)[0] == "converges"
    assert rf.MixingSequence.power_law(0.25, 2.0).series_condition(1)[0] == "diverges"
    assert seq.m_n(1, 0.01) == 10
    rows = seq.lemma2_limits(1, 1.0, 0.5, [10**e for e in range(2, 9)])
    assert [r[1] for r in rows] == [3, 6, 10, 19, 32, 56, 100]

    close(rf.normal_cdf(1.959964), 0.975, 1e-6)
    d, p = rf.ks_test([rf.normal_cdf(0.0)] * 100, 1.0)
    assert 0.0 <= d <= 1.0 and 0.0 <= p <= 1.0

    config = {
        "schema_version": 1,
        "seed": 7,
        "model": {"variant": "iid_uniform", "parameters": {"a": 0.0, "b": 1.0}},
        "kernel": {"family": "uniform"},
        "window": {"d": 2, "n": 20},
        "bandwidth": {"fixed": 0.25},
        "points": [0.5],
        "replicates": 200,
    }
    report = rf.run_clt(json.dumps(config), threads=2)
    assert report["replicates"] == 200 and len(report["points"]) == 1
    reps = rf.run_replicates(json.dumps(config), threads=1)
    assert len(reps) == 200 and reps == rf.run_replicates(json.dumps(config), threads=4)

    try:
        rf.run_clt(json.dumps({**config, "bandwidth": {"schedule": {"c": 1.0, "beta": 1.2}}}))
    except ValueError as e:
        assert "beta" in str(e)
    else:
        raise AssertionError("beta = 1.2 accepted")

    print("pyrfkde smoke test passed")


if __name__ == "__main__":
    main()
