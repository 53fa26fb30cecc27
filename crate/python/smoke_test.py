#!/usr/bin/env python3
"""Smoke test of the Python bindings.

Builds expect the extension module next to this script or on
PYTHONPATH; see the README for the build-and-link steps. Exercises the
full chain on a small synthetic problem: data generation, fitting,
prediction, fragility curves and sensitivity indices.
"""

import math
import os
import shutil
import subprocess
import sys
import tempfile


def ensure_module():
    here = os.path.dirname(os.path.abspath(__file__))
    target = os.path.join(here, "..", "target", "release", "libfragility_uq.so")
    dest = os.path.join(here, "fragility_uq.so")
    if os.path.exists(target) and (
        not os.path.exists(dest)
        or os.path.getmtime(target) > os.path.getmtime(dest)
    ):
        shutil.copyfile(target, dest)
    if not os.path.exists(dest):
        print("building extension module...")
        subprocess.run(
            ["cargo", "build", "--release", "-p", "fragility-uq-py"],
            cwd=os.path.join(here, ".."),
            check=True,
        )
        shutil.copyfile(target, dest)
    sys.path.insert(0, here)


def main():
    ensure_module()
    import fragility_uq as fuq

    names, means, covs = fuq.testbed_inputs()
    assert len(names) == 6 and names[4] == "TPY29"

    ims, xs, ys = fuq.make_testbed(220, seed=3, variant="linear")
    assert len(ims) == len(xs) == len(ys) == 220
    assert all(a > 0 for a in ims)

    model = fuq.GpSurrogate.fit(
        ims, xs, ys, variant="hetero", seed=1, restarts=5, max_evals=250
    )
    q2 = model.loo_q2()
    print(f"LOO Q2 = {q2:.3f}")
    assert 0.5 < q2 <= 1.0

    cov = model.coverage([0.1, 0.5, 0.9])
    assert all(0.0 <= c <= 1.0 for c in cov)
    assert cov[0] <= cov[1] <= cov[2]

    mean, lat_sd, obs_sd = model.predict(5.0, xs[0])
    assert math.isfinite(mean) and obs_sd >= lat_sd >= 0.0
    # the variance identity
    phi2 = obs_sd**2 - lat_sd**2
    assert phi2 > 0

    p = model.psi1(5.0, xs[0], 1.0)
    assert 0.0 < p < 1.0
    truth = fuq.testbed_true_fragility(5.0, xs[0], "linear")
    print(f"psi1 = {p:.3f}, true = {truth:.3f}")
    assert abs(p - truth) < 0.35

    draws = model.sample_posterior([(3.0, xs[0]), (6.0, xs[1])], count=64, seed=9)
    assert len(draws) == 64 and len(draws[0]) == 2

    sample = xs[:150]
    curves = model.fragility_curves(
        0.5, 20.0, 25, sample, 1.0, [0.1, 0.9], p_draws=60, seed=4
    )
    for key in ("a", "mean", "quantile_0.1", "quantile_0.9", "bilevel_0.1", "bilevel_0.9"):
        assert key in curves and len(curves[key]) == 25, key
    assert all(0.0 <= v <= 1.0 for v in curves["mean"])
    assert all(
        lo <= hi + 1e-12
        for lo, hi in zip(curves["quantile_0.1"], curves["quantile_0.9"])
    )

    sens = model.sensitivity(
        "sobol", means, covs, 0.5, 20.0, 12, 1.0, m=800, p_draws=10, bootstrap=20, seed=5
    )
    assert len(sens["first"]) == 6
    assert all(s >= 0.0 for s in sens["first_sigma_mc"])
    print("sobol first-order:", [round(v, 3) for v in sens["first"]])

    # determinism of the bindings
    sens2 = model.sensitivity(
        "sobol", means, covs, 0.5, 20.0, 12, 1.0, m=800, p_draws=10, bootstrap=20, seed=5
    )
    assert sens["first"] == sens2["first"]

    # model file round trip
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.json")
        model.save(path)
        again = fuq.GpSurrogate.load(path)
        assert abs(again.predict(5.0, xs[0])[0] - mean) < 1e-12

    print("smoke test passed")


if __name__ == "__main__":
    main()
