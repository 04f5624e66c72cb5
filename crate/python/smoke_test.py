"""Smoke test for the qsmooth_py extension.

Build and install first:
    pip install --no-build-isolation ./crates/python
"""

import json
import math

import qsmooth_py as q


def main():
    p = q.hardy_probabilities()
    assert math.isclose(p["DD"], 1 / 16, abs_tol=1e-15), p
    assert math.isclose(sum(p.values()), 1.0, abs_tol=1e-12), p
    assert q.hardy_paradox_holds()

    table, marginal, path = q.hardy_smoothing("DD")
    assert len(table) == 4 and math.isclose(sum(marginal), 1.0, abs_tol=1e-12)
    print("hardy DD MAP path", path)

    plus = [[0.5, 0.5], [0.5, 0.5]]
    w = q.fw_wigner(plus)
    assert math.isclose(sum(map(sum, w)), 1.0, abs_tol=1e-12)
    assert len(q.hb_wigner(plus)) == 4

    j = q.jump_kernel(4, 0.3)
    assert len(j) == 8

    f = [[1.0, 0.0], [0.0, 0.0]]
    g = [[0.5, -0.5], [-0.5, 0.5]]
    assert q.weak_convolution_residual(f, g, 0.2) < 1e-10

    cfg = json.loads(q.magnetometer_default_config())
    cfg["T"] = 0.5
    cfg["trials"] = 4
    s = json.loads(q.magnetometer_benchmark(json.dumps(cfg), seed=3))
    assert s["trials"] == 4

    res = q.regress([1, 2])
    assert all(ok for _, _, ok, _ in res), res
    res = q.regress([1], fault_f2=1e-6)
    assert not res[0][2]

    try:
        q.hardy_smoothing("XY")
    except ValueError:
        pass
    else:
        raise AssertionError("bad outcome accepted")

    print("qsmooth_py smoke test passed")


if __name__ == "__main__":
    main()
