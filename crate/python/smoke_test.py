"""Smoke test for the operon Python bindings.

Build and install the extension first:

    pip install --no-build-isolation ./crates/python
    python python/smoke_test.py
"""

import math
import os
import tempfile

import operon


def main():
    u = operon.sample_grf(101, seed=1)
    assert len(u) == 101 and all(abs(x) <= 1.0 for x in u)
    assert u == operon.sample_grf(101, seed=1)

    v = operon.sample_periodic_fourier(101, seed=2)
    assert abs(v[0] - v[-1]) < 1e-12

    n = 101
    x = [j / (n - 1) for j in range(n)]
    field = operon.solve("diffusion", [0.1] * n, [math.sin(2 * math.pi * xi) for xi in x], 101)
    assert len(field) == 101 and len(field[0]) == n
    exact = math.exp(-0.1 * (2 * math.pi) ** 2) * math.sin(2 * math.pi * x[25])
    assert abs(field[-1][25] - exact) < 1e-3

    ds = operon.generate_dataset("advdiff", 12, 4, seed=3, sensor_count=21, nx=41, nt=21)
    assert len(ds) == 48 and ds.m == 21 and ds.problem == "advdiff"
    u_s, v_s, (xq, tq), target = ds.record(0)
    assert len(u_s) == len(v_s) == 21 and 0.0 <= xq <= 1.0 and 0.0 <= tq <= 1.0
    train, test = ds.split(0.75, 0)
    assert not set(train) & set(test) and len(train) + len(test) == 12

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "d.bin")
        ds.save(path)
        assert operon.Dataset.load(path).digest() == ds.digest()

        counts = {}
        for kind in ("fnn", "deeponet", "edeeponet"):
            model = operon.Model(kind, m=21, seed=4)
            counts[kind] = model.parameter_count()
            curve = model.fit(ds, epochs=3, lr=1e-3)
            assert [row[0] for row in curve] == [1, 2, 3]
            pred = model.predict([[u_s], [v_s]], [[xq, tq]])
            assert len(pred) == 1 and math.isfinite(pred[0])

            ckpt = os.path.join(tmp, kind + ".bin")
            model.save(ckpt)
            assert operon.Model.load(ckpt).predict([[u_s], [v_s]], [[xq, tq]]) == pred

        ref = counts["edeeponet"]
        assert all(abs(c / ref - 1.0) <= 0.05 for c in counts.values()), counts

    try:
        operon.Model("bogus")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown model kind accepted")

    print("python smoke test passed:", counts)


if __name__ == "__main__":
    main()
