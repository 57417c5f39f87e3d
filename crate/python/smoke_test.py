"""Smoke test for the Python bindings: simulate, compress, train, evaluate."""

import math
import os
import tempfile

import reel


def main():
    cfg = reel.SimConfig.preset("heat", 32)
    cfg.steps = 60
    traj = reel.simulate(cfg)
    assert traj.n_steps == 60 and len(traj) == 61
    truth = traj.theta_true
    print("simulated", traj.model, traj.field_names, "true", dict(zip(traj.param_names, truth)))

    cds = reel.preprocess(traj, ratio=0.1, seed=3, percentile=90.0)
    print("compressed: n_val", cds.n_val, "n_freq", cds.n_freq, "of", cfg.nx * cfg.ny)
    assert cds.n_val == math.ceil(0.1 * cfg.nx * cfg.ny)
    assert reel.loss(cds, truth) < 1e-20
    assert max(abs(g) for g in reel.grad(cds, truth)) < 1e-8

    with tempfile.TemporaryDirectory() as d:
        p = os.path.join(d, "h.cds")
        cds.save(p)
        again = reel.CompressedDataset.load(p)
    assert reel.loss(again, [0.4, 2.5]) == reel.loss(cds, [0.4, 2.5])

    res = reel.train(cds, epochs=200, lr=0.1, seed=1)
    errs = [abs(a - b) / b for a, b in zip(res["theta"], truth)]
    print("learned", res["theta"], "relative errors", errs)
    assert res["loss_history"][-1] < res["loss_history"][0]
    assert max(errs) < 0.05

    raw = reel.raw_dataset(traj)
    assert abs(reel.loss(raw, [0.4, 2.5]) / reel.loss_baseline(traj, [0.4, 2.5]) - 1) < 1e-12

    mse = reel.rollout_mse(cfg, truth, [100, 101], 20)
    assert all(v == 0.0 for v in mse.values()), mse

    field = traj.field("T", 10)
    beta = reel.percentile_threshold(field, 90.0)
    val, freq, kept = reel.vfdd(field, beta)
    err = max(abs(v + f - x) for rv, rf, rx in zip(val, freq, field) for v, f, x in zip(rv, rf, rx))
    assert err < 1e-12 and kept > 0
    print("split: kept", kept, "bins, reconstruction error", err)

    try:
        reel.SimConfig.preset("nope")
    except ValueError as e:
        print("bad model rejected:", e)
    else:
        raise AssertionError("unknown model accepted")
    print("ok")


if __name__ == "__main__":
    main()
