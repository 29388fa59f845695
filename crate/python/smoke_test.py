"""Smoke test for the `fusecurr` Python extension.

Build and stage the module first:

    cargo build --release -p fusecurr-py --features extension-module
    cp target/release/libfusecurr_py.so python/fusecurr.so

then run `python3 python/smoke_test.py`.
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import fusecurr  # noqa: E402


def checkerboard(n=16):
    return fusecurr.Image(n, n, [float((i + j) % 2) for i in range(n) for j in range(n)])


def main():
    cb = checkerboard()
    assert abs(fusecurr.avg_gradient(cb) - 1.0) < 1e-9
    assert abs(fusecurr.spatial_frequency(cb) - math.sqrt(2.0)) < 1e-9
    assert fusecurr.vif(cb, cb) == 1.0

    flat = fusecurr.Image.filled(16, 16, 0.4)
    assert fusecurr.std_dev(flat) == 0.0 and fusecurr.entropy(flat) == 0.0

    try:
        fusecurr.Image(4, 4, [0.0] * 16)
    except fusecurr.FusecurrError as e:
        assert "DimensionError" in str(e)
    else:
        raise AssertionError("tiny image accepted")

    with tempfile.TemporaryDirectory() as tmp:
        data = os.path.join(tmp, "data")
        paths = fusecurr.synth(data, pairs=2, size=32, seed=0)
        assert len(paths) == 4
        ir = fusecurr.Image.load(os.path.join(data, "pair000_ir.pgm"))
        vi = fusecurr.Image.load(os.path.join(data, "pair000_vi.pgm"))

        teacher = fusecurr.rule_teacher(ir, vi)
        m = fusecurr.metric_vector(teacher, ir, vi)
        assert sorted(m) == ["ag", "ei", "iqa", "sd", "vif"]
        assert fusecurr.viff(ir, vi, ir) < 1.0 and fusecurr.viff(ir, vi, vi) < 1.0

        same = fusecurr.degrade(vi, seed=3)
        assert max(abs(a - b) for a, b in zip(same.data(), vi.data())) <= 1.0 / 255.0
        harder = fusecurr.degrade(vi, blur=0.8, noise=0.5, seed=3)
        assert fusecurr.iqa_star(harder) != fusecurr.iqa_star(vi)

        net = fusecurr.StudentNet(seed=1)
        assert net.param_count == 2561
        fused = net.forward(ir, vi)
        assert (fused.height, fused.width) == (32, 32)
        ckpt = os.path.join(tmp, "student.ckpt")
        net.save(ckpt)
        assert fusecurr.StudentNet.load(ckpt).forward(ir, vi).data() == fused.data()

        policy = fusecurr.Policy(seed=2)
        state = [0.1] * 10
        a = policy.act(state, 7)
        assert abs(a["alpha_t"] + a["alpha_s"] - 1.0) < 1e-9
        assert abs(policy.log_prob(state, a["raw"]) - a["log_prob"]) < 1e-10
        assert fusecurr.returns_window([1.0] * 6, 4)[0] == 5.0

        assert "student_lr = 0.002" in fusecurr.config_dump()
        pre, rewards = fusecurr.train({
            "dataset_dir": data,
            "pretrain_epochs": "1",
            "train_epochs": "1",
            "steps_per_episode": "2",
            "crop": "32",
            "out_dir": os.path.join(tmp, "runs"),
            "log_path": os.path.join(tmp, "runs", "log.csv"),
        })
        assert len(pre) == 1 and len(rewards) == 2

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
