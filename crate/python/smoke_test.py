"""Smoke test for the lyrictrack_py extension module.

Uses an installed module when present (e.g. `maturin develop` in
crates/python); otherwise builds the cdylib with cargo and loads it from
target/debug.
"""

import importlib.util
import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load_module():
    try:
        import lyrictrack_py

        return lyrictrack_py
    except ImportError:
        pass
    subprocess.run(["cargo", "build", "-p", "lyrictrack-python"], cwd=ROOT, check=True)
    built = ROOT / "target" / "debug" / "liblyrictrack_py.so"
    tmp = Path(tempfile.mkdtemp())
    target = tmp / "lyrictrack_py.so"
    shutil.copy(built, target)
    spec = importlib.util.spec_from_file_location("lyrictrack_py", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main():
    lt = load_module()

    assert lt.receptive_field() == (59, 4)
    assert lt.receptive_field("builtin:table1") == (59, 4)

    sr = 16000
    tone = [0.3 * math.sin(2 * math.pi * 440 * n / sr) for n in range(sr)]
    feats = lt.extract_features(tone, sr, "model80")
    assert len(feats[0]) == 80, len(feats[0])

    pg = lt.infer(feats, seed=1)
    assert pg.n_frames == len(feats) // 4 or abs(pg.n_frames - len(feats) / 4) <= 2, pg.n_frames
    for row in pg.probabilities()[:5]:
        assert abs(sum(row) - 1.0) < 1e-4

    assert lt.cosine_distance([1.0, 0.0], [0.0, 1.0]) == 1.0
    assert lt.cosine_distance([0.0, 0.0], [1.0, 1.0]) == 1.0

    ref = lt.synthetic_reference(600, seed=4)
    events = lt.track(ref, ref)
    assert events and all(e.reference_index == e.target_index for e in events)

    target, source = lt.synth_warp(ref, [(0.0, 0.0), (24000.0, 36000.0)], seed=2)
    assert target.n_frames == 900 and len(source) == 900

    tracker = lt.Tracker(ref, window=200)
    reported = [tracker.step(row) for row in target.probabilities()]
    hits = [e for e in reported if e is not None]
    assert hits and tracker.last_distance_evals <= 200
    assert hits[-1].reference_time_ms >= 20000.0, hits[-1]

    assert lt.metrics([10500.0, 21500.0], [10000.0, 20000.0]) == (1000.0, 50.0)
    assert lt.metrics([1.0], [1.0]) == (0.0, 100.0)

    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "ref.pgm"
        ref.save(str(path))
        back = lt.Posteriogram.load(str(path))
        assert back.log_probs() == ref.log_probs()
        try:
            lt.Posteriogram.load(str(Path(d) / "missing.pgm"))
        except OSError as e:
            assert "missing.pgm" in str(e)
        else:
            raise AssertionError("missing file did not raise")

    print("python smoke test passed")


if __name__ == "__main__":
    sys.exit(main())
