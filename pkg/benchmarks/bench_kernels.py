#!/usr/bin/env python3
"""Timing comparison of the compiled kernels against the numpy fallback.

Backend selection happens at import time, so the script re-invokes
itself in two subprocesses -- one as installed, one with
VMEMBED_PURE_PYTHON=1 -- and prints one table.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _cases():
    from vmembed import dsp, kernels

    rng = np.random.default_rng(0)
    # HPSS input at pipeline scale: 29.12 s at 12 kHz -> 1364 x 257 frames
    power = rng.random((1364, 257))
    t = np.arange(10 * 44100) / 44100.0
    sweep = np.sin(2 * np.pi * (200 + 40 * t) * t)
    clip = dsp.AudioClip(sweep, 44100)
    tone = dsp.AudioClip(np.sin(2 * np.pi * 440 * np.arange(349440) / 12000),
                         12000)
    spec = dsp.magnitude(dsp.stft(tone))

    return [
        ("sliding_median 1364x257 k=31 axis=0",
         lambda: kernels.sliding_median(power, 31, axis=0)),
        ("sliding_median 1364x257 k=31 axis=1",
         lambda: kernels.sliding_median(power, 31, axis=1)),
        ("hpss 29.1 s spectrogram", lambda: dsp.hpss(spec)),
        ("resample 10 s 44.1 kHz -> 12 kHz", lambda: dsp.resample(clip, 12000)),
    ]


def _worker(repeat):
    from vmembed import kernels

    timings = {}
    for name, fn in _cases():
        fn()  # warm up
        best = min(_timed(fn) for _ in range(repeat))
        timings[name] = best
    print(json.dumps({"backend": kernels.BACKEND, "timings": timings}))


def _timed(fn):
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def _spawn(repeat, pure):
    env = dict(os.environ)
    if pure:
        env["VMEMBED_PURE_PYTHON"] = "1"
    else:
        env.pop("VMEMBED_PURE_PYTHON", None)
    out = subprocess.run(
        [sys.executable, os.path.abspath(__file__), "--worker",
         "--repeat", str(repeat)],
        env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=3,
                    help="timed repetitions per case (best is kept)")
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.worker:
        _worker(args.repeat)
        return

    native = _spawn(args.repeat, pure=False)
    python = _spawn(args.repeat, pure=True)
    if native["backend"] == python["backend"]:
        print("note: compiled extension unavailable; both columns ran the "
              "numpy fallback")

    width = max(len(n) for n in python["timings"])
    print(f"{'case':<{width}}  {native['backend']:>10}  "
          f"{python['backend'] + ' (forced)':>16}  {'speedup':>8}")
    for name, py_t in python["timings"].items():
        na_t = native["timings"][name]
        print(f"{name:<{width}}  {na_t:>9.4f}s  {py_t:>15.4f}s  "
              f"{py_t / na_t:>7.1f}x")


if __name__ == "__main__":
    main()
