"""Shared fixtures: WAV writers and tone/click factories."""

import struct

import numpy as np
import pytest

from vmembed import dsp


def write_wav(path, samples, rate, bits=16, channels=1, fmt="pcm",
              extra_chunk=False):
    """Minimal RIFF/WAVE writer covering the encodings the reader accepts.

    `samples` is float in [-1, 1]; shape (n,) or (n, channels).
    """
    s = np.asarray(samples, dtype=np.float64)
    if s.ndim == 1:
        s = s[:, None]
        if channels > 1:
            s = np.repeat(s, channels, axis=1)
    inter = s.reshape(-1)

    if fmt == "float":
        tag, width = 3, 4
        payload = inter.astype("<f4").tobytes()
    elif bits == 8:
        tag, width = 1, 1
        payload = (np.clip(np.round(inter * 128 + 128), 0, 255)
                   .astype(np.uint8).tobytes())
    elif bits == 16:
        tag, width = 1, 2
        payload = (np.clip(np.round(inter * 32768), -32768, 32767)
                   .astype("<i2").tobytes())
    elif bits == 24:
        tag, width = 1, 3
        vals = np.clip(np.round(inter * (1 << 23)), -(1 << 23),
                       (1 << 23) - 1).astype(np.int64)
        vals = np.where(vals < 0, vals + (1 << 24), vals)
        b = np.zeros((vals.shape[0], 3), dtype=np.uint8)
        b[:, 0] = vals & 0xFF
        b[:, 1] = (vals >> 8) & 0xFF
        b[:, 2] = (vals >> 16) & 0xFF
        payload = b.tobytes()
    else:
        raise ValueError(bits)

    nch = s.shape[1]
    fmt_chunk = struct.pack("<HHIIHH", tag, nch, rate, rate * nch * width,
                            nch * width, width * 8)
    chunks = b"fmt " + struct.pack("<I", len(fmt_chunk)) + fmt_chunk
    if extra_chunk:  # unknown chunk the reader must skip
        junk = b"JUNK" + struct.pack("<I", 5) + b"abcde" + b"\x00"
        chunks += junk
    chunks += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) % 2:
        chunks += b"\x00"
    blob = b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks
    with open(path, "wb") as f:
        f.write(blob)
    return path


def tone_clip(freq=440.0, seconds=3.0, rate=12000, amp=0.5):
    t = np.arange(int(seconds * rate)) / rate
    return dsp.AudioClip(amp * np.sin(2 * np.pi * freq * t), rate)


def click_clip(period=1000, seconds=3.0, rate=12000):
    x = np.zeros(int(seconds * rate))
    x[::period] = 1.0
    return dsp.AudioClip(x, rate)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def wav_dir(tmp_path):
    """Directory with two valid WAVs and one corrupt file."""
    write_wav(tmp_path / "tone.wav", tone_clip().samples, 12000)
    write_wav(tmp_path / "quiet.wav", 0.1 * tone_clip(220.0).samples, 12000)
    (tmp_path / "broken.wav").write_bytes(b"RIFFxxxxWAVEjunk")
    return tmp_path
