"""Writes data/clip.wav: a deterministic speech-like test clip at 22050 Hz."""
import sys
import wave

import numpy as np

SR = 22050
N = 8192


def synth():
    rng = np.random.default_rng(20)
    t = np.arange(N) / SR
    f0 = 130.0 + 40.0 * np.sin(2 * np.pi * 1.7 * t)
    phase = 2 * np.pi * np.cumsum(f0) / SR
    formants = [(700.0, 130.0), (1220.0, 120.0), (2600.0, 160.0)]
    voiced = np.zeros(N)
    for h in range(1, 40):
        fh = h * f0
        gain = sum(np.exp(-0.5 * ((fh - fc) / bw) ** 2) for fc, bw in formants) + 0.05
        voiced += gain * np.sin(h * phase) / h ** 0.5
    voiced /= np.max(np.abs(voiced))
    env = np.clip(np.sin(np.pi * t / t[-1]), 0, None) ** 0.6
    env *= 0.6 + 0.4 * np.sin(2 * np.pi * 3.1 * t) ** 2
    burst = rng.standard_normal(N) * np.exp(-0.5 * ((t - 0.28) / 0.015) ** 2)
    x = 0.5 * env * voiced + 0.08 * burst
    return x / np.max(np.abs(x)) * 0.6


def main(path):
    pcm = np.clip(np.round(synth() * 32768), -32768, 32767).astype("<i2")
    with wave.open(path, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(SR)
        w.writeframes(pcm.tobytes())


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/clip.wav")
