"""Regenerates vectors.json with nothing but the Python standard library.

Usage: python3 gen_vectors.py > vectors.json
"""
import hashlib
import json
import struct

SESSION = bytes(32)
ORIGIN = "https://a.example"
TAGS = ["canvas", "audio", "webgl", "device_ids", "geo", "sensor", "sensor.mag", "time"]


def sha(*parts):
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
    return h.digest()


def derive_seed(session, origin, tag):
    return sha(session, b"\0", origin.encode(), b"\0", tag.encode())


def keystream(seed, offset, length):
    out = bytearray()
    pos = offset
    while len(out) < length:
        block = sha(seed, struct.pack("<Q", pos // 32))
        start = pos % 32
        take = min(32 - start, length - len(out))
        out += block[start:start + take]
        pos += take
    return bytes(out)


def uniform01(seed, index):
    raw = keystream(seed, index * 8, 8)
    return (int.from_bytes(raw, "little") >> 11) * 2.0 ** -53


def farble_bitmap(seed, w, h, data):
    digest = sha(seed, struct.pack("<II", w, h), data)
    bound = sha(seed, digest)
    colour = (len(data) // 4) * 3
    stream = keystream(bound, 0, (colour + 7) // 8)
    out = bytearray(data)
    k = 0
    for i in range(0, len(out), 4):
        for j in range(3):
            out[i + j] ^= (stream[k // 8] >> (k % 8)) & 1
            k += 1
    return bytes(out)


def farble_audio(seed, rate, channels):
    frames = len(channels[0])
    h = hashlib.sha256()
    h.update(seed)
    h.update(struct.pack("<III", rate, len(channels), frames))
    for ch in channels:
        for s in ch:
            h.update(struct.pack("<d", s))
    bound = sha(seed, h.digest())
    out, i = [], 0
    for ch in channels:
        row = []
        for s in ch:
            u = uniform01(bound, i)
            row.append(min(1.0, max(-1.0, s + (u - 0.5) * 2.0 * 1e-7)))
            i += 1
        out.append(row)
    return out


def main():
    seeds = []
    for tag in TAGS:
        seed = derive_seed(SESSION, ORIGIN, tag)
        seeds.append({
            "tag": tag,
            "seed": seed.hex(),
            "keystream_0_64": keystream(seed, 0, 64).hex(),
            "keystream_1000_16": keystream(seed, 1000, 16).hex(),
            "uniform01": {str(i): repr(uniform01(seed, i)) for i in (0, 1, 2, 1000)},
        })
    canvas = derive_seed(SESSION, ORIGIN, "canvas")
    bitmaps = []
    for w, h, data in [
        (1, 1, bytes([255] * 4)),
        (2, 2, bytes(range(16))),
        (3, 1, bytes([10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120])),
    ]:
        bitmaps.append({
            "width": w,
            "height": h,
            "input": data.hex(),
            "output": farble_bitmap(canvas, w, h, data).hex(),
        })
    audio_seed = derive_seed(SESSION, ORIGIN, "audio")
    chans = [[0.0, 0.5, -0.25, 1.0], [0.125, -1.0, 0.75, -0.5]]
    audio = {
        "sample_rate": 44100,
        "channels": chans,
        "output": [[repr(x) for x in ch] for ch in farble_audio(audio_seed, 44100, chans)],
    }
    doc = {
        "session": SESSION.hex(),
        "origin": ORIGIN,
        "seeds": seeds,
        "bitmaps": bitmaps,
        "audio": audio,
    }
    print(json.dumps(doc, indent=2))


if __name__ == "__main__":
    main()
