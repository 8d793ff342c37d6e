"""Stand-in renderer: writes a blank A4-proportioned PNG.

Usage: python -m docforge.synthgen.stub_render INPUT.html OUTPUT.png

Lets the full generation pipeline run where no headless browser is
installed. The page content is ignored; dimensions are fixed at 1240x1754
(the A4 aspect ratio at the default page width). The PNG is assembled with
the stdlib only so the subprocess starts fast enough for large batches.
"""

from __future__ import annotations

import struct
import sys
import zlib

STUB_WIDTH = 1240
STUB_HEIGHT = 1754


def _chunk(tag: bytes, data: bytes) -> bytes:
    return (
        struct.pack(">I", len(data))
        + tag
        + data
        + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)
    )


def blank_png(width: int, height: int) -> bytes:
    header = struct.pack(">IIBBBBB", width, height, 8, 0, 0, 0, 0)  # 8-bit grayscale
    raw = (b"\x00" + b"\xff" * width) * height  # filter byte + white scanline
    return (
        b"\x89PNG\r\n\x1a\n"
        + _chunk(b"IHDR", header)
        + _chunk(b"IDAT", zlib.compress(raw, 1))
        + _chunk(b"IEND", b"")
    )


def main(argv: list[str]) -> int:
    if len(argv) != 2:
        print("usage: stub_render INPUT.html OUTPUT.png", file=sys.stderr)
        return 2
    with open(argv[1], "wb") as fh:
        fh.write(blank_png(STUB_WIDTH, STUB_HEIGHT))
    return 0


if __name__ == "__main__":
    raise SystemExit(main(sys.argv[1:]))
