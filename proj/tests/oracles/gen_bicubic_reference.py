"""Regenerates bicubic_reference.inc from the bicubic_pytorch port of
MATLAB imresize (pip install bicubic_pytorch; needs torch).

That port mirrors out-of-range taps; the library clamps them. The two agree
wherever no weighted tap lies more than one pixel outside the image, so each
reference carries a row/column mask of the positions safe to compare.
"""
import math
import sys

import numpy as np
import torch
from bicubic_pytorch import core

H, W = 24, 20


def source():
    y, x = np.mgrid[0:H, 0:W]
    v = ((x * 37 + y * 91 + x * y * 7) % 256) / 255.0
    return v.astype(np.float32).astype(np.float64)


def keys(d):
    d = abs(d)
    if d <= 1:
        return 1.5 * d**3 - 2.5 * d**2 + 1
    if d < 2:
        return -0.5 * d**3 + 2.5 * d**2 - 4 * d + 2
    return 0.0


def safe_axis(in_len, out_len):
    ratio = out_len / in_len
    shrink = ratio < 1
    width = 4 / ratio if shrink else 4.0
    taps = math.ceil(width) + 2
    safe = []
    for j in range(out_len):
        u = (j + 1) / ratio + 0.5 * (1 - 1 / ratio)
        left = math.floor(u - width / 2)
        ok = True
        for t in range(taps):
            idx = left + t
            w = ratio * keys(ratio * (u - idx)) if shrink else keys(u - idx)
            if w != 0 and (idx < 0 or idx > in_len + 1):
                ok = False
        safe.append(1 if ok else 0)
    return safe


def emit(out, name, img, oh, ow):
    t = torch.from_numpy(img)[None, None]
    r = core.imresize(t, sizes=(oh, ow), kernel='cubic', antialiasing=True)[0, 0].numpy()
    ih, iw = img.shape
    out.write(f'inline const BicubicReference {name}{{{ih}, {iw}, {oh}, {ow},\n')
    out.write('  {' + ', '.join(map(str, safe_axis(ih, oh))) + '},\n')
    out.write('  {' + ', '.join(map(str, safe_axis(iw, ow))) + '},\n')
    out.write('  {' + ', '.join(f'{v:.9g}' for v in r.ravel()) + '}};\n\n')
    return r


def main():
    out = sys.stdout
    out.write('// Generated by gen_bicubic_reference.py; do not edit.\n\n')
    src = source()
    emit(out, 'kShrink4', src, 6, 5)
    emit(out, 'kShrink2', src, 12, 10)
    emit(out, 'kShrinkOdd', src, 17, 13)
    small = src[:6, :5].copy()
    emit(out, 'kGrow4', small, 24, 20)
    emit(out, 'kGrow3', small, 18, 15)
    emit(out, 'kGrowOdd', small, 11, 7)


if __name__ == '__main__':
    main()
