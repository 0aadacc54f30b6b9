#!/usr/bin/env python3
"""Independent oracle for the bicubic resize and metric conventions.

Implements the benchmark-standard (MATLAB imresize compatible) antialiased
bicubic resampler, PSNR, and the 11x11 Gaussian SSIM in numpy, evaluates them
on synthetic images, and prints values frozen into test_resample.cpp and
test_metrics.cpp.
"""
import numpy as np


def cubic(t):
    a = -0.5
    x = np.abs(t)
    f = np.where(x <= 1, ((a + 2) * x - (a + 3)) * x * x + 1,
                 np.where(x < 2, ((a * x - 5 * a) * x + 8 * a) * x - 4 * a, 0.0))
    return f


def resize_axis(img, out_len, axis):
    in_len = img.shape[axis]
    scale = out_len / in_len
    kscale = scale if scale < 1 else 1.0
    support = 2.0 / kscale
    out = []
    for u in range(out_len):
        center = (u + 0.5) / scale - 0.5
        left = int(np.floor(center - support)) + 1
        right = int(np.floor(center + support))
        ks = np.arange(left, right + 1)
        w = cubic((center - ks) * kscale) * kscale
        w = w / w.sum()
        idx = np.clip(ks, 0, in_len - 1)
        out.append(np.tensordot(w, np.take(img, idx, axis=axis), axes=([0], [axis])))
    return np.stack(out, axis=axis)


def imresize(img, out_h, out_w):
    r = resize_axis(img, out_h, 0)
    return resize_axis(r, out_w, 1)


def psnr(a, b, peak=255.0):
    mse = np.mean((a - b) ** 2)
    return 10 * np.log10(peak * peak / mse)


def ssim(a, b, peak=255.0):
    k = 11
    sig = 1.5
    ii, jj = np.mgrid[-5:6, -5:6]
    win = np.exp(-(ii ** 2 + jj ** 2) / (2 * sig ** 2))
    win /= win.sum()
    c1, c2 = (0.01 * peak) ** 2, (0.03 * peak) ** 2
    oh, ow = a.shape[0] - k + 1, a.shape[1] - k + 1
    vals = []
    for x in range(oh):
        for y in range(ow):
            wa = a[x:x + k, y:y + k]
            wb = b[x:x + k, y:y + k]
            mu_a = (win * wa).sum()
            mu_b = (win * wb).sum()
            va = (win * wa * wa).sum() - mu_a ** 2
            vb = (win * wb * wb).sum() - mu_b ** 2
            cov = (win * wa * wb).sum() - mu_a * mu_b
            vals.append(((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                        ((mu_a ** 2 + mu_b ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def synth(h, w):
    x = np.arange(h)[:, None]
    y = np.arange(w)[None, :]
    return 255.0 * (0.5 + 0.25 * np.sin(0.3 * x) + 0.25 * np.cos(0.2 * y))


def main():
    np.set_printoptions(precision=17)
    img = synth(32, 24)
    lr = imresize(img, 8, 6)
    print("lr[0,0] =", repr(lr[0, 0]))
    print("lr[3,2] =", repr(lr[3, 2]))
    print("lr[7,5] =", repr(lr[7, 5]))
    up = imresize(lr, 32, 24)
    print("up[0,0] =", repr(up[0, 0]))
    print("up[17,11] =", repr(up[17, 11]))
    print("psnr(img, up) =", repr(psnr(img, up)))
    print("ssim(img, up) =", repr(ssim(img, up)))

    img2 = synth(40, 40)
    up15 = imresize(img2, 60, 60)  # non-integer upscale, no antialias
    print("up15[0,0] =", repr(up15[0, 0]))
    print("up15[31,47] =", repr(up15[31, 47]))


if __name__ == "__main__":
    main()
