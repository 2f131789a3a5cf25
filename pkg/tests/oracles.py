"""Independent scalar-loop reference implementations used by the tests.

Written deliberately without vectorisation so they share no code path with
the library.
"""
import math

import numpy as np


def error_map(i, b, r):
    h, w = i.shape[-2:]
    out = np.zeros((1, h, w))
    for y in range(h):
        for x in range(w):
            m1 = sum((float(i[c, y, x]) - float(b[c, y, x])) ** 2 for c in range(3)) / 3
            m2 = sum((float(i[c, y, x]) - float(r[c, y, x])) ** 2 for c in range(3)) / 3
            out[0, y, x] = math.sqrt(m1) * m2 ** 0.25
    return out


def gaussian(mx, my, sigma, h, w):
    s = max(1.0 / w, sigma)
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            px, py = -1 + 2 * x / (w - 1), -1 + 2 * y / (h - 1)
            out[y, x] = math.exp(-((px - mx) ** 2 + (py - my) ** 2) / (2 * s * s))
    return out


def priority_attention(g, q, z, tw, tb):
    k, d = g.shape
    h, w = q.shape[1:]
    zs = [(z[i] * k + tb[i]) * tw[i] for i in range(k)]
    out = np.zeros((k, d, h, w))
    for i in range(k):
        for y in range(h):
            for x in range(w):
                sub = 0.0
                for j in range(k):
                    if j != i:
                        sub += 1.0 / (1.0 + math.exp(-(zs[i] - zs[j]))) * q[j, y, x]
                qv = max(0.0, q[i, y, x] - sub)
                for c in range(d):
                    out[i, c, y, x] = qv * g[i, c]
    return out


def masks(logits, bg):
    k, h, w = logits.shape
    vis, obj, comp, back = np.zeros((k, h, w)), np.zeros((k, h, w)), np.zeros((k, h, w)), np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            vals = [float(logits[i, y, x]) for i in range(k)] + [bg]
            top = max(vals)
            ex = [math.exp(v - top) for v in vals]
            tot = sum(ex)
            for i in range(k):
                vis[i, y, x] = ex[i] / tot
                obj[i, y, x] = math.exp(vals[i]) / (math.exp(vals[i]) + math.exp(bg))
            back[y, x] = ex[k] / tot
            for i in range(k):
                comp[i, y, x] = sum(vis[j, y, x] for j in range(k) if j != i)
    return vis, obj, comp, back


def occlusion(mv, mo, thr=0.8, c=1e-4):
    vis = sum(1 for v in mv.ravel() if v > thr)
    whole = sum(1 for v in mo.ravel() if v > thr)
    return min(1.0, max(0.0, 1.0 - vis / (whole + c)))


def compose(r, bg, m):
    k = r.shape[0]
    h, w = bg.shape[1:]
    out = np.zeros((3, h, w))
    for c in range(3):
        for y in range(h):
            for x in range(w):
                acc = float(bg[c, y, x]) * float(m[k, y, x])
                for i in range(k):
                    acc += float(r[i, c, y, x]) * float(m[i, y, x])
                out[c, y, x] = acc
    return out


def slot_error(img, pred, mask):
    num, den = 0.0, 0.0
    for c in range(img.shape[0]):
        for y in range(img.shape[1]):
            for x in range(img.shape[2]):
                num += ((float(img[c, y, x]) - float(pred[c, y, x])) * float(mask[y, x])) ** 2
    for v in mask.ravel():
        den += float(v)
    return num / img.shape[0] / den


def ari(a, b):
    """Pair-counting adjusted Rand index over all unordered pixel pairs."""
    a, b = list(np.ravel(a)), list(np.ravel(b))
    n = len(a)
    both = same_a = same_b = 0
    for i in range(n):
        for j in range(i + 1, n):
            sa, sb = a[i] == a[j], b[i] == b[j]
            same_a += sa
            same_b += sb
            both += sa and sb
    pairs = n * (n - 1) / 2
    expected = same_a * same_b / pairs
    top = (same_a + same_b) / 2
    if top == expected:
        return 1.0
    return (both - expected) / (top - expected)


def ssim(x, y, size=11, sigma=1.5):
    """Direct windowed SSIM on one channel, valid region only."""
    ax = [math.exp(-((i - size // 2) ** 2) / (2 * sigma * sigma)) for i in range(size)]
    tot = sum(ax)
    ax = [v / tot for v in ax]
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    h, w = x.shape
    vals = []
    for y0 in range(h - size + 1):
        for x0 in range(w - size + 1):
            mx = my = sxx = syy = sxy = 0.0
            for i in range(size):
                for j in range(size):
                    wt = ax[i] * ax[j]
                    a, b = float(x[y0 + i, x0 + j]), float(y[y0 + i, x0 + j])
                    mx += wt * a
                    my += wt * b
                    sxx += wt * a * a
                    syy += wt * b * b
                    sxy += wt * a * b
            vx, vy, cov = sxx - mx * mx, syy - my * my, sxy - mx * my
            vals.append(((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return sum(vals) / len(vals)


def best_matching(hyp, gt, cutoff):
    """Enumerate every partial one-to-one matching within cutoff; most pairs first, then least total distance."""
    import itertools

    best, best_key = [], (0, 0.0)
    n_h, n_g = len(hyp), len(gt)
    for size in range(min(n_h, n_g), 0, -1):
        found = False
        for hs in itertools.combinations(range(n_h), size):
            for gs in itertools.permutations(range(n_g), size):
                d = [math.dist(hyp[h], gt[g]) for h, g in zip(hs, gs)]
                if any(x > cutoff for x in d):
                    continue
                key = (size, -sum(d))
                if not found or key > best_key:
                    best, best_key, found = list(zip(hs, gs)), key, True
        if found:
            return best
    return []


def mota_counts(hyp_pos, hyp_valid, gt_pos, gt_exists, cutoff):
    fn = fp = ids = total = 0
    last = {}
    for t in range(len(gt_pos)):
        hs = [k for k in range(len(hyp_valid[t])) if hyp_valid[t][k]]
        gs = [o for o in range(len(gt_exists[t])) if gt_exists[t][o]]
        pairs = best_matching([hyp_pos[t][k] for k in hs], [gt_pos[t][o] for o in gs], cutoff)
        total += len(gs)
        fn += len(gs) - len(pairs)
        fp += len(hs) - len(pairs)
        for hi, gi in pairs:
            slot, obj = hs[hi], gs[gi]
            if obj in last and last[obj] != slot:
                ids += 1
            last[obj] = slot
    return fn, fp, ids, total


def bbox_center(mask, thr):
    rows, cols = [], []
    for y in range(mask.shape[0]):
        for x in range(mask.shape[1]):
            if mask[y, x] > thr:
                rows.append(y)
                cols.append(x)
    if not rows:
        return None
    return (min(cols) + max(cols)) / 2, (min(rows) + max(rows)) / 2


def psnr(a, b):
    n = a.size
    mse = sum((float(x) - float(y)) ** 2 for x, y in zip(a.ravel(), b.ravel())) / n
    return 99.0 if mse < 1e-10 else min(99.0, 10 * math.log10(1 / mse))


def tracking_errors(occupied, position, pred_position, gt_pos, gt_exists, h, w):
    """Per-frame locked-slot error matrix (T, O), NaN where undefined."""
    t_len, k_len = len(occupied), len(occupied[0])
    o_len = len(gt_pos[0])
    diag = math.sqrt(h * h + w * w)
    lock, start, taken = {}, {}, set()
    for t in range(t_len):
        for k in range(k_len):
            if not occupied[t][k] or k in start:
                continue
            start[k] = t
            best, best_d = None, None
            for o in range(o_len):
                if not gt_exists[t][o] or o in taken:
                    continue
                d = math.dist(position[t][k], gt_pos[t][o])
                if best_d is None or d < best_d:
                    best, best_d = o, d
            if best is not None:
                lock[k] = best
                taken.add(best)
    out = np.full((t_len, o_len), np.nan)
    for k, o in lock.items():
        for t in range(start[k], t_len):
            if gt_exists[t][o]:
                est = position[0][k] if t == 0 else pred_position[t - 1][k]
                out[t, o] = math.dist(est, gt_pos[t][o]) / diag
    return out
