"""Independent reference implementations shared by several test modules."""

import numpy as np


def allowed_pairs(h: int, wd: int, w: int, shift: int) -> np.ndarray:
    """Brute-force (num_windows, w*w, w*w) table of token pairs that may attend.

    Walks every window of the padded, rolled grid and maps each token back to
    its original coordinate. Two real tokens may attend iff neither axis
    wrapped around between them; pad tokens only see pad tokens.
    """
    hp, wp = -(-h // w) * w, -(-wd // w) * w
    out = []
    for wi in range(hp // w):
        for wj in range(wp // w):
            toks = []
            for a in range(w):
                for b in range(w):
                    r, c = wi * w + a, wj * w + b
                    orig = ((r + shift) % hp, (c + shift) % wp)
                    toks.append((r, c, orig, orig[0] >= h or orig[1] >= wd))
            m = np.zeros((w * w, w * w), dtype=bool)
            for i, (r1, c1, o1, p1) in enumerate(toks):
                for j, (r2, c2, o2, p2) in enumerate(toks):
                    if p1 or p2:
                        m[i, j] = p1 and p2
                    else:
                        m[i, j] = o1[0] - o2[0] == r1 - r2 and o1[1] - o2[1] == c1 - c2
            out.append(m)
    return np.stack(out)


def macro_metrics(cm: np.ndarray) -> tuple[float, float, float, float]:
    """Accuracy and macro precision/recall/F from a 2x2 confusion matrix (rows true, cols predicted)."""
    total = cm.sum()
    acc = np.trace(cm) / total
    ps, rs, fs = [], [], []
    for k in range(2):
        tp = cm[k, k]
        pred = cm[:, k].sum()
        true = cm[k, :].sum()
        p = tp / pred if pred else 0.0
        r = tp / true if true else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        ps.append(p)
        rs.append(r)
        fs.append(f)
    return acc, float(np.mean(ps)), float(np.mean(rs)), float(np.mean(fs))
