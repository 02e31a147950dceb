"""Time each hot kernel on its numba and numpy paths.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Both paths are imported from the same module; the env flag only chooses
which one the unsuffixed names dispatch to, so this script calls the
suffixed variants directly.
"""

import argparse
import timeit

import numpy as np

from oie import kernels
from oie._accel import HAVE_NUMBA


def cases(rng):
    B, T, D, H = 64, 30, 32, 64
    X = rng.normal(size=(B, T, D))
    Wx = rng.normal(scale=0.1, size=(D, 4 * H))
    Wh = rng.normal(scale=0.1, size=(H, 4 * H))
    b = np.zeros(4 * H)
    Hs, Cs, G = kernels.lstm_forward_numpy(X, Wx, Wh, b)
    dh = rng.normal(size=(B, H))
    t = np.linspace(0.0, 1.5, 200)
    P = np.stack([50 * np.cos(t), 50 * np.sin(t)], axis=1)
    flow = rng.normal(size=(2, 4096))
    boxes_a = np.abs(rng.normal(100, 30, size=(40, 4)))
    boxes_b = np.abs(rng.normal(100, 30, size=(40, 4)))
    labels = (rng.random(5000) < 0.3).astype(float)
    return {
        "lstm_forward": (X, Wx, Wh, b),
        "lstm_backward": (X, Wx, Wh, Hs, Cs, G, dh),
        "curvature_stencils": (P[:-2].copy(), P[1:-1].copy(), P[2:].copy()),
        "orientation_histogram": (flow[0].copy(), flow[1].copy(), 12),
        "iou_matrix": (boxes_a, boxes_b),
        "ranked_precision_sum": (labels,),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()
    if not HAVE_NUMBA:
        print("numba is not installed; nothing to compare")
        return
    print(f"{'kernel':<24}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for name, a in cases(np.random.default_rng(0)).items():
        f_np = getattr(kernels, f"{name}_numpy")
        f_nb = getattr(kernels, f"{name}_numba")
        f_nb(*a)  # compile outside the timing
        t_np = min(timeit.repeat(lambda: f_np(*a), number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(lambda: f_nb(*a), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<24}{t_np:>10.3f}{t_nb:>10.3f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
