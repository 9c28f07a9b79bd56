import numpy as np
import pytest

from flipnet import Layer, Network
from flipnet.network import logits_batch


def make_random_net(rng, dims, sigma_range=(0.5, 2.0), scale=1.0):
    """Random erf net with the given layer widths (dims includes input)."""
    layers = []
    for n_in, n_out in zip(dims, dims[1:]):
        W = scale * rng.standard_normal((n_out, n_in))
        b = scale * rng.standard_normal(n_out)
        sigma = rng.uniform(*sigma_range)
        layers.append(Layer(W, b, sigma))
    return Network(layers)


def make_linear_net(rng, input_dim, class_count=2, scale=1.0):
    W = scale * rng.standard_normal((class_count, input_dim))
    b = scale * rng.standard_normal(class_count)
    return Network([Layer(W, b, 1.0)])


def make_bump_net(width=1.0, sharpness=0.1):
    """2-input net whose class-0 region is the slab |x_0| < ~width.

    Logit gap z_0 - z_1 = erf((x_0 + width)/s) - erf((x_0 - width)/s) - 1,
    so a segment crossing the slab flips class twice.
    """
    hidden = Layer(
        np.array([[1.0, 0.0], [1.0, 0.0]]),
        np.array([width, -width]),
        sharpness,
    )
    out = Layer(
        np.array([[0.5, -0.5], [-0.5, 0.5]]),
        np.array([-0.5, 0.5]),
        1.0,
    )
    return Network([hidden, out])


def dense_crossing_count(net, x1, x2, step=1e-5):
    """Reference crossing count by brute-force sampling of argmax changes."""
    n = int(np.ceil(1.0 / step)) + 1
    alphas = np.linspace(0.0, 1.0, n)
    pts = (1.0 - alphas)[:, None] * x1 + alphas[:, None] * x2
    tops = np.argmax(logits_batch(net, pts), axis=1)
    return int(np.sum(tops[1:] != tops[:-1]))


def grid_oracle_distance(net, x, pair, lo=-2.0, hi=2.0, step=1e-3):
    """Brute-force closest boundary distance on a 2-D grid + refinement.

    Scans the [lo, hi]^2 grid for sign changes of the pair logit gap,
    then bisects the nearest boundary edges to high precision.
    """
    i, j = pair
    n = int(round((hi - lo) / step)) + 1
    xs = np.linspace(lo, hi, n)

    def gap_row(yv):
        pts = np.column_stack([xs, np.full(n, yv)])
        z = logits_batch(net, pts)
        return z[:, i] - z[:, j]

    def gap_at(px, py):
        z = logits_batch(net, np.array([[px, py]]))
        return z[0, i] - z[0, j]

    # coarse pass: midpoints of sign-change edges
    best_coarse = np.inf
    edges = []  # (x_a, y_a, x_b, y_b)
    prev = gap_row(xs[0])
    prev_sign = np.sign(prev)
    for r in range(n):
        if r > 0:
            cur = gap_row(xs[r])
            cur_sign = np.sign(cur)
            vert = np.nonzero(cur_sign != prev_sign)[0]
            for c in vert:
                edges.append((xs[c], xs[r - 1], xs[c], xs[r]))
            prev, prev_sign = cur, cur_sign
        horiz = np.nonzero(prev_sign[1:] != prev_sign[:-1])[0]
        for c in horiz:
            edges.append((xs[c], xs[r], xs[c + 1], xs[r]))
    if not edges:
        return np.inf
    edges = np.asarray(edges)
    mids = np.column_stack([(edges[:, 0] + edges[:, 2]) / 2, (edges[:, 1] + edges[:, 3]) / 2])
    dists = np.linalg.norm(mids - np.asarray(x), axis=1)
    best_coarse = dists.min()

    best = np.inf
    for ea in edges[dists <= best_coarse + 2 * step]:
        ax, ay, bx, by = ea
        ga = gap_at(ax, ay)
        gb = gap_at(bx, by)
        if ga == 0.0:
            best = min(best, np.hypot(ax - x[0], ay - x[1]))
            continue
        if np.sign(ga) == np.sign(gb):
            continue
        for _ in range(50):
            mx, my = (ax + bx) / 2, (ay + by) / 2
            gm = gap_at(mx, my)
            if gm == 0.0 or np.sign(gm) == np.sign(ga):
                ax, ay, ga = mx, my, gm
            else:
                bx, by = mx, my
        best = min(best, np.hypot((ax + bx) / 2 - x[0], (ay + by) / 2 - x[1]))
    return best


def write_synth_cifar(data_dir, n_train=400, n_test=100, seed=0, noise=0.04):
    """Synthetic two-class dataset in the CIFAR-10 binary batch format.

    Class 0 ("plane" slot) carries horizontal stripes, class 8 ("ship"
    slot) vertical stripes, plus per-image phase jitter and noise.
    Pixels stay well inside [0, 1]. Returns the two file paths.
    """
    rng = np.random.default_rng(seed)
    rows = np.arange(32)

    def record(label):
        phase = rng.uniform(0, 2 * np.pi)
        freq = rng.uniform(2.0, 3.0)
        wave = np.sin(2 * np.pi * freq * rows / 32 + phase)
        if label == 0:
            pattern = np.tile(wave[:, None], (1, 32))
        else:
            pattern = np.tile(wave[None, :], (32, 1))
        img = 0.5 + 0.2 * pattern[:, :, None] + noise * rng.standard_normal((32, 32, 3))
        img = np.clip(img, 0.08, 0.92)
        pix = np.round(img * 255).astype(np.uint8)
        planar = pix.transpose(2, 0, 1).reshape(-1)  # channel-planar R,G,B
        return bytes([label]) + planar.tobytes()

    def write(path, count):
        with open(path, "wb") as f:
            for k in range(count):
                f.write(record(0 if k % 2 == 0 else 8))

    train_path = data_dir / "data_batch_1.bin"
    test_path = data_dir / "test_batch.bin"
    write(train_path, n_train)
    write(test_path, n_test)
    return train_path, test_path


def write_synth_cifar_hard(data_dir, n_train=2000, n_test=400, seed=7,
                           noise=0.12, amp=0.15, leak=0.8):
    """Harder synthetic variant: each class mixes both stripe orientations.

    The class-dominant orientation has amplitude in [0.5, 1] while the
    other leaks in with amplitude in [0, leak], so classes overlap and a
    trained model stays well below perfect accuracy.
    """
    rng = np.random.default_rng(seed)
    rows = np.arange(32)

    def record(label):
        wh = np.sin(2 * np.pi * rng.uniform(2, 3) * rows / 32 + rng.uniform(0, 2 * np.pi))
        wv = np.sin(2 * np.pi * rng.uniform(2, 3) * rows / 32 + rng.uniform(0, 2 * np.pi))
        horiz = np.tile(wh[:, None], (1, 32))
        vert = np.tile(wv[None, :], (32, 1))
        a = rng.uniform(0.5, 1.0)
        b = rng.uniform(0.0, leak)
        pattern = a * horiz + b * vert if label == 0 else a * vert + b * horiz
        img = 0.5 + amp * pattern[:, :, None] + noise * rng.standard_normal((32, 32, 3))
        img = np.clip(img, 0.08, 0.92)
        pix = np.round(img * 255).astype(np.uint8)
        return bytes([label]) + pix.transpose(2, 0, 1).reshape(-1).tobytes()

    def write(path, count):
        with open(path, "wb") as f:
            for k in range(count):
                f.write(record(0 if k % 2 == 0 else 8))

    train_path = data_dir / "data_batch_1.bin"
    test_path = data_dir / "test_batch.bin"
    write(train_path, n_train)
    write(test_path, n_test)
    return train_path, test_path


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
