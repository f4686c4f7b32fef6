"""Independent reference implementations used only by the tests."""

from itertools import product


def brute_dominates(v, u):
    return all(a >= b for a, b in zip(v, u)) and any(a > b for a, b in zip(v, u))


def brute_ranks(points):
    """Rank by repeated peeling of the non-dominated set."""
    n = len(points)
    beats = [[brute_dominates(points[i], points[j]) for j in range(n)] for i in range(n)]
    ranks = [None] * n
    remaining = set(range(n))
    r = 0
    while remaining:
        layer = {j for j in remaining if not any(beats[i][j] for i in remaining)}
        for j in layer:
            ranks[j] = r
        remaining -= layer
        r += 1
    return ranks


def peel_ranks(points):
    """Same peeling as brute_ranks, with the pairwise table built by numpy."""
    import numpy as np

    p = np.asarray(points, dtype=float)
    ge = (p[:, None, :] >= p[None, :, :]).all(axis=-1)
    gt = (p[:, None, :] > p[None, :, :]).any(axis=-1)
    beats = ge & gt
    ranks = np.full(len(p), -1)
    alive = np.ones(len(p), dtype=bool)
    r = 0
    while alive.any():
        layer = alive & ~(beats & alive[:, None]).any(axis=0)
        ranks[layer] = r
        alive &= ~layer
        r += 1
    return ranks.tolist()


def brute_nondominated(points):
    return [i for i, p in enumerate(points) if not any(brute_dominates(q, p) for q in points)]


def grid_hypervolume(points, ref, step):
    """Dominated area by counting grid cells; exact when all coordinates lie on the grid."""
    if not points:
        return 0.0
    xs = max(p[0] for p in points)
    ys = max(p[1] for p in points)
    nx = int(round((xs - ref[0]) / step))
    ny = int(round((ys - ref[1]) / step))
    area = 0
    for i, j in product(range(nx), range(ny)):
        cx = ref[0] + (i + 0.5) * step
        cy = ref[1] + (j + 0.5) * step
        if any(p[0] >= cx and p[1] >= cy for p in points):
            area += 1
    return area * step * step


# ---------------------------------------------------------------------------
# per-layer cost enumeration
#
# Rebuilds the network as a flat list of layers and sums them with textbook
# formulas. Shares only the documented conventions with moenas.network.


def _half(x):
    return (x + 1) // 2


def layer_list(genome_dict, template, n, f, resolution, classes):
    """Each entry: (kind, kernel, c_in, c_out, h_out, w_out)."""
    layers = []
    res = resolution
    img = (res, res, 3)
    schedule = []
    if template == "imagenet":
        stem = (_half(res), _half(res), 32)
        layers.append(("conv", 3, 3, 32, stem[0], stem[1]))
        schedule += [("reduction", -(-f // 4)), ("reduction", -(-f // 2))]
        start = stem
    else:
        start = img
    width = f
    for stack in range(3):
        if stack:
            width *= 2
            schedule.append(("reduction", width))
        schedule += [("normal", width)] * n

    prev_prev = prev = start
    for kind, F in schedule:
        cell = genome_dict[kind]
        H, W = prev[0], prev[1]
        # input calibration
        layers.append(("conv", 1, prev[2], F, H, W))
        # same resolution: 1x1 conv; double resolution: factorized reduction,
        # two stride-2 1x1 convs to F/2 channels each
        if prev_prev[0] == H:
            layers.append(("conv", 1, prev_prev[2], F, H, W))
        else:
            assert _half(prev_prev[0]) == H
            layers.append(("conv", 1, prev_prev[2], F // 2, H, W))
            layers.append(("conv", 1, prev_prev[2], F - F // 2, H, W))
        red = kind == "reduction"
        Ho, Wo = (_half(H), _half(W)) if red else (H, W)
        blocks = cell["blocks"]
        consumed = set()
        for i1, o1, i2, o2 in blocks:
            for src, op in ((i1, o1), (i2, o2)):
                if src >= 2:
                    consumed.add(src - 2)
                strided = red and src < 2
                # every block output lives at the cell's output resolution
                if op.startswith("sep_conv"):
                    layers.append(("sep", int(op[-1]), F, F, Ho, Wo))
                elif op == "identity" and strided:
                    layers.append(("conv", 1, F, F, Ho, Wo))
        sources = [j + 2 for j in range(len(blocks)) if j not in consumed]
        for e in sorted(cell["extra"]):
            if e not in sources:
                sources.append(e)
        if red:
            for s in sources:
                if s < 2:
                    layers.append(("conv", 1, F, F, Ho, Wo))
        layers.append(("conv", 1, len(sources) * F, F, Ho, Wo))
        prev_prev, prev = prev, (Ho, Wo, F)
    layers.append(("linear", 1, prev[2], classes, 1, 1))
    return layers


def sum_layers(layers, batchnorm=True):
    macs = params = 0
    for kind, k, cin, cout, h, w in layers:
        if kind == "conv":
            macs += k * k * cin * cout * h * w
            params += k * k * cin * cout + (2 * cout if batchnorm else 0)
        elif kind == "sep":
            macs += k * k * cin * h * w + cin * cout * h * w
            params += k * k * cin + cin * cout + (2 * cout if batchnorm else 0)
        else:
            macs += cin * cout
            params += cin * cout
    return macs, params
