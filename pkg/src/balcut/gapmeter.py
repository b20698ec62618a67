"""Domain-gap meter: H-divergence estimated with a small CNN domain classifier.

Pipeline per region (foreground or background): cut 32x32 patches from the
source and target image sets, split them 70/10/20 without sharing scenes
across splits, train a LeNet-sized classifier to tell the two domains apart,
keep the epoch with the best validation accuracy, and turn its test error
rates into ``d = 2 (1 - (err_source + err_target))``.

The network is plain numpy with hand-written backprop:

    conv 5x5x6 -> relu -> maxpool 2 -> conv 5x5x16 -> relu -> maxpool 2
    -> fc 400->120 -> relu -> fc 120->84 -> relu -> fc 84->2
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .geometry import BBox, RngStream, as_raster, iou

log = logging.getLogger(__name__)

PATCH = 32
MAX_BG_OVERLAP = 0.1
SOURCE, TARGET = 0, 1


class InsufficientRegion(RuntimeError):
    pass


class TooFewScenes(ValueError):
    pass


class EmptyTestSet(ValueError):
    pass


# --------------------------------------------------------------------------
# patches


@dataclass
class AnnotatedImage:
    image: np.ndarray
    boxes: list[BBox]
    scene_id: str


@dataclass
class PatchSet:
    patches: np.ndarray  # (N, 32, 32, 3) uint8
    scene_ids: np.ndarray  # (N,) str
    domain: str = "source"
    region: str = "foreground"

    def __post_init__(self):
        self.patches = np.asarray(self.patches, dtype=np.uint8)
        self.scene_ids = np.asarray(self.scene_ids).astype(str)
        if self.patches.ndim != 4 or self.patches.shape[1:] != (PATCH, PATCH, 3):
            raise ValueError(f"patches must be (N, 32, 32, 3), got {self.patches.shape}")
        if len(self.scene_ids) != len(self.patches):
            raise ValueError("one scene id per patch required")
        if self.domain not in ("source", "target"):
            raise ValueError(f"bad domain tag {self.domain!r}")
        if self.region not in ("foreground", "background"):
            raise ValueError(f"bad region tag {self.region!r}")

    def __len__(self):
        return len(self.patches)

    def subset(self, idx) -> PatchSet:
        return PatchSet(self.patches[idx], self.scene_ids[idx], self.domain, self.region)


def _background_ok(win: BBox, boxes: Sequence[BBox]) -> bool:
    for b in boxes:
        if iou(win, b) >= MAX_BG_OVERLAP:
            return False
        # a small window buried inside a large box has a tiny IoU but is not background
        iw = min(win.x2, b.x2) - max(win.x, b.x)
        ih = min(win.y2, b.y2) - max(win.y, b.y)
        if iw > 0 and ih > 0 and iw * ih >= MAX_BG_OVERLAP * win.area:
            return False
    return True


def extract_patches(images: Sequence[AnnotatedImage], region: str, n: int, rng: RngStream,
                    domain: str = "source", budget: int | None = None) -> PatchSet:
    """Sample ``n`` 32x32 patches from the foreground or background region.

    Foreground crops lie fully inside a uniformly chosen ground-truth box
    (boxes smaller than 32x32 are skipped). Background windows are rejection
    sampled until they overlap no box (IoU and window-overlap both < 0.1);
    ``budget`` caps the number of candidate windows (default 50 n).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    patches = np.empty((n, PATCH, PATCH, 3), dtype=np.uint8)
    scenes: list[str] = []
    if region == "foreground":
        eligible = []
        for k, im in enumerate(images):
            H, W = im.image.shape[:2]
            for b in im.boxes:
                c = b.clip(W, H)
                if c is not None and c.w >= PATCH and c.h >= PATCH:
                    eligible.append((k, c))
        if not eligible:
            raise InsufficientRegion("no ground-truth box is at least 32x32")
        for i in range(n):
            k, b = eligible[int(rng.integers(len(eligible)))]
            x = int(rng.integers(b.x, b.x2 - PATCH + 1))
            y = int(rng.integers(b.y, b.y2 - PATCH + 1))
            patches[i] = images[k].image[y:y + PATCH, x:x + PATCH]
            scenes.append(images[k].scene_id)
    elif region == "background":
        usable = [k for k, im in enumerate(images)
                  if im.image.shape[0] >= PATCH and im.image.shape[1] >= PATCH]
        if not usable:
            raise InsufficientRegion("no image is at least 32x32")
        budget = 50 * n if budget is None else budget
        got = tries = 0
        while got < n:
            if tries >= budget:
                raise InsufficientRegion(
                    f"only {got} of {n} background patches found in {budget} tries")
            tries += 1
            im = images[usable[int(rng.integers(len(usable)))]]
            H, W = im.image.shape[:2]
            x = int(rng.integers(0, W - PATCH + 1))
            y = int(rng.integers(0, H - PATCH + 1))
            if not _background_ok(BBox(x, y, PATCH, PATCH), im.boxes):
                continue
            patches[got] = im.image[y:y + PATCH, x:x + PATCH]
            scenes.append(im.scene_id)
            got += 1
    else:
        raise ValueError(f"region must be 'foreground' or 'background', got {region!r}")
    return PatchSet(patches, np.array(scenes), domain, region)


# --------------------------------------------------------------------------
# splitting


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.7
    val: float = 0.1
    test: float = 0.2
    scene_disjoint: bool = True

    def __post_init__(self):
        fr = (self.train, self.val, self.test)
        if any(f < 0 for f in fr) or not math.isclose(sum(fr), 1.0, abs_tol=1e-9):
            raise ValueError("split fractions must be >= 0 and sum to 1")


def largest_remainder(n: int, fractions: Sequence[float]) -> list[int]:
    """Integer apportionment of ``n`` items; ties go to the earlier part."""
    raw = [n * f for f in fractions]
    counts = [int(math.floor(r)) for r in raw]
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


SPLITS = ("train", "val", "test")


def _split_one(ps: PatchSet, spec: SplitSpec, rng: RngStream) -> dict[str, np.ndarray]:
    fractions = (spec.train, spec.val, spec.test)
    if spec.scene_disjoint:
        scenes = np.unique(ps.scene_ids)
        counts = largest_remainder(len(scenes), fractions)
        if min(counts) == 0:
            raise TooFewScenes(
                f"{len(scenes)} {ps.domain} scenes cannot fill every split ({counts})")
        order = scenes[rng.permutation(len(scenes))]
        out, start = {}, 0
        for name, c in zip(SPLITS, counts):
            chosen = order[start:start + c]
            start += c
            out[name] = np.flatnonzero(np.isin(ps.scene_ids, chosen))
        return out
    counts = largest_remainder(len(ps), fractions)
    if min(counts) == 0:
        raise TooFewScenes(f"{len(ps)} {ps.domain} patches cannot fill every split")
    perm = rng.permutation(len(ps))
    bounds = np.cumsum([0] + counts)
    return {name: np.sort(perm[bounds[i]:bounds[i + 1]]) for i, name in enumerate(SPLITS)}


@dataclass
class Split:
    x: np.ndarray  # (N, 32, 32, 3) uint8
    y: np.ndarray  # (N,) 0 = source, 1 = target
    scene_ids: np.ndarray

    def __len__(self):
        return len(self.y)


def split(source: PatchSet, target: PatchSet, spec: SplitSpec,
          rng: RngStream) -> dict[str, Split]:
    """Partition both domains into train/val/test and merge them per split."""
    parts = {}
    idx_s = _split_one(source, spec, rng)
    idx_t = _split_one(target, spec, rng)
    for name in SPLITS:
        s, t = source.subset(idx_s[name]), target.subset(idx_t[name])
        parts[name] = Split(
            np.concatenate([s.patches, t.patches]),
            np.concatenate([np.full(len(s), SOURCE), np.full(len(t), TARGET)]).astype(np.int64),
            np.concatenate([np.char.add("S:", s.scene_ids), np.char.add("T:", t.scene_ids)]),
        )
    return parts


# --------------------------------------------------------------------------
# classifier


def _conv_out(size: int, k: int = 5) -> int:
    return size - k + 1


SHAPE_CHAIN = (32, 28, 14, 10, 5, 400)


def _check_shape_chain():
    c1 = _conv_out(PATCH)
    p1 = c1 // 2
    c2 = _conv_out(p1)
    p2 = c2 // 2
    chain = (PATCH, c1, p1, c2, p2, p2 * p2 * 16)
    assert chain == SHAPE_CHAIN, chain


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """(C, N, H, W) -> (k * k * C, N * Ho * Wo), rows ordered (ky, kx, c)."""
    c, n, h, w = x.shape
    ho, wo = h - k + 1, w - k + 1
    cols = np.empty((k, k, c, n, ho, wo), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            cols[i, j] = x[:, :, i:i + ho, j:j + wo]
    return cols.reshape(k * k * c, n * ho * wo)


def _col2im(dcols: np.ndarray, shape, k: int) -> np.ndarray:
    c, n, h, w = shape
    ho, wo = h - k + 1, w - k + 1
    d = dcols.reshape(k, k, c, n, ho, wo)
    dx = np.zeros(shape, dtype=dcols.dtype)
    for i in range(k):
        for j in range(k):
            dx[:, :, i:i + ho, j:j + wo] += d[i, j]
    return dx


_QUADS = ((0, 0), (0, 1), (1, 0), (1, 1))


def _pool_forward(x: np.ndarray):
    """2x2 max pool over the last two axes; ties route to the first quadrant."""
    q = [x[..., i::2, j::2] for i, j in _QUADS]
    out = np.maximum(np.maximum(q[0], q[1]), np.maximum(q[2], q[3]))
    taken = np.zeros(out.shape, dtype=bool)
    routes = []
    for part in q:
        m = (part == out) & ~taken
        taken |= m
        routes.append(m)
    return out, routes


def _pool_backward(dout: np.ndarray, routes, shape) -> np.ndarray:
    dx = np.zeros(shape, dtype=dout.dtype)
    for (i, j), m in zip(_QUADS, routes):
        dx[..., i::2, j::2] = dout * m
    return dx


# conv weights are (filters, 5 * 5 * in_channels) with columns ordered (ky, kx, c)
PARAM_SHAPES = {
    "conv1_w": (6, 25 * 3), "conv1_b": (6,),
    "conv2_w": (16, 25 * 6), "conv2_b": (16,),
    "fc1_w": (400, 120), "fc1_b": (120,),
    "fc2_w": (120, 84), "fc2_b": (84,),
    "fc3_w": (84, 2), "fc3_b": (2,),
}


class DomainClassifier:
    """LeNet-sized two-way classifier over 32x32x3 patches scaled to [0, 1].

    Activations are kept channel-first and batch-second, (C, N, H, W), which
    makes the im2col gathers contiguous.
    """

    def __init__(self, params: dict[str, np.ndarray]):
        _check_shape_chain()
        for name, shape in PARAM_SHAPES.items():
            if params[name].shape != shape:
                raise ValueError(f"{name} has shape {params[name].shape}, expected {shape}")
        self.params = params

    @classmethod
    def init(cls, rng: RngStream, dtype=np.float32) -> DomainClassifier:
        params = {}
        for name, shape in PARAM_SHAPES.items():
            if name.endswith("_w"):
                fan_in = shape[1] if name.startswith("conv") else shape[0]
                bound = math.sqrt(6.0 / fan_in)
                params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
            else:
                params[name] = np.zeros(shape, dtype=dtype)
        return cls(params)

    def copy(self) -> DomainClassifier:
        return DomainClassifier({k: v.copy() for k, v in self.params.items()})

    def astype(self, dtype) -> DomainClassifier:
        return DomainClassifier({k: v.astype(dtype) for k, v in self.params.items()})

    @property
    def dtype(self):
        return self.params["fc3_w"].dtype

    def _forward(self, x: np.ndarray, keep: bool = False):
        p = self.params
        n = x.shape[0]
        x = np.ascontiguousarray(x.transpose(3, 0, 1, 2))
        cols1 = _im2col(x, 5)
        a1 = np.maximum(p["conv1_w"] @ cols1 + p["conv1_b"][:, None], 0).reshape(6, n, 28, 28)
        h1, r1 = _pool_forward(a1)
        cols2 = _im2col(h1, 5)
        a2 = np.maximum(p["conv2_w"] @ cols2 + p["conv2_b"][:, None], 0).reshape(16, n, 10, 10)
        h2, r2 = _pool_forward(a2)
        flat = h2.transpose(1, 0, 2, 3).reshape(n, 400)
        f1 = np.maximum(flat @ p["fc1_w"] + p["fc1_b"], 0)
        f2 = np.maximum(f1 @ p["fc2_w"] + p["fc2_b"], 0)
        logits = f2 @ p["fc3_w"] + p["fc3_b"]
        cache = {}
        if keep:
            cache = dict(cols1=cols1, a1=a1, r1=r1, h1=h1, cols2=cols2, a2=a2,
                         r2=r2, flat=flat, f1=f1, f2=f2)
        return logits, f2, cache

    def prepare(self, patches: np.ndarray) -> np.ndarray:
        x = np.asarray(patches)
        if x.dtype == np.uint8:
            x = x.astype(self.dtype) / self.dtype.type(255.0)
        if x.ndim != 4 or x.shape[1:] != (PATCH, PATCH, 3):
            raise ValueError(f"expected (N, 32, 32, 3) input, got {x.shape}")
        return x.astype(self.dtype, copy=False)

    def logits(self, patches: np.ndarray, batch: int = 512) -> np.ndarray:
        x = self.prepare(patches)
        return np.concatenate([self._forward(x[i:i + batch])[0]
                               for i in range(0, len(x), batch)] or [np.zeros((0, 2))])

    def predict(self, patches: np.ndarray) -> np.ndarray:
        return self.logits(patches).argmax(axis=1)

    def features(self, patches: np.ndarray, batch: int = 512) -> np.ndarray:
        """fc2 activations (84 per patch)."""
        x = self.prepare(patches)
        return np.concatenate([self._forward(x[i:i + batch])[1]
                               for i in range(0, len(x), batch)] or [np.zeros((0, 84))])

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray):
        """Mean softmax cross-entropy and its gradient for every parameter."""
        p = self.params
        x = self.prepare(x)
        n = x.shape[0]
        logits, _, c = self._forward(x, keep=True)
        z = logits - logits.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        loss = -logp[np.arange(n), y].mean()
        g = {}
        d = np.exp(logp)
        d[np.arange(n), y] -= 1.0
        d /= n
        g["fc3_w"] = c["f2"].T @ d
        g["fc3_b"] = d.sum(axis=0)
        d = (d @ p["fc3_w"].T) * (c["f2"] > 0)
        g["fc2_w"] = c["f1"].T @ d
        g["fc2_b"] = d.sum(axis=0)
        d = (d @ p["fc2_w"].T) * (c["f1"] > 0)
        g["fc1_w"] = c["flat"].T @ d
        g["fc1_b"] = d.sum(axis=0)
        d = (d @ p["fc1_w"].T).reshape(n, 16, 5, 5).transpose(1, 0, 2, 3)
        d = _pool_backward(d, c["r2"], c["a2"].shape) * (c["a2"] > 0)
        d = d.reshape(16, -1)
        g["conv2_w"] = d @ c["cols2"].T
        g["conv2_b"] = d.sum(axis=1)
        d = _col2im(p["conv2_w"].T @ d, c["h1"].shape, 5)
        d = _pool_backward(d, c["r1"], c["a1"].shape) * (c["a1"] > 0)
        d = d.reshape(6, -1)
        g["conv1_w"] = d @ c["cols1"].T
        g["conv1_b"] = d.sum(axis=1)
        return float(loss), g

    def loss(self, x: np.ndarray, y: np.ndarray) -> float:
        x = self.prepare(x)
        z, _, _ = self._forward(x)
        z = z - z.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        return float(-logp[np.arange(len(y)), y].mean())

    def accuracy(self, patches: np.ndarray, labels: np.ndarray) -> float:
        if len(labels) == 0:
            return float("nan")
        return float((self.predict(patches) == labels).mean())


def _kink_pattern(clf: DomainClassifier, x: np.ndarray) -> bytes:
    """Bit pattern of every ReLU gate and max-pool route for input ``x``."""
    _, _, c = clf._forward(x, keep=True)
    bits = [c["a1"] > 0, c["a2"] > 0, c["f1"] > 0, c["f2"] > 0, *c["r1"], *c["r2"]]
    return b"".join(np.packbits(b).tobytes() for b in bits)


def gradient_check(clf: DomainClassifier, x: np.ndarray, y: np.ndarray, step: float = 1e-4,
                   max_entries: int | None = None, rng: RngStream | None = None) -> dict:
    """Compare backprop gradients with central finite differences.

    For each parameter tensor returns ``(rel_error, checked, skipped)`` where
    ``rel_error = ||fd - bp|| / (||fd|| + ||bp||)`` over the checked entries.
    Entries whose +/- step evaluations straddle a ReLU or max-pool kink are
    skipped since the difference quotient is not a derivative there. With
    ``max_entries`` set, larger tensors are checked on a random subset.
    """
    x = clf.prepare(x)
    _, grads = clf.loss_and_grads(x, y)
    out = {}
    for name, p in clf.params.items():
        flat, gflat = p.reshape(-1), grads[name].reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            rng = np.random.default_rng(0) if rng is None else rng
            idx = np.sort(rng.choice(flat.size, max_entries, replace=False))
        fd, bp, skipped = [], [], 0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            lp, kp = clf.loss(x, y), _kink_pattern(clf, x)
            flat[i] = orig - step
            lm, km = clf.loss(x, y), _kink_pattern(clf, x)
            flat[i] = orig
            if kp != km:
                skipped += 1
                continue
            fd.append((lp - lm) / (2 * step))
            bp.append(gflat[i])
        fd, bp = np.array(fd), np.array(bp)
        denom = np.linalg.norm(fd) + np.linalg.norm(bp)
        rel = float(np.linalg.norm(fd - bp) / denom) if denom > 0 else 0.0
        out[name] = (rel, len(fd), skipped)
    return out


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 30

    def __post_init__(self):
        if self.lr <= 0 or not 0 <= self.momentum < 1:
            raise ValueError("need lr > 0 and 0 <= momentum < 1")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")


@dataclass
class TrainResult:
    classifier: DomainClassifier
    best_epoch: int
    best_val_accuracy: float
    history: list[dict] = field(default_factory=list)


def train_classifier(train: Split, val: Split, hp: TrainConfig, rng: RngStream) -> TrainResult:
    """Mini-batch SGD with momentum; returns the best-validation epoch."""
    clf = DomainClassifier.init(rng)
    x = clf.prepare(train.x)
    y = train.y
    velocity = {k: np.zeros_like(v) for k, v in clf.params.items()}
    lr = clf.dtype.type(hp.lr)
    mu = clf.dtype.type(hp.momentum)
    best, best_acc, best_epoch = clf.copy(), -1.0, 0
    history = []
    for epoch in range(1, hp.epochs + 1):
        order = rng.permutation(len(y))
        total = 0.0
        for start in range(0, len(order), hp.batch_size):
            idx = order[start:start + hp.batch_size]
            loss, grads = clf.loss_and_grads(x[idx], y[idx])
            total += loss * len(idx)
            for k, g in grads.items():
                v = velocity[k]
                v *= mu
                v -= lr * g
                clf.params[k] += v
        acc = clf.accuracy(val.x, val.y)
        history.append({"epoch": epoch, "train_loss": total / max(len(y), 1),
                        "val_accuracy": acc})
        log.debug("epoch %d loss %.4f val %.4f", epoch, total / max(len(y), 1), acc)
        if acc > best_acc:
            best, best_acc, best_epoch = clf.copy(), acc, epoch
    return TrainResult(best, best_epoch, best_acc, history)


def divergence_from_errors(err_source: float, err_target: float) -> float:
    return float(min(2.0, max(0.0, 2.0 * (1.0 - (err_source + err_target)))))


def error_rates(clf: DomainClassifier, test: Split) -> tuple[float, float]:
    src, tgt = test.y == SOURCE, test.y == TARGET
    if not src.any() or not tgt.any():
        raise EmptyTestSet("test split needs patches from both domains")
    pred = clf.predict(test.x)
    return float((pred[src] != SOURCE).mean()), float((pred[tgt] != TARGET).mean())


def h_divergence(clf: DomainClassifier, test_source: np.ndarray,
                 test_target: np.ndarray) -> float:
    """``2 (1 - (err_S + err_T))`` on held-out patches, clamped to [0, 2]."""
    if len(test_source) == 0 or len(test_target) == 0:
        raise EmptyTestSet("both test sets must be non-empty")
    err_s = float((clf.predict(test_source) != SOURCE).mean())
    err_t = float((clf.predict(test_target) != TARGET).mean())
    return divergence_from_errors(err_s, err_t)


# --------------------------------------------------------------------------
# measurement


@dataclass
class RegionDivergence:
    region: str
    divergence: float
    err_source: float
    err_target: float
    val_accuracy: float
    best_epoch: int
    split_sizes: dict
    scene_counts: dict
    seconds: float
    history: list[dict] = field(default_factory=list)


def measure(source: PatchSet, target: PatchSet, spec: SplitSpec, hp: TrainConfig,
            rng: RngStream, with_features: bool = False):
    """Split, train and score one region. Returns (RegionDivergence, features or None)."""
    t0 = time.perf_counter()
    parts = split(source, target, spec, rng)
    result = train_classifier(parts["train"], parts["val"], hp, rng)
    clf = result.classifier
    test = parts["test"]
    err_s, err_t = error_rates(clf, test)
    sizes = {k: {"source": int((v.y == SOURCE).sum()), "target": int((v.y == TARGET).sum())}
             for k, v in parts.items()}
    scenes = {k: {"source": int(np.unique(v.scene_ids[v.y == SOURCE]).size),
                  "target": int(np.unique(v.scene_ids[v.y == TARGET]).size)}
              for k, v in parts.items()}
    rd = RegionDivergence(source.region, divergence_from_errors(err_s, err_t), err_s, err_t,
                          result.best_val_accuracy, result.best_epoch, sizes, scenes,
                          time.perf_counter() - t0, result.history)
    feats = None
    if with_features:
        feats = [(f"{source.region[:2]}-source-{i}", "source", source.region, f)
                 for i, f in enumerate(clf.features(source.patches))]
        feats += [(f"{target.region[:2]}-target-{i}", "target", target.region, f)
                  for i, f in enumerate(clf.features(target.patches))]
    return rd, feats


@dataclass
class DivergenceReport:
    d_fg: float
    d_bg: float
    gap: float
    foreground: RegionDivergence
    background: RegionDivergence
    split: SplitSpec
    train: TrainConfig

    def to_json(self) -> dict:
        fg, bg = asdict(self.foreground), asdict(self.background)
        return {
            "d_fg": self.d_fg, "d_bg": self.d_bg, "gap": self.gap,
            "val_accuracy_fg": self.foreground.val_accuracy,
            "val_accuracy_bg": self.background.val_accuracy,
            "foreground": fg, "background": bg,
            "split": asdict(self.split), "train": asdict(self.train),
        }


def gap_report(fg_source: PatchSet, fg_target: PatchSet, bg_source: PatchSet,
               bg_target: PatchSet, spec: SplitSpec = SplitSpec(),
               hp: TrainConfig = TrainConfig(), rng: RngStream | None = None,
               with_features: bool = False):
    """Foreground and background divergences plus their gap.

    Returns ``(report, features)``; ``features`` lists ``(patch_id, domain,
    region, fc2 vector)`` rows when requested, else None.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    fg, ffeat = measure(fg_source, fg_target, spec, hp, rng, with_features)
    bg, bfeat = measure(bg_source, bg_target, spec, hp, rng, with_features)
    report = DivergenceReport(fg.divergence, bg.divergence, abs(fg.divergence - bg.divergence),
                              fg, bg, spec, hp)
    return report, ((ffeat or []) + (bfeat or []) if with_features else None)


def write_features_csv(path, rows: Iterable[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["patch_id", "domain", "region"] + [f"f{i}" for i in range(84)])
        for pid, domain, region, vec in rows:
            w.writerow([pid, domain, region] + [f"{v:.6g}" for v in vec])


def annotated_images(pairs: Iterable[tuple[np.ndarray, Sequence[BBox], str]]) -> list[AnnotatedImage]:
    return [AnnotatedImage(as_raster(img), list(boxes), str(scene)) for img, boxes, scene in pairs]
