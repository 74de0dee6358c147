"""Proxy content classifier: a small convnet over character identities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tape, Tensor, backward, conv2d, matmul, ops, reshape, softmax_cross_entropy

GUARD_ACCURACY = 0.99


class ClassifierGuardError(RuntimeError):
    pass


@dataclass
class ContentClassifier:
    classes: list[str]
    params: dict[str, Tensor]
    resolution: int

    def logits(self, images: np.ndarray | Tensor) -> Tensor:
        x = images if isinstance(images, Tensor) else Tensor._wrap(np.asarray(images, dtype=np.float64))
        p = self.params
        h = ops.relu(conv2d(x, p["c1.weight"], 2, 1, bias=p["c1.bias"]))
        h = ops.relu(conv2d(h, p["c2.weight"], 2, 1, bias=p["c2.bias"]))
        h = ops.relu(conv2d(h, p["c3.weight"], 2, 1, bias=p["c3.bias"]))
        h = reshape(h, (h.shape[0], -1))
        return ops.add(matmul(h, p["fc.weight"]), _row_bias(p["fc.bias"], h.shape[0]))

    def predict_index(self, images: np.ndarray) -> np.ndarray:
        out = []
        for i in range(0, len(images), 256):
            out.append(self.logits(images[i:i + 256]).data.argmax(axis=1))
        return np.concatenate(out)

    def predict(self, images: np.ndarray) -> list[str]:
        return [self.classes[i] for i in self.predict_index(images)]

    def accuracy(self, images: np.ndarray, identities) -> float:
        return float(np.mean([p == t for p, t in zip(self.predict(images), identities)]))


def _row_bias(bias: Tensor, n: int) -> Tensor:
    # broadcast a bias row over the batch via a ones column
    return matmul(Tensor._wrap(np.ones((n, 1))), reshape(bias, (1, -1)))


def init_classifier(classes: list[str], resolution: int, seed: int, width: int = 16) -> ContentClassifier:
    rng = np.random.default_rng(seed)

    def he(shape, fan_in):
        return Tensor(rng.normal(0.0, np.sqrt(2.0 / fan_in), shape), requires_grad=True)

    side = resolution // 8
    feat = side * side * 2 * width
    params = {
        "c1.weight": he((4, 4, 3, width), 48), "c1.bias": Tensor(np.zeros(width), requires_grad=True),
        "c2.weight": he((4, 4, width, width), 16 * width),
        "c2.bias": Tensor(np.zeros(width), requires_grad=True),
        "c3.weight": he((4, 4, width, 2 * width), 16 * width),
        "c3.bias": Tensor(np.zeros(2 * width), requires_grad=True),
        "fc.weight": Tensor(rng.normal(0.0, np.sqrt(1.0 / feat), (feat, len(classes))), requires_grad=True),
        "fc.bias": Tensor(np.zeros(len(classes)), requires_grad=True),
    }
    return ContentClassifier(list(classes), params, resolution)


def augment(images: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Small shifts, blur, contrast change and noise: the kinds of damage a generator inflicts."""
    out = np.empty_like(images)
    n, h, w, _ = images.shape
    for i, img in enumerate(images):
        g = img[:, :, 0]
        dy, dx = rng.integers(-1, 2, size=2)
        g = np.roll(g, (dy, dx), axis=(0, 1))
        if rng.random() < 0.4:
            p = np.pad(g, 1, mode="edge")
            g = sum(p[a:a + h, b:b + w] for a in range(3) for b in range(3)) / 9.0
        contrast = rng.uniform(0.6, 1.0)
        g = g * contrast + rng.uniform(-0.1, 0.1)
        g = g + rng.normal(0.0, rng.uniform(0.0, 0.25), g.shape)
        out[i] = np.clip(g, -1.0, 1.0)[:, :, None]
    return out


def train_content_classifier(images: np.ndarray, identities: list[str], seed: int = 0, epochs: int = 12,
                             copies: int = 8, batch_size: int = 64, lr: float = 2e-3,
                             shuffle_labels: bool = False, guard: bool = True) -> ContentClassifier:
    """Fit the proxy classifier on augmented copies of clean target-font renders.

    With ``guard`` the result must classify the clean renders at >= 99%,
    otherwise :class:`ClassifierGuardError` is raised. ``shuffle_labels``
    scrambles the label of every augmented sample (sanity protocol).
    """
    from ..training.adam import AdamHyper, AdamState, adam_step, collect_grads

    classes = sorted(set(identities))
    if len(classes) < 10:
        raise ValueError("the content classifier needs at least 10 character classes")
    index = {c: i for i, c in enumerate(classes)}
    labels = np.array([index[c] for c in identities])
    rng = np.random.default_rng(seed)
    clf = init_classifier(classes, images.shape[1], seed)
    hyper = AdamHyper(lr=lr, beta1=0.9, beta2=0.999)
    state = AdamState()
    for _ in range(epochs):
        x = np.concatenate([augment(images, rng) for _ in range(copies)])
        y = np.tile(labels, copies)
        if shuffle_labels:
            y = rng.permutation(y)
        order = rng.permutation(len(x))
        for i in range(0, len(x), batch_size):
            idx = order[i:i + batch_size]
            for t in clf.params.values():
                t.grad = None
            with Tape() as tape:
                loss = softmax_cross_entropy(clf.logits(Tensor._wrap(x[idx])), y[idx])
                backward(loss)
                tape.reset()
            adam_step(clf.params, collect_grads(clf.params), state, hyper)
    if guard:
        acc = clf.accuracy(images, identities)
        if acc < GUARD_ACCURACY:
            raise ClassifierGuardError(f"content classifier reaches only {acc:.3f} on clean renders")
    return clf
