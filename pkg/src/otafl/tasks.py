"""Training objectives, synthetic data, and the non-iid partitioner.

Three task families stand in for full-scale image models at desk scale:

* quadratic: client n holds a target vector b_n and pays
  0.5 * (theta - b_n)' A (theta - b_n).  Heterogeneity enters through the
  per-client targets, so the heterogeneity constant has a closed form.
* logistic: multinomial logistic regression on (features, label) datasets.
* mlp: one tanh hidden layer, softmax output.

For the classification tasks the flat parameter vector is laid out
feature-major: for each input feature its per-class weights are contiguous,
with all bias terms at the end.  Gradients are exact full-batch gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass
class Dataset:
    features: np.ndarray   # (m, p)
    labels: np.ndarray     # (m,) integers in [0, n_classes)
    n_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.ndim != 1:
            raise ConfigurationError("features must be (m, p), labels (m,)")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ConfigurationError("features and labels disagree on sample count")
        if self.features.shape[0] < 1:
            raise ConfigurationError("dataset needs at least one sample")
        if self.n_classes < 1:
            raise ConfigurationError("need at least one class")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise ConfigurationError(
                f"labels must lie in [0, {self.n_classes})"
            )

    @property
    def m(self) -> int:
        return int(self.labels.size)

    @property
    def p(self) -> int:
        return int(self.features.shape[1])


@dataclass(frozen=True)
class PartitionSpec:
    alpha: float       # symmetric Dirichlet concentration
    n_clients: int

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigurationError("dirichlet concentration alpha must be > 0")
        if self.n_clients < 1:
            raise ConfigurationError("need at least one client")


def _logsumexp(z: np.ndarray) -> np.ndarray:
    zmax = z.max(axis=1, keepdims=True)
    return np.log(np.exp(z - zmax).sum(axis=1, keepdims=True)) + zmax


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


class QuadraticTask:
    """Quadratic objective with per-client targets.

    The per-client payload is the target vector b_n; loss and gradient are
    0.5 * (theta - b_n)' A (theta - b_n) and A (theta - b_n).
    """

    def __init__(self, A: np.ndarray, b: np.ndarray):
        A = np.asarray(A, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ConfigurationError("A must be a square matrix")
        if not np.allclose(A, A.T, atol=1e-10):
            raise ConfigurationError("A must be symmetric")
        eigs = np.linalg.eigvalsh(A)
        if eigs[0] < -1e-10:
            raise ConfigurationError("A must be positive semidefinite")
        if b.shape != (A.shape[0],):
            raise ConfigurationError("b must match A's dimension")
        self.A = A
        self.b = b
        self._eigs = eigs

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def smoothness(self) -> float:
        """Exact largest eigenvalue of the Hessian A."""
        return float(self._eigs[-1])

    def loss(self, theta: np.ndarray, b_n: np.ndarray) -> float:
        delta = np.asarray(theta, dtype=np.float64) - np.asarray(b_n, dtype=np.float64)
        if delta.shape != (self.dim,):
            raise ConfigurationError("theta/target dimension mismatch")
        return float(0.5 * delta @ self.A @ delta)

    def gradient(self, theta: np.ndarray, b_n: np.ndarray) -> np.ndarray:
        delta = np.asarray(theta, dtype=np.float64) - np.asarray(b_n, dtype=np.float64)
        if delta.shape != (self.dim,):
            raise ConfigurationError("theta/target dimension mismatch")
        return self.A @ delta


class LogisticRegressionTask:
    """Multinomial logistic regression with mean cross-entropy loss."""

    def __init__(self, p: int, n_classes: int):
        if p < 1 or n_classes < 2:
            raise ConfigurationError("need p >= 1 features and >= 2 classes")
        self.p = int(p)
        self.n_classes = int(n_classes)

    @property
    def dim(self) -> int:
        return self.n_classes * (self.p + 1)

    def _unpack(self, theta: np.ndarray):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.dim,):
            raise ConfigurationError(
                f"theta has length {theta.size}, expected {self.dim}"
            )
        w = theta[: self.p * self.n_classes].reshape(self.p, self.n_classes)
        bias = theta[self.p * self.n_classes:]
        return w, bias

    def logits(self, theta: np.ndarray, data: Dataset) -> np.ndarray:
        w, bias = self._unpack(theta)
        return data.features @ w + bias

    def loss(self, theta: np.ndarray, data: Dataset) -> float:
        z = self.logits(theta, data)
        lse = _logsumexp(z)[:, 0]
        return float(np.mean(lse - z[np.arange(data.m), data.labels]))

    def gradient(self, theta: np.ndarray, data: Dataset) -> np.ndarray:
        z = self.logits(theta, data)
        resid = _softmax(z)
        resid[np.arange(data.m), data.labels] -= 1.0
        resid /= data.m
        grad_w = data.features.T @ resid          # (p, C), feature-major
        grad_b = resid.sum(axis=0)
        return np.concatenate([grad_w.ravel(), grad_b])

    def accuracy(self, theta: np.ndarray, data: Dataset) -> float:
        pred = np.argmax(self.logits(theta, data), axis=1)
        return float(np.mean(pred == data.labels))


class MLPTask:
    """One-hidden-layer tanh network with softmax cross-entropy loss.

    Training from an all-zero parameter vector is degenerate (the hidden
    layer gets no gradient), so runs should start from a random theta.
    """

    def __init__(self, p: int, hidden: int, n_classes: int):
        if p < 1 or hidden < 1 or n_classes < 2:
            raise ConfigurationError("need p, hidden >= 1 and >= 2 classes")
        self.p = int(p)
        self.hidden = int(hidden)
        self.n_classes = int(n_classes)

    @property
    def dim(self) -> int:
        return self.hidden * (self.p + 1) + self.n_classes * (self.hidden + 1)

    def _unpack(self, theta: np.ndarray):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.dim,):
            raise ConfigurationError(
                f"theta has length {theta.size}, expected {self.dim}"
            )
        p, h, c = self.p, self.hidden, self.n_classes
        i = 0
        w1 = theta[i:i + p * h].reshape(p, h); i += p * h
        b1 = theta[i:i + h]; i += h
        w2 = theta[i:i + h * c].reshape(h, c); i += h * c
        b2 = theta[i:]
        return w1, b1, w2, b2

    def _forward(self, theta: np.ndarray, data: Dataset):
        w1, b1, w2, b2 = self._unpack(theta)
        hidden = np.tanh(data.features @ w1 + b1)
        return hidden, hidden @ w2 + b2

    def loss(self, theta: np.ndarray, data: Dataset) -> float:
        _, z = self._forward(theta, data)
        lse = _logsumexp(z)[:, 0]
        return float(np.mean(lse - z[np.arange(data.m), data.labels]))

    def gradient(self, theta: np.ndarray, data: Dataset) -> np.ndarray:
        w1, b1, w2, b2 = self._unpack(theta)
        hidden = np.tanh(data.features @ w1 + b1)
        z = hidden @ w2 + b2
        dz = _softmax(z)
        dz[np.arange(data.m), data.labels] -= 1.0
        dz /= data.m
        grad_w2 = hidden.T @ dz
        grad_b2 = dz.sum(axis=0)
        dhidden = (dz @ w2.T) * (1.0 - hidden**2)
        grad_w1 = data.features.T @ dhidden
        grad_b1 = dhidden.sum(axis=0)
        return np.concatenate(
            [grad_w1.ravel(), grad_b1, grad_w2.ravel(), grad_b2]
        )

    def accuracy(self, theta: np.ndarray, data: Dataset) -> float:
        _, z = self._forward(theta, data)
        return float(np.mean(np.argmax(z, axis=1) == data.labels))


def local_loss(task, theta: np.ndarray, data) -> float:
    """Mean per-sample loss of one client."""
    return task.loss(theta, data)


def local_gradient(task, theta: np.ndarray, data) -> np.ndarray:
    """Exact full-batch gradient of the client's local loss."""
    return task.gradient(theta, data)


def global_loss(task, theta: np.ndarray, partitions: list) -> float:
    """Unweighted mean of the local losses over all clients."""
    if not partitions:
        raise ConfigurationError("need at least one client partition")
    return float(np.mean([task.loss(theta, part) for part in partitions]))


def gen_synthetic(
    p: int, n_classes: int, m: int, separation: float, rng: np.random.Generator
) -> Dataset:
    """Gaussian class clusters with unit noise and balanced labels.

    Class centers have norm `separation`; when the class count fits in the
    feature dimension the center directions are orthonormal, so all pairwise
    center distances equal sqrt(2) * separation.
    """
    if p < 1 or n_classes < 1 or m < 1:
        raise ConfigurationError("p, n_classes, m must all be positive")
    if separation < 0:
        raise ConfigurationError("separation must be nonnegative")
    if n_classes <= p:
        q, _ = np.linalg.qr(rng.normal(size=(p, n_classes)))
        centers = separation * q.T
    else:
        dirs = rng.normal(size=(n_classes, p))
        centers = separation * dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    labels = np.arange(m, dtype=np.int64) % n_classes
    features = centers[labels] + rng.normal(size=(m, p))
    perm = rng.permutation(m)
    return Dataset(features[perm], labels[perm], n_classes)


def dirichlet_partition_indices(
    data: Dataset, spec: PartitionSpec, rng: np.random.Generator
) -> list:
    """Index lists of a Dirichlet label-skew split; exact disjoint partition.

    For every class, client proportions are drawn from a symmetric
    Dirichlet(alpha).  Clients left empty are repaired by moving one sample
    from the currently largest client, so every client ends up nonempty.
    """
    n = spec.n_clients
    if data.m < n:
        raise ConfigurationError(
            f"cannot split {data.m} samples across {n} clients"
        )
    per_client = [[] for _ in range(n)]
    for c in range(data.n_classes):
        members = np.flatnonzero(data.labels == c)
        if members.size == 0:
            continue
        members = rng.permutation(members)
        props = rng.dirichlet(np.full(n, spec.alpha))
        cuts = (np.cumsum(props)[:-1] * members.size).astype(int)
        for client, part in enumerate(np.split(members, cuts)):
            per_client[client].extend(part.tolist())
    for client in range(n):
        while not per_client[client]:
            sizes = [len(ix) for ix in per_client]
            donor = int(np.argmax(sizes))
            per_client[client].append(per_client[donor].pop())
    return [np.sort(np.array(ix, dtype=np.int64)) for ix in per_client]


def dirichlet_partition(
    data: Dataset, spec: PartitionSpec, rng: np.random.Generator
) -> list:
    """Split a dataset into per-client datasets with Dirichlet label skew."""
    return [
        Dataset(data.features[ix], data.labels[ix], data.n_classes)
        for ix in dirichlet_partition_indices(data, spec, rng)
    ]


def split_train_test(
    data: Dataset, test_fraction: float, rng: np.random.Generator
) -> tuple:
    """Stratified train/test split.  The test set may be empty for tiny
    classes; callers must handle a None test set."""
    if not 0.0 <= test_fraction < 1.0:
        raise ConfigurationError("test fraction must be in [0, 1)")
    train_idx, test_idx = [], []
    for c in range(data.n_classes):
        members = rng.permutation(np.flatnonzero(data.labels == c))
        n_test = int(members.size * test_fraction)
        test_idx.extend(members[:n_test].tolist())
        train_idx.extend(members[n_test:].tolist())
    train_idx = np.sort(np.array(train_idx, dtype=np.int64))
    test_idx = np.sort(np.array(test_idx, dtype=np.int64))
    train = Dataset(data.features[train_idx], data.labels[train_idx], data.n_classes)
    test = None
    if test_idx.size:
        test = Dataset(data.features[test_idx], data.labels[test_idx], data.n_classes)
    return train, test


def save_dataset(data: Dataset, path) -> None:
    """Write a dataset as delimited text: a 'p,C' header line, then one
    sample per line (p feature columns followed by the integer label)."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{data.p},{data.n_classes}\n")
        for row, label in zip(data.features, data.labels):
            cols = ",".join(f"{v:.17g}" for v in row)
            fh.write(f"{cols},{label}\n")


def load_dataset(path) -> Dataset:
    """Read a dataset written by :func:`save_dataset` (or by hand)."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        try:
            p, n_classes = (int(tok) for tok in header.replace(",", " ").split())
        except ValueError as exc:
            raise ConfigurationError(
                f"bad dataset header {header!r}, expected 'p,C'"
            ) from exc
        features, labels = [], []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            toks = line.replace(",", " ").split()
            if len(toks) != p + 1:
                raise ConfigurationError(
                    f"line {lineno}: expected {p} features plus a label"
                )
            features.append([float(t) for t in toks[:p]])
            labels.append(int(toks[p]))
    if not features:
        raise ConfigurationError("dataset file has no samples")
    return Dataset(np.array(features), np.array(labels), n_classes)
