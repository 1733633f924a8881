"""Trainable meta-annotation classifiers (negation, experiencer, ...).

Each task is a small bidirectional LSTM over the token window around a
linked mention, with the mention's surface form replaced by a generic
placeholder so the learned representation is concept-agnostic. Gates are
implemented directly in numpy with hand-derived backprop so gradients
can be verified against finite differences.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ModelFormatError
from .store import Vocabulary
from .textpipe import TokenizedDocument

REPLACE_TOKEN = "[concept]"

META_MAGIC = b"CLMM"
META_VERSION = 1

# parameter names in serialization order
_PARAM_ORDER = ["Wf", "Uf", "bf", "Wb", "Ub", "bb", "W_out", "b_out"]


@dataclass
class MetaTask:
    name: str
    labels: list[str]
    context_window: int = 15
    replace_token: str = REPLACE_TOKEN

    def __post_init__(self):
        if len(self.labels) < 2:
            raise ValueError("a meta task needs at least two labels")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("duplicate labels")
        if self.context_window < 1:
            raise ValueError("context_window must be >= 1")


@dataclass
class MetaExample:
    token_norms: list[str]
    label: str


@dataclass
class MetaModel:
    task: MetaTask
    token_embedding_dim: int
    hidden_dim: int
    params: dict[str, np.ndarray]
    label_priors: np.ndarray
    epochs_trained: int = 0


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def init_model(
    task: MetaTask,
    embedding_dim: int,
    hidden_dim: int = 64,
    seed: int = 0,
    label_priors: Optional[np.ndarray] = None,
) -> MetaModel:
    """Fresh model. The output head starts at zero with the label-prior
    log odds as bias, so an untrained model predicts the priors."""
    rng = np.random.default_rng(seed)
    h, d, c = hidden_dim, embedding_dim, len(task.labels)
    if label_priors is None:
        label_priors = np.full(c, 1.0 / c)
    w_scale = np.sqrt(6.0 / (d + h))
    u_scale = np.sqrt(6.0 / (2 * h))
    bias = np.zeros(4 * h)
    bias[h:2 * h] = 1.0  # forget-gate bias keeps early memory open
    params = {
        "Wf": rng.uniform(-w_scale, w_scale, (4 * h, d)),
        "Uf": rng.uniform(-u_scale, u_scale, (4 * h, h)),
        "bf": bias.copy(),
        "Wb": rng.uniform(-w_scale, w_scale, (4 * h, d)),
        "Ub": rng.uniform(-u_scale, u_scale, (4 * h, h)),
        "bb": bias.copy(),
        "W_out": np.zeros((c, 2 * h)),
        "b_out": np.log(np.maximum(label_priors, 1e-12)),
    }
    return MetaModel(
        task=task,
        token_embedding_dim=d,
        hidden_dim=hidden_dim,
        params=params,
        label_priors=np.asarray(label_priors, dtype=float),
    )


def _lstm_direction(X, mask, W, U, b, hidden_dim):
    """Run one direction over the batch; returns states for backprop."""
    B, T, _ = X.shape
    H = hidden_dim
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    cache = []
    hs = np.zeros((B, T, H))
    for t in range(T):
        x = X[:, t, :]
        z = x @ W.T + h @ U.T + b
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        o = _sigmoid(z[:, 2 * H:3 * H])
        g = np.tanh(z[:, 3 * H:])
        c_new = f * c + i * g
        h_new = o * np.tanh(c_new)
        cache.append((x, h, c, i, f, o, g, c_new))
        h, c = h_new, c_new
        hs[:, t, :] = h
    lengths = mask.sum(axis=1, keepdims=True)
    pooled = (hs * mask[:, :, None]).sum(axis=1) / np.maximum(lengths, 1)
    return hs, pooled, cache


def _lstm_direction_backward(dpooled, mask, cache, W, U, hidden_dim):
    """BPTT for one direction given the gradient at the mean-pooled
    output. Padded positions receive zero pooling weight, so their
    gradients vanish without explicit masking."""
    B = dpooled.shape[0]
    T = len(cache)
    H = hidden_dim
    lengths = np.maximum(mask.sum(axis=1, keepdims=True), 1)
    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros(4 * H)
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        x, h_prev, c_prev, i, f, o, g, c_new = cache[t]
        tanh_c = np.tanh(c_new)
        dh = dpooled * (mask[:, t:t + 1] / lengths) + dh_next
        do = dh * tanh_c
        dc = dh * o * (1.0 - tanh_c ** 2) + dc_next
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dz = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                do * o * (1.0 - o),
                dg * (1.0 - g ** 2),
            ],
            axis=1,
        )
        dW += dz.T @ x
        dU += dz.T @ h_prev
        db += dz.sum(axis=0)
        dh_next = dz @ U
        dc_next = dc * f
    return dW, dU, db


def _reverse_valid(X, mask):
    """Reverse each sequence's valid prefix, keeping padding in place."""
    out = np.zeros_like(X)
    for b in range(X.shape[0]):
        n = int(mask[b].sum())
        out[b, :n] = X[b, :n][::-1]
    return out


def forward(model: MetaModel, X: np.ndarray, mask: np.ndarray):
    """Class probabilities for a batch; also returns backprop state."""
    p = model.params
    H = model.hidden_dim
    Xr = _reverse_valid(X, mask)
    _, pooled_f, cache_f = _lstm_direction(X, mask, p["Wf"], p["Uf"], p["bf"], H)
    _, pooled_b, cache_b = _lstm_direction(Xr, mask, p["Wb"], p["Ub"], p["bb"], H)
    pooled = np.concatenate([pooled_f, pooled_b], axis=1)
    logits = pooled @ p["W_out"].T + p["b_out"]
    logits -= logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    probs = exp / exp.sum(axis=1, keepdims=True)
    state = (X, Xr, mask, pooled_f, pooled_b, pooled, cache_f, cache_b, probs)
    return probs, state


def loss_and_grads(model: MetaModel, X: np.ndarray, mask: np.ndarray, y: np.ndarray):
    """Mean cross-entropy over the batch and gradients for every
    parameter. ``y`` holds integer class indices."""
    p = model.params
    H = model.hidden_dim
    probs, state = forward(model, X, mask)
    _, Xr, _, pooled_f, pooled_b, pooled, cache_f, cache_b, _ = state
    B = X.shape[0]
    loss = -float(np.mean(np.log(np.maximum(probs[np.arange(B), y], 1e-300))))

    dlogits = probs.copy()
    dlogits[np.arange(B), y] -= 1.0
    dlogits /= B
    grads = {
        "W_out": dlogits.T @ pooled,
        "b_out": dlogits.sum(axis=0),
    }
    dpooled = dlogits @ p["W_out"]
    dpf, dpb = dpooled[:, :H], dpooled[:, H:]
    grads["Wf"], grads["Uf"], grads["bf"] = _lstm_direction_backward(
        dpf, mask, cache_f, p["Wf"], p["Uf"], H
    )
    grads["Wb"], grads["Ub"], grads["bb"] = _lstm_direction_backward(
        dpb, mask, cache_b, p["Wb"], p["Ub"], H
    )
    return loss, grads


def extract_window(
    doc: TokenizedDocument,
    token_span: tuple[int, int],
    task: MetaTask,
) -> list[str]:
    """Token window around a mention with the mention replaced by the
    task's placeholder. Stopwords stay (negation cues often are ones);
    punctuation is dropped."""
    first, last = token_span
    left = [
        t.norm for t in doc.tokens[:first] if not t.is_punct
    ][-task.context_window:]
    right = [
        t.norm for t in doc.tokens[last + 1:] if not t.is_punct
    ][:task.context_window]
    return left + [task.replace_token] + right


def build_examples(export: dict, task: MetaTask, pipeline) -> list[MetaExample]:
    """Training examples from a project export; annotations without a
    label for this task are skipped."""
    examples = []
    for project in export.get("projects", []):
        for document in project.get("documents", []):
            doc = None
            for ann in document.get("annotations", []):
                label = (ann.get("meta") or {}).get(task.name)
                if label is None or label not in task.labels:
                    continue
                if doc is None:
                    doc = pipeline(document["text"], str(document.get("doc_id", "")))
                span = _ann_token_span(doc, ann["start"], ann["end"])
                if span is None:
                    continue
                examples.append(
                    MetaExample(token_norms=extract_window(doc, span, task), label=label)
                )
    return examples


def _ann_token_span(doc, start, end):
    idxs = [
        i for i, t in enumerate(doc.tokens)
        if t.start >= start and t.end <= end and not t.is_punct
    ]
    if not idxs:
        return None
    return (idxs[0], idxs[-1])


def _embed_batch(examples: list[MetaExample], vcb: Vocabulary):
    T = max(len(e.token_norms) for e in examples)
    D = vcb.dim
    X = np.zeros((len(examples), T, D))
    mask = np.zeros((len(examples), T))
    for b, e in enumerate(examples):
        for t, norm in enumerate(e.token_norms):
            X[b, t] = vcb.vector(norm)
            mask[b, t] = 1.0
    return X, mask


def _f1_scores(y_true, y_pred, n_classes):
    """Per-class F1 plus macro and support-weighted averages."""
    f1s = np.zeros(n_classes)
    support = np.zeros(n_classes)
    for c in range(n_classes):
        tp = int(np.sum((y_pred == c) & (y_true == c)))
        fp = int(np.sum((y_pred == c) & (y_true != c)))
        fn = int(np.sum((y_pred != c) & (y_true == c)))
        denom = 2 * tp + fp + fn
        f1s[c] = (2 * tp / denom) if denom else 0.0
        support[c] = tp + fn
    macro = float(f1s.mean())
    total = support.sum()
    weighted = float((f1s * support).sum() / total) if total else 0.0
    return f1s, macro, weighted


def train_meta(
    examples: list[MetaExample],
    task: MetaTask,
    vcb: Vocabulary,
    epochs: int = 20,
    lr: float = 0.01,
    hidden_dim: int = 64,
    seed: int = 0,
    batch_size: int = 32,
    test_fraction: float = 0.1,
    clip_norm: float = 5.0,
):
    """Gradient-descent training on cross-entropy with a seeded 10%
    held-out split. Returns (model, per-epoch metric records)."""
    labels_present = {e.label for e in examples}
    if len(labels_present) < 2:
        raise ValueError("degenerate task: fewer than two labels present in data")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(examples))
    shuffled = [examples[i] for i in order]
    n_test = max(1, int(round(len(shuffled) * test_fraction)))
    test, train = shuffled[:n_test], shuffled[n_test:]

    label_to_idx = {lab: i for i, lab in enumerate(task.labels)}
    counts = np.zeros(len(task.labels))
    for e in train:
        counts[label_to_idx[e.label]] += 1
    priors = counts / max(counts.sum(), 1)

    model = init_model(task, vcb.dim, hidden_dim, seed=seed, label_priors=priors)

    def eval_split(split):
        if not split:
            return 0.0, 0.0, 0.0
        X, mask = _embed_batch(split, vcb)
        y = np.array([label_to_idx[e.label] for e in split])
        probs, _ = forward(model, X, mask)
        loss = -float(np.mean(np.log(np.maximum(probs[np.arange(len(split)), y], 1e-300))))
        _, macro, weighted = _f1_scores(y, probs.argmax(axis=1), len(task.labels))
        return loss, macro, weighted

    metrics = []
    for epoch in range(1, epochs + 1):
        perm = rng.permutation(len(train))
        for lo in range(0, len(train), batch_size):
            batch = [train[i] for i in perm[lo:lo + batch_size]]
            X, mask = _embed_batch(batch, vcb)
            y = np.array([label_to_idx[e.label] for e in batch])
            _, grads = loss_and_grads(model, X, mask, y)
            norm = np.sqrt(sum(float((g ** 2).sum()) for g in grads.values()))
            scale = lr * (clip_norm / norm if norm > clip_norm else 1.0)
            for name, g in grads.items():
                model.params[name] -= scale * g
        model.epochs_trained = epoch
        for split_name, split in (("train", train), ("test", test)):
            loss, macro, weighted = eval_split(split)
            metrics.append(
                {
                    "epoch": epoch,
                    "split": split_name,
                    "loss": loss,
                    "macro_f1": macro,
                    "weighted_f1": weighted,
                }
            )
    return model, metrics


def predict_example(model: MetaModel, token_norms: list[str], vcb: Vocabulary):
    if model.epochs_trained == 0:
        probs = model.label_priors
    else:
        X, mask = _embed_batch([MetaExample(token_norms, "")], vcb)
        batch_probs, _ = forward(model, X, mask)
        probs = batch_probs[0]
    idx = int(np.argmax(probs))
    return model.task.labels[idx], probs


def predict_meta(
    model: MetaModel,
    doc: TokenizedDocument,
    token_span: tuple[int, int],
    vcb: Vocabulary,
):
    """Label + class probabilities for one mention in a document."""
    window = extract_window(doc, token_span, model.task)
    return predict_example(model, window, vcb)


def save_meta_model(path, model: MetaModel) -> None:
    header = {
        "task": {
            "name": model.task.name,
            "labels": model.task.labels,
            "context_window": model.task.context_window,
            "replace_token": model.task.replace_token,
        },
        "token_embedding_dim": model.token_embedding_dim,
        "hidden_dim": model.hidden_dim,
        "epochs_trained": model.epochs_trained,
        "label_priors": list(model.label_priors),
        "shapes": {k: list(model.params[k].shape) for k in _PARAM_ORDER},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(META_MAGIC)
        fh.write(struct.pack("<II", META_VERSION, len(blob)))
        fh.write(blob)
        for name in _PARAM_ORDER:
            fh.write(np.ascontiguousarray(model.params[name], dtype="<f8").tobytes())


def load_meta_model(path) -> MetaModel:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != META_MAGIC:
            raise ModelFormatError(f"not a meta-model file: {path}")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != META_VERSION:
            raise ModelFormatError(f"unsupported meta-model version {version}")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        params = {}
        for name in _PARAM_ORDER:
            shape = tuple(header["shapes"][name])
            count = int(np.prod(shape))
            data = fh.read(count * 8)
            if len(data) != count * 8:
                raise ModelFormatError(f"truncated meta-model file: {path}")
            params[name] = np.frombuffer(data, dtype="<f8").reshape(shape).copy()
    task = MetaTask(**header["task"])
    model = MetaModel(
        task=task,
        token_embedding_dim=header["token_embedding_dim"],
        hidden_dim=header["hidden_dim"],
        params=params,
        label_priors=np.asarray(header["label_priors"]),
        epochs_trained=header["epochs_trained"],
    )
    return model
