"""Training loop, evaluation, metric computation, checkpointing, reports.

One optimizer step per batch of 8 over the 4000 sampled indices per
epoch (500 steps). The quantum gradient goes through the adjoint sweep
in ``grad``; the classical head through explicit reverse-mode in ``nn``.
Everything is deterministic given (seed, config, inputs).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import nn
from .circuit import QcnnConfig, QcnnParams, n_circuit_params
from .errors import ConfigurationError, FormatError
from .grad import adjoint_gradient
from .circuit import forward_batch

N_CLASSES = 4


@dataclass(frozen=True)
class TrainConfig:
    qubits: int = 12          # total; latent dim L = qubits - 4
    lr: float = 0.001
    batch_size: int = 8
    epochs: int = 100
    n_max: int = 1000
    seed: int = 0
    freeze_head: bool = False
    feature_dim: int = 2048
    proj_hidden: int = 256
    mlp_hidden: tuple = (16, 8)

    def __post_init__(self):
        if self.qubits not in (8, 12):
            raise ConfigurationError(f"qubits must be 8 or 12, got {self.qubits}")
        if self.lr < 0:
            raise ConfigurationError("lr must be nonnegative")
        for name in ("batch_size", "epochs", "n_max", "feature_dim",
                     "proj_hidden"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")

    @property
    def latent_dim(self) -> int:
        return self.qubits - 4

    @property
    def circuit_config(self) -> QcnnConfig:
        return QcnnConfig(n_data=self.latent_dim)


@dataclass
class Metrics:
    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_precision: float
    macro_recall: float
    macro_f1: float
    micro_precision: float
    micro_recall: float
    accuracy: float

    def to_dict(self) -> dict:
        d = {"confusion": self.confusion.astype(int).tolist()}
        for i, name in enumerate(data_mod.LABELS):
            d[f"{name.lower()}_precision"] = float(self.precision[i])
            d[f"{name.lower()}_recall"] = float(self.recall[i])
            d[f"{name.lower()}_f1"] = float(self.f1[i])
        d.update(
            macro_precision=self.macro_precision,
            macro_recall=self.macro_recall,
            macro_f1=self.macro_f1,
            micro_precision=self.micro_precision,
            micro_recall=self.micro_recall,
            accuracy=self.accuracy,
        )
        return d


def compute_metrics(confusion: np.ndarray) -> Metrics:
    """Per-class and macro/micro precision/recall/F1 from a 4x4 confusion
    matrix (rows = true class, columns = predicted class)."""
    m = np.asarray(confusion)
    if m.shape != (N_CLASSES, N_CLASSES) or np.any(m < 0):
        raise ConfigurationError(f"confusion matrix must be nonnegative 4x4, got {m.shape}")
    total = m.sum()
    if total == 0:
        raise ConfigurationError("confusion matrix is all zero")
    diag = np.diag(m).astype(float)
    col = m.sum(axis=0).astype(float)
    row = m.sum(axis=1).astype(float)
    precision = np.divide(diag, col, out=np.zeros(N_CLASSES), where=col > 0)
    recall = np.divide(diag, row, out=np.zeros(N_CLASSES), where=row > 0)
    pr = precision + recall
    f1 = np.divide(2 * precision * recall, pr, out=np.zeros(N_CLASSES), where=pr > 0)
    micro = float(diag.sum() / total)
    return Metrics(
        confusion=m.astype(np.int64),
        precision=precision,
        recall=recall,
        f1=f1,
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        micro_precision=micro,
        micro_recall=micro,
        accuracy=micro,
    )


# ---------------------------------------------------------------------------
# Training state
# ---------------------------------------------------------------------------

@dataclass
class TrainState:
    config: TrainConfig
    qcnn_flat: np.ndarray
    head: nn.HeadParams
    adam: nn.AdamState
    rng: np.random.Generator
    class_weights: np.ndarray
    epoch: int = 0
    best_val_acc: float = -1.0
    history: list = field(default_factory=list)

    def params_dict(self) -> dict:
        d = self.head.to_dict()
        d["qcnn"] = self.qcnn_flat
        return d


def init_state(config: TrainConfig, class_weights: np.ndarray) -> TrainState:
    rng = np.random.default_rng(config.seed)
    circ = config.circuit_config
    qcnn = QcnnParams.random(circ, rng).flatten()
    head = nn.init_head(rng, config.latent_dim, config.feature_dim,
                        config.proj_hidden, tuple(config.mlp_hidden))
    adam = nn.AdamState(lr=config.lr)
    return TrainState(config, qcnn, head, adam, rng,
                      np.asarray(class_weights, dtype=float))


# ---------------------------------------------------------------------------
# Forward / loss over feature batches
# ---------------------------------------------------------------------------

def _batch_forward(state: TrainState, feats: np.ndarray, cache: dict = None):
    raw = nn.project(feats.astype(float), state.head, cache)
    z = nn.rescale_latent(raw)
    q = forward_batch(z, state.qcnn_flat, state.config.circuit_config)
    logits = nn.mlp_forward(q, state.head, cache)
    if cache is not None:
        cache["raw"] = raw
        cache["z"] = z
    return logits


def predict_logits(state: TrainState, feats: np.ndarray, chunk: int = 128) -> np.ndarray:
    out = [_batch_forward(state, feats[i:i + chunk])
           for i in range(0, feats.shape[0], chunk)]
    return np.concatenate(out, axis=0)


def train_epoch(state: TrainState, feats: np.ndarray, labels: np.ndarray) -> dict:
    """One epoch: n_max*4 weighted draws, one Adam step per batch.

    Returns mean loss and accuracy over the sampled stream.
    """
    cfg = state.config
    if feats.shape[1] != state.head.feature_dim:
        raise ConfigurationError(
            f"feature dim {feats.shape[1]} does not match head {state.head.feature_dim}"
        )
    idx = data_mod.weighted_sample(labels, cfg.n_max, state.rng)
    bs = cfg.batch_size
    losses, correct, seen, steps = [], 0, 0, 0
    for start in range(0, idx.size, bs):
        batch = idx[start:start + bs]
        fb = feats[batch].astype(float)
        yb = labels[batch]
        cache = {}
        logits = _batch_forward(state, fb, cache)
        loss_vec, d_logits = nn.weighted_cross_entropy(logits, yb, state.class_weights)
        if not np.all(np.isfinite(loss_vec)):
            raise FloatingPointError(
                "non-finite loss; offending batch indices "
                f"{batch.tolist()}, logits {logits.tolist()}"
            )
        b = batch.size
        d_logits = d_logits / b  # batch loss is the mean
        mlp_grads, d_q = nn.mlp_backward(cache, d_logits, state.head)
        d_flat, d_z = adjoint_gradient(cache["z"], state.qcnn_flat,
                                       cfg.circuit_config, d_q)
        d_raw = d_z * nn.rescale_grad(cache["raw"])
        proj_grads = nn.project_backward(cache, d_raw, state.head)
        grads = dict(mlp_grads)
        grads.update(proj_grads)
        grads["qcnn"] = d_flat.sum(axis=0)
        if cfg.freeze_head:
            for k in proj_grads:
                grads[k] = np.zeros_like(grads[k])
        state.adam.step(state.params_dict(), grads)
        losses.append(float(loss_vec.mean()))
        correct += int((logits.argmax(axis=1) == yb).sum())
        seen += b
        steps += 1
    return {
        "train_loss": float(np.mean(losses)),
        "train_acc": correct / seen,
        "steps": steps,
    }


def evaluate(state: TrainState, feats: np.ndarray, labels: np.ndarray) -> Metrics:
    """Argmax predictions (ties break to the lowest class index) and the
    full metric block."""
    if feats.shape[0] == 0:
        raise ConfigurationError("evaluation split is empty")
    logits = predict_logits(state, feats)
    preds = logits.argmax(axis=1)
    confusion = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(confusion, (labels, preds), 1)
    return compute_metrics(confusion)


def eval_loss(state: TrainState, feats: np.ndarray, labels: np.ndarray) -> float:
    logits = predict_logits(state, feats)
    loss_vec, _ = nn.weighted_cross_entropy(logits, labels, state.class_weights)
    return float(loss_vec.mean())


# ---------------------------------------------------------------------------
# Checkpoint codec (JSON; reals as 17-significant-digit decimal strings)
# ---------------------------------------------------------------------------

def _enc_array(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": [f"{x:.17g}" for x in np.asarray(a).ravel()]}


def _dec_array(d: dict, where: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in d["data"]], dtype=float).reshape(d["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"invalid checkpoint array at {where}: {exc}") from exc


def save_checkpoint(state: TrainState, path) -> None:
    doc = {
        "format": "qcnnkit-checkpoint",
        "version": 1,
        "config": {**asdict(state.config), "mlp_hidden": list(state.config.mlp_hidden)},
        "epoch": state.epoch,
        "best_val_acc": f"{state.best_val_acc:.17g}",
        "qcnn": _enc_array(state.qcnn_flat),
        "head": {k: _enc_array(v) for k, v in state.head.to_dict().items()},
        "adam": {
            "lr": f"{state.adam.lr:.17g}",
            "beta1": f"{state.adam.beta1:.17g}",
            "beta2": f"{state.adam.beta2:.17g}",
            "eps": f"{state.adam.eps:.17g}",
            "t": state.adam.t,
            "m": {k: _enc_array(v) for k, v in state.adam.m.items()},
            "v": {k: _enc_array(v) for k, v in state.adam.v.items()},
        },
        "class_weights": _enc_array(state.class_weights),
        "rng_state": state.rng.bit_generator.state,
        "history": state.history,
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_checkpoint(path) -> TrainState:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read checkpoint {path}: {exc}") from exc
    for key in ("format", "config", "qcnn", "head", "adam", "rng_state"):
        if key not in doc:
            raise FormatError(f"checkpoint {path}: missing field $.{key}")
    if doc["format"] != "qcnnkit-checkpoint":
        raise FormatError(f"checkpoint {path}: bad $.format {doc['format']!r}")
    c = dict(doc["config"])
    c["mlp_hidden"] = tuple(c.get("mlp_hidden", nn.DEFAULT_MLP_HIDDEN))
    config = TrainConfig(**c)
    qcnn = _dec_array(doc["qcnn"], "$.qcnn").ravel()
    if qcnn.size != n_circuit_params(config.circuit_config):
        raise FormatError(f"checkpoint {path}: $.qcnn has wrong length {qcnn.size}")
    head = nn.HeadParams.from_dict(
        {k: _dec_array(v, f"$.head.{k}") for k, v in doc["head"].items()}
    )
    head.validate()
    a = doc["adam"]
    adam = nn.AdamState(
        lr=float(a["lr"]), beta1=float(a["beta1"]), beta2=float(a["beta2"]),
        eps=float(a["eps"]), t=int(a["t"]),
        m={k: _dec_array(v, f"$.adam.m.{k}") for k, v in a["m"].items()},
        v={k: _dec_array(v, f"$.adam.v.{k}") for k, v in a["v"].items()},
    )
    rng = np.random.default_rng(0)
    try:
        rng.bit_generator.state = doc["rng_state"]
    except (ValueError, TypeError, KeyError) as exc:
        raise FormatError(f"checkpoint {path}: invalid $.rng_state: {exc}") from exc
    state = TrainState(
        config=config, qcnn_flat=qcnn, head=head, adam=adam, rng=rng,
        class_weights=_dec_array(doc["class_weights"], "$.class_weights"),
        epoch=int(doc.get("epoch", 0)),
        best_val_acc=float(doc.get("best_val_acc", -1.0)),
        history=list(doc.get("history", [])),
    )
    return state


# ---------------------------------------------------------------------------
# Full runs and report emission
# ---------------------------------------------------------------------------

def _write_curves_csv(history, path) -> None:
    lines = ["epoch,train_loss,train_acc,val_loss,val_acc"]
    for row in history:
        lines.append(
            f"{row['epoch']},{row['train_loss']!r},{row['train_acc']!r},"
            f"{row['val_loss']!r},{row['val_acc']!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def _write_confusion_csv(metrics: Metrics, path) -> None:
    lines = ["true\\pred," + ",".join(data_mod.LABELS)]
    for i, name in enumerate(data_mod.LABELS):
        lines.append(name + "," + ",".join(str(int(v)) for v in metrics.confusion[i]))
    Path(path).write_text("\n".join(lines) + "\n")


def _plot_reports(history, metrics: Metrics, out_dir: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    epochs = [row["epoch"] for row in history]
    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    axes[0].plot(epochs, [r["train_loss"] for r in history], label="train loss")
    axes[0].plot(epochs, [r["val_loss"] for r in history], label="val loss")
    axes[0].set_xlabel("epoch")
    axes[0].set_ylabel("loss")
    axes[0].legend()
    axes[1].plot(epochs, [r["train_acc"] for r in history], label="train acc")
    axes[1].plot(epochs, [r["val_acc"] for r in history], label="val acc")
    axes[1].set_xlabel("epoch")
    axes[1].set_ylabel("accuracy")
    axes[1].legend()
    fig.tight_layout()
    fig.savefig(out_dir / "curves.png", dpi=120)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(5, 4.5))
    im = ax.imshow(metrics.confusion, cmap="Blues")
    ax.set_xticks(range(N_CLASSES), data_mod.LABELS)
    ax.set_yticks(range(N_CLASSES), data_mod.LABELS)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    for i in range(N_CLASSES):
        for j in range(N_CLASSES):
            ax.text(j, i, str(int(metrics.confusion[i, j])),
                    ha="center", va="center", fontsize=9)
    fig.colorbar(im)
    fig.tight_layout()
    fig.savefig(out_dir / "confusion.png", dpi=120)
    plt.close(fig)


def fit(config: TrainConfig, train_file, val_file, test_file, out_dir,
        resume=None, log_fn=print):
    """Full training run with per-epoch validation, best-checkpoint
    selection, and the report bundle (metrics.json, curves.csv,
    confusion.csv, PNG plots)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    train_feats, train_labels, _ = data_mod.features_to_arrays(
        data_mod.read_features(train_file))
    val_feats, val_labels, _ = data_mod.features_to_arrays(
        data_mod.read_features(val_file))
    test_feats, test_labels, _ = data_mod.features_to_arrays(
        data_mod.read_features(test_file))
    if train_feats.shape[1] != config.feature_dim:
        raise ConfigurationError(
            f"training features have dim {train_feats.shape[1]}, "
            f"config expects {config.feature_dim}"
        )

    counts = np.bincount(train_labels, minlength=N_CLASSES).astype(float)
    if np.any(counts == 0):
        raise ConfigurationError("training split is missing a class")
    weights = (counts.sum() / N_CLASSES) / counts

    if resume is not None:
        state = load_checkpoint(resume)
        # the epoch target may grow across restarts; everything else must match
        from dataclasses import replace
        if replace(state.config, epochs=config.epochs) != config:
            raise ConfigurationError("resume checkpoint config differs from requested config")
        state.config = config
    else:
        state = init_state(config, weights)

    best_path = out_dir / "checkpoint_best.json"
    final_path = out_dir / "checkpoint_final.json"

    for epoch in range(state.epoch, config.epochs):
        stats = train_epoch(state, train_feats, train_labels)
        val_metrics = evaluate(state, val_feats, val_labels)
        val_loss = eval_loss(state, val_feats, val_labels)
        row = {
            "epoch": epoch,
            "train_loss": stats["train_loss"],
            "train_acc": stats["train_acc"],
            "val_loss": val_loss,
            "val_acc": val_metrics.accuracy,
        }
        state.history.append(row)
        state.epoch = epoch + 1
        if val_metrics.accuracy > state.best_val_acc:
            state.best_val_acc = val_metrics.accuracy
            save_checkpoint(state, best_path)
        save_checkpoint(state, final_path)
        if log_fn:
            log_fn(
                f"epoch {epoch:3d}  train_loss {stats['train_loss']:.4f}  "
                f"train_acc {stats['train_acc']:.4f}  val_loss {val_loss:.4f}  "
                f"val_acc {val_metrics.accuracy:.4f}"
            )

    # a resumed run may never improve on the pre-resume best; fall back
    best_state = load_checkpoint(best_path if best_path.exists() else final_path)
    test_metrics = evaluate(best_state, test_feats, test_labels)
    (out_dir / "metrics.json").write_text(
        json.dumps(test_metrics.to_dict(), indent=1, sort_keys=True) + "\n"
    )
    _write_curves_csv(state.history, out_dir / "curves.csv")
    _write_confusion_csv(test_metrics, out_dir / "confusion.csv")
    _plot_reports(state.history, test_metrics, out_dir)
    return final_path, test_metrics
