"""Command-line surface: preprocess / train / eval / selftest.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Flags override values from an optional JSON or TOML config file whose
keys mirror the flag names.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import imgproc
from .errors import ConfigurationError, FormatError
from .train import TrainConfig, evaluate, fit, load_checkpoint

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _load_config_file(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"config file not found: {path}")
    if p.suffix.lower() == ".toml":
        try:
            import tomllib
        except ImportError:
            import tomli as tomllib
        return tomllib.loads(p.read_text())
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"cannot parse config file {path}: {exc}") from exc


def _merge_config(args: argparse.Namespace, parser_defaults: dict) -> None:
    """Config-file values fill in only where flags kept their defaults."""
    if not getattr(args, "config", None):
        return
    cfg = _load_config_file(args.config)
    known = set(vars(args))
    for key, value in cfg.items():
        if key not in known:
            raise ConfigurationError(f"unknown config key {key!r} in {args.config}")
        if getattr(args, key) == parser_defaults.get(key):
            setattr(args, key, value)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_preprocess(args) -> int:
    records = data_mod.read_manifest(args.manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    failures = []
    compared = 0
    for rec in records:
        dest = out_dir / rec.label / f"{rec.sample_id}.png"
        if dest.exists() and not args.force:
            continue
        try:
            img = imgproc.read_image(rec.path)
            processed = imgproc.preprocess(img)
        except (ConfigurationError, OSError) as exc:
            failures.append((rec.sample_id, rec.path, str(exc)))
            continue
        dest.parent.mkdir(parents=True, exist_ok=True)
        imgproc.write_image(dest, processed)
        if compared < args.compare:
            sheet = imgproc.comparison_sheet(imgproc.to_grayscale(img))
            imgproc.write_image(out_dir / f"compare_{rec.sample_id}.png", sheet)
            compared += 1
    if failures:
        report = out_dir / "failures.csv"
        report.write_text(
            "id,path,error\n"
            + "\n".join(f"{i},{p},{e!r}" for i, p, e in failures) + "\n"
        )
        print(f"{len(failures)} images failed; see {report}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"preprocessed {len(records)} images into {out_dir}")
    return EXIT_OK


def _require_file(path: str) -> None:
    if not Path(path).exists():
        raise ConfigurationError(f"feature file not found: {path}")


def cmd_train(args) -> int:
    for p in (args.train_features, args.val_features, args.test_features):
        _require_file(p)
    config = TrainConfig(
        qubits=args.qubits, lr=args.lr, batch_size=args.batch,
        epochs=args.epochs, n_max=args.nmax, seed=args.seed,
        freeze_head=args.freeze_head, feature_dim=args.feature_dim,
    )
    fit(config, args.train_features, args.val_features, args.test_features,
        args.out, resume=args.resume)
    print(f"training complete; reports in {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    _require_file(args.features)
    state = load_checkpoint(args.checkpoint)
    if args.qubits is not None and args.qubits != state.config.qubits:
        raise ConfigurationError(
            f"checkpoint has {state.config.qubits} qubits, flags request {args.qubits}"
        )
    feats, labels, _ = data_mod.features_to_arrays(
        data_mod.read_features(args.features))
    metrics = evaluate(state, feats, labels)
    d = metrics.to_dict()
    for name in data_mod.LABELS:
        low = name.lower()
        print(f"{name} Precision {d[low + '_precision']:.4f}  "
              f"Recall {d[low + '_recall']:.4f}  F1 {d[low + '_f1']:.4f}")
    print(f"Macro Precision {metrics.macro_precision:.4f}  "
          f"Macro Recall {metrics.macro_recall:.4f}")
    print(f"Micro Precision {metrics.micro_precision:.4f}  "
          f"Micro Recall {metrics.micro_recall:.4f}")
    print(f"Accuracy {metrics.accuracy:.4f}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "metrics.json").write_text(json.dumps(d, indent=1, sort_keys=True) + "\n")
    from .train import _write_confusion_csv
    _write_confusion_csv(metrics, out_dir / "confusion.csv")
    return EXIT_OK


def _selftest_checks():
    from . import qsim
    from .circuit import QcnnConfig, QcnnParams
    from .grad import finite_difference, parameter_shift

    def check_kernels():
        rng = np.random.default_rng(11)
        for _ in range(100):
            n = int(rng.integers(2, 5))
            amp = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
            amp /= np.linalg.norm(amp)
            wires = rng.permutation(n)[:3]
            s1 = qsim.Statevector(n, amp.copy())
            s2 = qsim.Statevector(n, amp.copy())
            gate = qsim.make_u3(*rng.uniform(-np.pi, np.pi, 3))
            qsim.apply_single(s1, gate, int(wires[0]))
            qsim.apply_dense_oracle(s2, qsim.embed_1q(gate, int(wires[0]), n))
            assert np.allclose(s1.amplitudes, s2.amplitudes, atol=1e-12)
            if n >= 2:
                qsim.apply_controlled(s1, gate, int(wires[0]), int(wires[1]))
                qsim.apply_dense_oracle(
                    s2, qsim.embed_controlled(gate, int(wires[0]), int(wires[1]), n))
                assert np.allclose(s1.amplitudes, s2.amplitudes, atol=1e-12)

    def check_gradients():
        cfg = QcnnConfig(n_data=4)
        rng = np.random.default_rng(7)
        params = QcnnParams.random(cfg, rng, scale=0.8)
        z = rng.uniform(0, np.pi, 4)
        up = rng.normal(size=4)
        ps = parameter_shift(z, params, cfg, up)
        fd = finite_difference(z, params, cfg, up)
        err = np.abs(ps.d_params - fd.d_params) / np.maximum(np.abs(fd.d_params), 1e-6)
        assert err.max() < 1e-4

    def check_sampler():
        rng = np.random.default_rng(3)
        labels = np.repeat(np.arange(4), [500, 300, 120, 80])
        idx = data_mod.weighted_sample(labels, 1000, rng)
        counts = np.bincount(labels[idx], minlength=4)
        assert idx.size == 4000
        assert np.all(np.abs(counts - 1000) < 3 * 36.8)

    def check_codec(tmpdir="/tmp"):
        import tempfile
        rng = np.random.default_rng(5)
        recs = [data_mod.FeatureRecord(f"s{i}", i % 4, rng.normal(size=64))
                for i in range(5)]
        with tempfile.TemporaryDirectory() as d:
            p = Path(d) / "t.qcnf"
            data_mod.write_features(p, recs)
            back = data_mod.read_features(p)
            assert all(np.array_equal(a.vector, b.vector) for a, b in zip(recs, back))

    return [("kernel-vs-dense", check_kernels),
            ("shift-vs-finite-difference", check_gradients),
            ("sampler-statistics", check_sampler),
            ("codec-round-trip", check_codec)]


def cmd_selftest(args) -> int:
    failures = 0
    for name, check in _selftest_checks():
        t0 = time.perf_counter()
        try:
            check()
        except AssertionError as exc:
            print(f"FAIL  {name}  ({exc})")
            failures += 1
            continue
        print(f"PASS  {name}  ({time.perf_counter() - t0:.2f}s)")
    if failures:
        print(f"{failures} checks failed", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_SUBPARSERS = {}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qcnnkit",
        description="Hybrid quantum-classical kidney-CT classification toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _SUBPARSERS.clear()

    p = sub.add_parser("preprocess", help="denoise/CLAHE/shift images from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--compare", type=int, default=0,
                   help="emit N 4-panel comparison sheets")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_preprocess)
    _SUBPARSERS["preprocess"] = p

    p = sub.add_parser("train", help="train on extracted feature files")
    p.add_argument("--train-features", required=True)
    p.add_argument("--val-features", required=True)
    p.add_argument("--test-features", required=True)
    p.add_argument("--out", default="run")
    p.add_argument("--qubits", type=int, default=12, choices=(8, 12))
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--nmax", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--feature-dim", type=int, default=2048)
    p.add_argument("--freeze-head", action="store_true")
    p.add_argument("--resume", default=None)
    p.add_argument("--threads", type=int, default=0, help="worker cap (0 = library default)")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_train)
    _SUBPARSERS["train"] = p

    p = sub.add_parser("eval", help="evaluate a checkpoint on a feature file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", default="eval")
    p.add_argument("--qubits", type=int, default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_eval)
    _SUBPARSERS["eval"] = p

    p = sub.add_parser("selftest", help="run the embedded oracle suite")
    p.set_defaults(func=cmd_selftest)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    if getattr(args, "threads", 0):
        # cap BLAS worker threads for reproducible parallel behavior
        import os
        os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))
    try:
        if getattr(args, "config", None):
            subparser = _SUBPARSERS[args.command]
            defaults = {a.dest: a.default for a in subparser._actions}
            _merge_config(args, defaults)
        return args.func(args)
    except (ConfigurationError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # runtime failure contract
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
