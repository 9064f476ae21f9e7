"""Subcommand front-end for the analysis pipeline.

The CLI is a thin client: every command ships its input files to the
service (in-process by default, remote with --server) and writes the
returned artifacts and reports to disk atomically.  Exit codes: 0 success,
1 runtime failure (diagnostic on stderr), 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import __version__, tensor_io
from .client import GpzClient, ServiceError, decode_artifact, encode_artifact

__all__ = ["main", "build_parser"]

_PRECISIONS = ("fp32", "fp16", "int8")
_PIPELINE_REPORTS = ("train", "stats", "gpz", "bounds", "dynamics",
                     "inversion", "cost", "stability")


# --- argparse value types (violations exit 2, naming the flag) -------------

def _pos_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _ge2_int(text: str) -> int:
    value = int(text)
    if value < 2:
        raise argparse.ArgumentTypeError(f"must be >= 2, got {value}")
    return value


def _nonneg_float(text: str) -> float:
    value = float(text)
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def _pos_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return value


def _finite_float(text: str) -> float:
    value = float(text)
    if value != value or value in (float("inf"), float("-inf")):
        raise argparse.ArgumentTypeError("must be finite")
    return value


def _tau_value(text: str) -> float:
    value = float(text)
    if not 0.0 < value <= 1.0:
        raise argparse.ArgumentTypeError(f"must be in (0, 1], got {text}")
    return value


def _open_fraction(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"must be strictly between 0 and 1, got {text}")
    return value


def _width_list(text: str) -> list[int]:
    try:
        widths = [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not widths or any(w < 1 for w in widths):
        raise argparse.ArgumentTypeError(f"widths must be positive integers, got {text!r}")
    return widths


def _layer_selector(text: str):
    if text == "all":
        return "all"
    try:
        layers = [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'all' or comma-separated indices, got {text!r}") from None
    if not layers or any(l < 0 for l in layers):
        raise argparse.ArgumentTypeError(f"layer indices must be >= 0, got {text!r}")
    return layers


def _precision_list(text: str) -> list[str]:
    values = [part.strip() for part in text.split(",") if part.strip()]
    bad = [v for v in values if v not in _PRECISIONS]
    if not values or bad:
        raise argparse.ArgumentTypeError(
            f"precisions must be a comma list from {'/'.join(_PRECISIONS)}, got {text!r}")
    return values


# --- helpers ----------------------------------------------------------------

def _read_b64(path: str) -> str:
    with open(path, "rb") as handle:
        return encode_artifact(handle.read())


def _load_measurement(path: str | None) -> dict | None:
    if path is None:
        return None
    with open(path, "r", encoding="utf-8") as handle:
        try:
            obj = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ValueError(f"measurement file {path}: not valid JSON ({exc})") from None
    if not isinstance(obj, dict):
        raise ValueError(f"measurement file {path}: expected a JSON object")
    return obj


# --- subcommand handlers -----------------------------------------------------

def _cmd_gen_data(args, client: GpzClient) -> int:
    resp = client.gen_data(args.k, args.per_class, args.dim, args.spread, args.seed)
    tensor_io.atomic_write_bytes(args.out, decode_artifact(resp["dataset_b64"]))
    print(f"wrote {args.out} ({resp['b']} samples, d0={resp['d0']}, K={resp['k']})")
    return 0


def _cmd_train(args, client: GpzClient) -> int:
    resp = client.train(_read_b64(args.data), args.arch, args.scheme, args.epochs,
                        args.lr, args.batch, args.seed, args.split)
    tensor_io.atomic_write_bytes(args.out, decode_artifact(resp["model_b64"]))
    line = f"wrote {args.out}"
    if resp["final_accuracy"] is not None:
        line += f" (final accuracy {resp['final_accuracy']:.4f})"
    print(line)
    if args.report:
        tensor_io.write_report(args.report, {
            "scheme": args.scheme,
            "epochs": args.epochs,
            "lr": args.lr,
            "batch": args.batch,
            "seed": args.seed,
            "final_loss": resp["final_loss"],
            "final_accuracy": resp["final_accuracy"],
            "loss_curve": resp["loss_curve"],
        })
        print(f"wrote {args.report}")
    return 0


def _cmd_dump(args, client: GpzClient) -> int:
    resp = client.dump(_read_b64(args.model), _read_b64(args.data), args.layers)
    tensor_io.atomic_write_bytes(args.out, decode_artifact(resp["acts_b64"]))
    print(f"wrote {args.out} (layers: {', '.join(resp['layer_names'])})")
    return 0


def _cmd_stats(args, client: GpzClient) -> int:
    resp = client.stats(_read_b64(args.acts))
    tensor_io.write_report(args.out, resp["report"])
    print(f"wrote {args.out}")
    return 0


def _cmd_locate(args, client: GpzClient) -> int:
    resp = client.locate(_read_b64(args.acts), args.tau)
    tensor_io.write_report(args.out, resp["report"])
    report = resp["report"]
    print(f"wrote {args.out} (l_TP={report['l_TP_name']}, l_TS={report['l_TS_name']}, "
          f"localized={report['localized']})")
    return 0


def _cmd_bounds(args, client: GpzClient) -> int:
    resp = client.bounds(_read_b64(args.acts), args.delta, args.hx, args.bits)
    tensor_io.write_report(args.out, resp["report"])
    print(f"wrote {args.out}")
    return 0


def _cmd_dynamics(args, client: GpzClient) -> int:
    resp = client.dynamics(_read_b64(args.model), _read_b64(args.data), args.layer,
                           args.scheme, args.gamma)
    tensor_io.write_report(args.out, resp["report"])
    print(f"wrote {args.out} (max |pred - oracle| = {resp['report']['max_abs_err']:.3e})")
    return 0


def _cmd_invert(args, client: GpzClient) -> int:
    resp = client.invert(_read_b64(args.model), _read_b64(args.data), args.layers,
                         args.hidden, args.epochs, args.lr, args.batch,
                         args.aux_fraction, args.seed)
    tensor_io.write_report(args.out, resp["report"])
    print(f"wrote {args.out}")
    return 0


def _cmd_cost(args, client: GpzClient) -> int:
    resp = client.cost(_read_b64(args.model), args.split, args.precisions,
                       _load_measurement(args.measurement))
    tensor_io.write_report(args.out, resp["report"])
    print(f"wrote {args.out}")
    return 0


def _cmd_pipeline(args, client: GpzClient) -> int:
    import os

    resp = client.pipeline(
        seed=args.seed, k=args.k, per_class=args.per_class, dim=args.dim,
        spread=args.spread, arch=args.arch, scheme=args.scheme, epochs=args.epochs,
        lr=args.lr, batch=args.batch, tau=args.tau, delta=args.delta,
        gamma=args.gamma, dyn_layer=args.dyn_layer, split=args.split,
        decoder_hidden=args.decoder_hidden, decoder_epochs=args.decoder_epochs,
        decoder_lr=args.decoder_lr, decoder_batch=args.decoder_batch,
        aux_fraction=args.aux_fraction, precisions=args.precisions,
        stability_evals=args.stability_evals,
        measurement=_load_measurement(args.measurement),
    )
    os.makedirs(args.outdir, exist_ok=True)
    artifacts = {
        "dataset.gpzd": decode_artifact(resp["dataset_b64"]),
        "model.gpzm": decode_artifact(resp["model_b64"]),
        "acts.gpza": decode_artifact(resp["acts_b64"]),
    }
    for name, data in artifacts.items():
        path = os.path.join(args.outdir, name)
        tensor_io.atomic_write_bytes(path, data)
        print(f"wrote {path}")
    for name in _PIPELINE_REPORTS:
        path = os.path.join(args.outdir, f"{name}.json")
        tensor_io.write_report(path, resp["reports"][name])
        print(f"wrote {path}")
    gpz = resp["reports"]["gpz"]
    print(f"located transition: l_TP={gpz['l_TP_name']} (localized={gpz['localized']})")
    return 0


def _cmd_serve(args, client: GpzClient) -> int:  # noqa: ARG001 - uniform signature
    import uvicorn

    uvicorn.run("gpzkit.service.app:app", host=args.host, port=args.port)
    return 0


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpz",
        description="Split-network representation analysis pipeline.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--server", default=None, metavar="URL",
                       help="remote service URL (default: run in-process)")

    p = sub.add_parser("gen-data", help="sample a labelled Gaussian-mixture dataset",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    common(p)
    p.add_argument("--k", type=_pos_int, default=4, help="number of classes")
    p.add_argument("--per-class", type=_ge2_int, default=250, help="samples per class")
    p.add_argument("--dim", type=_pos_int, default=16, help="input dimension")
    p.add_argument("--spread", type=_nonneg_float, default=0.05, help="noise scale")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output dataset path (.gpzd)")
    p.set_defaults(handler=_cmd_gen_data)

    p = sub.add_parser("train", help="train an MLP classifier on a dataset",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    common(p)
    p.add_argument("--data", required=True, help="input dataset (.gpzd)")
    p.add_argument("--arch", type=_width_list, default=[32, 32, 16, 8],
                   metavar="W1,W2,...", help="hidden layer widths")
    p.add_argument("--scheme", default="onehot",
                   help="target scheme: onehot | ls:ALPHA | prior:ALPHA")
    p.add_argument("--epochs", type=_nonneg_int, default=200)
    p.add_argument("--lr", type=_nonneg_float, default=0.01)
    p.add_argument("--batch", type=_pos_int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", type=_nonneg_int, default=None,
                   help="stored split index (default: last hidden layer)")
    p.add_argument("--out", required=True, help="output model path (.gpzm)")
    p.add_argument("--report", default=None, help="optional training report path (.json)")
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("dump", help="dump per-layer activations",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    common(p)
    p.add_argument("--model", required=True, help="input model (.gpzm)")
    p.add_argument("--data", required=True, help="input dataset (.gpzd)")
    p.add_argument("--layers", type=_layer_selector, default="all",
                   help="'all' (post-layer states) or comma list of state indices")
    p.add_argument("--out", required=True, help="output activation dump (.gpza)")
    p.set_defaults(handler=_cmd_dump)

    p = sub.add_parser("stats", help="class-conditional radius statistics per layer",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    common(p)
    p.add_argument("--acts", required=True, help="input activation dump (.gpza)")
    p.add_argument("--out", required=True, help="output report (.json)")
    p.set_defaults(handler=_cmd_stats)

    p = sub.add_parser("locate", help="locate the radius transition zone",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    common(p)
    p.add_argument("--acts", required=True, help="input activation dump (.gpza)")
    p.add_argument("--tau", type=_tau_value, default=0.20,
                   help="localization threshold fraction")
    p.add_argument("--out", required=True, help="output report (.json)")
    p.set_defaults(handler=_cmd_locate)

    p = sub.add_parser("bounds", help="entropy surrogates and leakage bounds per layer",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    common(p)
    p.add_argument("--acts", required=True, help="input activation dump (.gpza)")
    p.add_argument("--delta", type=_pos_float, default=2.0 ** -10,
                   help="quantization cell width")
    p.add_argument("--hx", type=_finite_float, default=None,
                   help="input-entropy estimate in nats (enables lb_feat/lb_dec)")
    p.add_argument("--bits", action="store_true", help="add a bits view per layer")
    p.add_argument("--out", required=True, help="output report (.json)")
    p.set_defaults(handler=_cmd_bounds)

    p = sub.add_parser("dynamics", help="first-order radius dynamics vs the step oracle",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    common(p)
    p.add_argument("--model", required=True, help="input model (.gpzm)")
    p.add_argument("--data", required=True, help="input dataset (.gpzd)")
    p.add_argument("--layer", type=_nonneg_int, required=True,
                   help="state index to analyze (must be before the logits)")
    p.add_argument("--scheme", default="onehot",
                   help="target scheme: onehot | ls:ALPHA | prior:ALPHA")
    p.add_argument("--gamma", type=_pos_float, default=0.01, help="virtual step size")
    p.add_argument("--out", required=True, help="output report (.json)")
    p.set_defaults(handler=_cmd_dynamics)

    p = sub.add_parser("invert", help="train reconstruction decoders per layer",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    common(p)
    p.add_argument("--model", required=True, help="input model (.gpzm)")
    p.add_argument("--data", required=True, help="input dataset (.gpzd)")
    p.add_argument("--layers", type=_layer_selector, default="all")
    p.add_argument("--hidden", type=_width_list, default=[64],
                   metavar="W1,W2,...", help="decoder hidden widths")
    p.add_argument("--epochs", type=_nonneg_int, default=600)
    p.add_argument("--lr", type=_nonneg_float, default=0.2)
    p.add_argument("--batch", type=_pos_int, default=16)
    p.add_argument("--aux-fraction", type=_open_fraction, default=0.7,
                   help="fraction of samples for decoder training")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output report (.json)")
    p.set_defaults(handler=_cmd_invert)

    p = sub.add_parser("cost", help="FLOPs/payload/energy cost of a split",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    common(p)
    p.add_argument("--model", required=True, help="input model (.gpzm)")
    p.add_argument("--split", type=_nonneg_int, default=None,
                   help="split index (default: the model's stored split)")
    p.add_argument("--precisions", type=_precision_list, default=list(_PRECISIONS),
                   metavar="P1,P2,...", help="payload precisions")
    p.add_argument("--measurement", default=None,
                   help="energy measurement JSON {e_total_j, n_iters, t_window_s}")
    p.add_argument("--out", required=True, help="output report (.json)")
    p.set_defaults(handler=_cmd_cost)

    p = sub.add_parser("pipeline", help="run every stage from one master seed",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    common(p)
    p.add_argument("--seed", type=int, default=0, help="master seed for all stages")
    p.add_argument("--k", type=_pos_int, default=4)
    p.add_argument("--per-class", type=_ge2_int, default=250)
    p.add_argument("--dim", type=_pos_int, default=16)
    p.add_argument("--spread", type=_nonneg_float, default=0.05)
    p.add_argument("--arch", type=_width_list, default=[32, 32, 16, 8], metavar="W1,W2,...")
    p.add_argument("--scheme", default="onehot")
    p.add_argument("--epochs", type=_nonneg_int, default=200)
    p.add_argument("--lr", type=_nonneg_float, default=0.01)
    p.add_argument("--batch", type=_pos_int, default=32)
    p.add_argument("--tau", type=_tau_value, default=0.20)
    p.add_argument("--delta", type=_pos_float, default=2.0 ** -10)
    p.add_argument("--gamma", type=_pos_float, default=0.01)
    p.add_argument("--dyn-layer", type=_nonneg_int, default=None,
                   help="dynamics state index (default: located peak)")
    p.add_argument("--split", type=_nonneg_int, default=None,
                   help="cost split index (default: located peak)")
    p.add_argument("--decoder-hidden", type=_width_list, default=[64], metavar="W1,W2,...")
    p.add_argument("--decoder-epochs", type=_nonneg_int, default=600)
    p.add_argument("--decoder-lr", type=_nonneg_float, default=0.2)
    p.add_argument("--decoder-batch", type=_pos_int, default=16)
    p.add_argument("--aux-fraction", type=_open_fraction, default=0.7)
    p.add_argument("--precisions", type=_precision_list, default=list(_PRECISIONS),
                   metavar="P1,P2,...")
    p.add_argument("--stability-evals", type=_ge2_int, default=3)
    p.add_argument("--measurement", default=None,
                   help="energy measurement JSON {e_total_j, n_iters, t_window_s}")
    p.add_argument("--outdir", required=True, help="directory for artifacts and reports")
    p.set_defaults(handler=_cmd_pipeline)

    p = sub.add_parser("serve", help="run the HTTP service",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=_pos_int, default=8000)
    p.set_defaults(handler=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    client = GpzClient(server=args.server)
    try:
        return args.handler(args, client)
    except ServiceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except tensor_io.ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc.filename or exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
