"""Command-line entry point: datagen, train, score, eval, rank, gradcheck, serve.

Exit codes: 0 success, 1 runtime error (message on stderr), 2 usage error.
All subcommands are deterministic for a fixed --seed.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import evaluation, synthdata
from .audio import read_wav
from .errors import AeckitError
from .estimator import EchoMosRegressor
from .features import ScoringRequest, score
from .nn import (
    ModelConfig,
    gradient_check,
    load_checkpoint,
    save_checkpoint,
    tiny_config,
)
from .types import Scenario


def _load_config_file(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError("config file must hold a JSON object")
    return doc


def _model_kwargs(args) -> dict:
    overrides = {}
    if args.config:
        doc = _load_config_file(args.config)
        overrides = dict(doc.get("model", {}))
        stft = doc.get("stft", {})
        allowed = {"epsilon": "stft_epsilon", "dft_size": "stft_dft_size",
                   "hop": "stft_hop"}
        for key, value in stft.items():
            if key not in allowed:
                raise ValueError(f"unsupported stft config key {key!r}")
            overrides[allowed[key]] = value
    overrides.pop("seed", None)  # --seed wins
    return overrides


def _parse_scenario(value):
    return Scenario(value) if value else None


def _load_request(args) -> ScoringRequest:
    return ScoringRequest(
        near_mic=read_wav(args.near),
        far_end=read_wav(args.far),
        enhanced=read_wav(args.enhanced),
        scenario=_parse_scenario(args.scenario),
    )


def _parse_roster(raw: str) -> list:
    if raw.isdigit():
        return synthdata.graded_roster(int(raw))
    with open(raw, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, list):
        raise ValueError("--aecs roster file must hold a JSON array")
    return [synthdata.SyntheticAec(id=str(d["id"]),
                                   echo_suppression_db=float(d["echo_suppression_db"]),
                                   nearend_distortion=float(d["nearend_distortion"]))
            for d in doc]


def _cmd_datagen(args) -> int:
    mix = tuple(float(p) for p in args.mix.split(","))
    duration = tuple(float(p) for p in args.duration.split(","))
    roster = _parse_roster(args.aecs)
    manifest = synthdata.build_dataset(
        n_clips=args.n, scenario_mix=mix, aec_roster=roster,
        out_dir=args.out, seed=args.seed, duration_range=duration)
    if not args.quiet:
        counts = manifest.counts_by_scenario()
        print(f"wrote {len(manifest.entries)} clips to {args.out} "
              f"(nst={counts['nst']} fst={counts['fst']} dt={counts['dt']})")
    return 0


def _requests_and_targets(manifest, use_marker: bool):
    requests, targets = [], []
    for entry in manifest.entries:
        scenario = entry.scenario if use_marker else None
        requests.append(ScoringRequest(
            near_mic=read_wav(manifest.resolve(entry.near)),
            far_end=read_wav(manifest.resolve(entry.far)),
            enhanced=read_wav(manifest.resolve(entry.enhanced)),
            scenario=scenario))
        targets.append((entry.echo_mos, entry.other_mos))
    return requests, targets


def _cmd_train(args) -> int:
    manifest = synthdata.load_manifest(args.manifest)
    kwargs = _model_kwargs(args)
    est = EchoMosRegressor(epochs=args.epochs, lr=args.lr, batch_size=args.batch,
                           augment=args.augment, seed=args.seed,
                           verbose=not args.quiet, **kwargs)
    requests, targets = _requests_and_targets(manifest, est.use_scenario_marker)
    est.fit(requests, targets)
    save_checkpoint(est.checkpoint_, args.out_ckpt)
    if not args.quiet:
        print(f"saved checkpoint to {args.out_ckpt}")
    return 0


def _cmd_score(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    pair = score(ckpt, _load_request(args))
    print(f"echo_mos={pair.echo_mos!r} other_mos={pair.other_mos!r}")
    return 0


def _predictions(ckpt, manifest) -> dict:
    preds = {}
    for entry in manifest.entries:
        scenario = entry.scenario if ckpt.config.use_scenario_marker else None
        req = ScoringRequest(
            near_mic=read_wav(manifest.resolve(entry.near)),
            far_end=read_wav(manifest.resolve(entry.far)),
            enhanced=read_wav(manifest.resolve(entry.enhanced)),
            scenario=scenario)
        preds[entry.enhanced] = score(ckpt, req)
    return preds


def _cmd_eval(args, label: str = "eval") -> int:
    ckpt = load_checkpoint(args.ckpt)
    manifest = synthdata.load_manifest(args.manifest)
    report = evaluation.rank_models(manifest, _predictions(ckpt, manifest))
    evaluation.save_report(report, json_path=args.report, csv_path=args.csv)
    if not args.quiet:
        if label == "rank":
            def fmt(value):
                return "undefined" if value is None else f"{value:.3f}"
            for pos, mid in enumerate(report.ranking_by_echo(), start=1):
                means = report.model_means[mid]
                print(f"{pos}. {mid} echo={fmt(means['pred_echo'])} "
                      f"other={fmt(means['pred_other'])}")
        print(f"wrote report to {args.report}")
    return 0


def _cmd_rank(args) -> int:
    return _cmd_eval(args, label="rank")


def _cmd_gradcheck(args) -> int:
    kwargs = _model_kwargs(args)
    kwargs.pop("stft_epsilon", None)
    if kwargs:
        config = ModelConfig(**{**tiny_config().to_dict(), **kwargs, "seed": args.seed})
    else:
        config = tiny_config(seed=args.seed)
    report = gradient_check(config, tolerance=args.tolerance, seed=args.seed)
    status = "PASS" if report.passed else "FAIL"
    print(f"max_rel_err={report.max_rel_error:.3e} tolerance={report.tolerance:.1e} "
          f"n={report.n_sampled} worst={report.worst_param} {status}")
    return 0 if report.passed else 1


def _cmd_serve(args) -> int:
    from .service import make_server

    ckpt = load_checkpoint(args.ckpt) if args.ckpt else None
    server = make_server(ckpt, host=args.host, port=args.port, quiet=args.quiet)
    if not args.quiet:
        state = "with checkpoint" if ckpt is not None else "without checkpoint"
        print(f"scoring service on {args.host}:{server.server_address[1]} {state}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def _add_global_flags(parser, suppress: bool) -> None:
    # Global flags are registered on the main parser and repeated on every
    # subparser with SUPPRESS defaults, so they may appear on either side of
    # the subcommand without the subparser default clobbering the main value.
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    parser.add_argument("--seed", type=int, help="global RNG seed",
                        **({"default": argparse.SUPPRESS} if suppress else {"default": 0}))
    parser.add_argument("--config", help="JSON file overriding model/STFT defaults",
                        **({"default": argparse.SUPPRESS} if suppress else {"default": None}))
    parser.add_argument("--quiet", action="store_true",
                        help="suppress progress output", **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aeckit",
        description="Reference-free echo/other MOS toolkit: synthesize data, "
                    "train, score, evaluate and rank echo cancellers.")
    _add_global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("datagen", help="generate a synthetic labeled dataset")
    _add_global_flags(p, suppress=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mix", default="0.456,0.267,0.277",
                   help="nst,fst,dt fractions (must sum to 1)")
    p.add_argument("--aecs", default="5",
                   help="roster size, or path to a JSON roster file")
    p.add_argument("--duration", default="3,14.5", help="clip duration range in seconds")
    p.set_defaults(func=_cmd_datagen)

    p = sub.add_parser("train", help="train a model on a dataset manifest")
    _add_global_flags(p, suppress=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-ckpt", required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=10)
    p.add_argument("--augment", action="store_true",
                   help="apply micro augmentations while training")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("score", help="score one (near, far, enhanced) triple")
    _add_global_flags(p, suppress=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--near", required=True)
    p.add_argument("--far", required=True)
    p.add_argument("--enhanced", required=True)
    p.add_argument("--scenario", choices=[s.value for s in Scenario], default=None)
    p.set_defaults(func=_cmd_score)

    for name, help_text in (("eval", "evaluate a checkpoint against a manifest"),
                            ("rank", "stack-rank the cancellers in a manifest")):
        p = sub.add_parser(name, help=help_text)
        _add_global_flags(p, suppress=True)
        p.add_argument("--ckpt", required=True)
        p.add_argument("--manifest", required=True)
        p.add_argument("--report", required=True, help="output JSON report path")
        p.add_argument("--csv", default=None, help="optional CSV report path")
        p.set_defaults(func=_cmd_eval if name == "eval" else _cmd_rank)

    p = sub.add_parser("gradcheck", help="verify gradients against finite differences")
    _add_global_flags(p, suppress=True)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("serve", help="run the HTTP scoring service")
    _add_global_flags(p, suppress=True)
    p.add_argument("--ckpt", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (AeckitError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
