"""Command-line pipeline.

Subcommands chain the library stages through files on disk::

    poseinduce synth      --seed 7 --out data/
    poseinduce hypotheses --records data/records.jsonl --out data/hyp.json
    poseinduce neighbors  --records data/records.jsonl --out data/nbr.json
    poseinduce induce     --hypotheses data/hyp.json --neighbors data/nbr.json \
                          --out data/preds.csv
    poseinduce eval       --preds data/preds.csv --records data/records.jsonl \
                          --out data/report.json
    poseinduce factorize  --records data/records.jsonl --out data/sfm/

Exit codes: 0 success, 1 usage error (bad flags/config), 2 data error
(unreadable or malformed input files, degenerate inputs).

A ``--config FILE`` of ``key = value`` lines may supply any flag of its
subcommand (keys are the flag names, ``-`` and ``_`` interchangeable);
flags given on the command line take precedence.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from ..factorize import (
    DEFAULT_MAX_ITERS,
    DEFAULT_TOL,
    KeypointTable,
    canonical_align,
    rigid_factorize,
)
from ..hypotheses import DEFAULT_DELTA_DIV, DEFAULT_K, PoseHypothesis, extract_hypotheses
from ..inference import InferenceConfig, run_induction
from ..metrics import DEFAULT_THETA, error_report
from ..rotations import BinningScheme, EulerPose, euler_to_rotation, rotation_to_euler
from ..similarity import NeighborGraph, build_neighbor_graph, normalize_features
from .records import load_distribution, load_features, read_records
from .synth import SynthConfig, synth_generate
from .tensorfile import write_tensor

CSV_FIELDS = ("id", "az", "el", "cy", "confidence", "z_index")


class UsageError(Exception):
    """Bad flags or config values (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    """argparse reserves exit code 2 for usage errors; this pipeline
    uses 2 for data errors, so usage failures are remapped to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _fmt(x: float) -> str:
    """Full-precision text form used in every CSV the pipeline writes."""
    return format(float(x), ".17g")


def _comma_floats(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.split(","))


def _comma_ints(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.split(","))


def _auto_int(text: str):
    if text == "auto":
        return None
    return int(text)


def _pairs(text: str) -> tuple[tuple[int, int], ...]:
    out = []
    for tok in text.split(","):
        left, _, right = tok.partition(":")
        out.append((int(left), int(right)))
    return tuple(out)


def build_parser() -> tuple[_Parser, dict[str, _Parser]]:
    parser = _Parser(prog="poseinduce", description=__doc__, allow_abbrev=False)
    sub = parser.add_subparsers(dest="command", metavar="command")
    subparsers: dict[str, _Parser] = {}

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text, allow_abbrev=False)
        p.add_argument("--config", help="key = value file supplying flag defaults")
        p.add_argument("--out", help="output file or directory")
        subparsers[name] = p
        return p

    p = command("synth", "generate a synthetic dataset")
    p.add_argument("--n", type=int, default=500, help="instance count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nbins", type=int, default=21, help="angle bins per distribution row")
    p.add_argument("--kappa", type=float, default=SynthConfig.kappa, help="distribution sharpness (inf allowed)")
    p.add_argument("--sigma-d", type=float, default=SynthConfig.sigma_d, help="distribution noise level")
    p.add_argument("--sigma-f", type=float, default=SynthConfig.sigma_f, help="feature noise level")
    p.add_argument("--jitter", type=float, default=SynthConfig.jitter, help="pose spread around each mode")
    p.add_argument("--mode-azimuths", type=_comma_floats, default=None, help="comma list of mode azimuths (radians)")
    p.add_argument("--mode-weights", type=_comma_floats, default=None, help="comma list of mixture weights")
    p.add_argument("--grid", type=_comma_ints, default=SynthConfig.grid, help="feature dims: channels,height,width")
    p.add_argument("--category", default=SynthConfig.category)

    p = command("hypotheses", "extract diverse pose hypotheses per instance")
    p.add_argument("--records", help="records.jsonl of the dataset")
    p.add_argument("--nbins", type=int, default=21, help="expected bins per distribution row")
    p.add_argument("--k", type=int, default=DEFAULT_K, help="hypotheses per instance")
    p.add_argument("--delta-div", type=float, default=DEFAULT_DELTA_DIV, help="min geodesic spacing between hypotheses")

    p = command("neighbors", "build the feature-similarity neighbor graph")
    p.add_argument("--records", help="records.jsonl of the dataset")
    p.add_argument("--m", type=_auto_int, default=None, help="neighbors per instance, or 'auto'")

    p = command("induce", "run joint pose induction and write predictions")
    p.add_argument("--hypotheses", help="hypotheses JSON from the hypotheses stage")
    p.add_argument("--neighbors", help="neighbor JSON from the neighbors stage")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="pairwise term weight")
    p.add_argument("--delta", type=float, default=math.pi / 6, help="agreement threshold (radians)")
    p.add_argument("--max-sweeps", type=int, default=50)
    p.add_argument("--no-pmi", action="store_true", help="drop the popularity-normalizing term")
    p.add_argument("--unary-confidence", action="store_true", help="report raw per-instance scores as confidence")

    p = command("eval", "score predictions against ground truth")
    p.add_argument("--preds", help="prediction CSV from the induce stage")
    p.add_argument("--records", help="records.jsonl with gt_pose fields")
    p.add_argument("--theta", type=float, default=DEFAULT_THETA, help="accuracy threshold (radians)")
    p.add_argument("--top-frac", type=float, default=1.0, help="evaluate only the most confident fraction")

    p = command("factorize", "recover a rigid 3D model from keypoint annotations")
    p.add_argument("--records", help="records.jsonl with keypoints fields")
    p.add_argument("--max-iters", type=int, default=DEFAULT_MAX_ITERS)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--pairs", type=_pairs, default=(), help="left:right symmetric keypoint pairs, comma separated")

    return parser, subparsers


def _apply_config(args: argparse.Namespace, subparser: _Parser, argv: list[str]) -> None:
    """Fill flag values from the --config file without overriding flags
    that were given explicitly on the command line."""
    entries = []
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                key, sep, value = line.partition("=")
                if not sep:
                    raise UsageError(f"{args.config}:{lineno}: expected 'key = value'")
                entries.append((key.strip().replace("_", "-"), value.strip()))
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from exc

    actions = {
        opt[2:]: action
        for action in subparser._actions
        for opt in action.option_strings
        if opt.startswith("--")
    }
    for key, value in entries:
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            raise UsageError(f"unknown config key {key!r}")
        explicit = any(
            tok == opt or tok.startswith(opt + "=")
            for opt in action.option_strings
            for tok in argv
        )
        if explicit:
            continue
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            lowered = value.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"config key {key!r}: expected a boolean, got {value!r}")
            parsed = lowered in ("true", "1", "yes")
            if isinstance(action, argparse._StoreFalseAction):
                parsed = not parsed
            setattr(args, action.dest, parsed)
            continue
        try:
            converted = action.type(value) if action.type is not None else value
        except (TypeError, ValueError) as exc:
            raise UsageError(f"config key {key!r}: bad value {value!r} ({exc})") from exc
        setattr(args, action.dest, converted)


def _require(args: argparse.Namespace, *names: str) -> None:
    for name in names:
        if getattr(args, name) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required (flag or config file)")


def _cmd_synth(args) -> int:
    kwargs = dict(
        n=args.n,
        jitter=args.jitter,
        kappa=args.kappa,
        n_bins=args.nbins,
        grid=tuple(args.grid),
        sigma_f=args.sigma_f,
        sigma_d=args.sigma_d,
        seed=args.seed,
        category=args.category,
    )
    if args.mode_azimuths is not None:
        kwargs["mode_azimuths"] = args.mode_azimuths
    if args.mode_weights is not None:
        kwargs["mode_weights"] = args.mode_weights
    try:
        cfg = SynthConfig(**kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    path = synth_generate(cfg, args.out)
    print(f"wrote {cfg.n} instances to {path}")
    return 0


def _cmd_hypotheses(args) -> int:
    records = read_records(args.records)
    base = Path(args.records).parent
    instances = []
    for rec in records:
        dist = load_distribution(rec, base)
        if dist.n_bins != args.nbins:
            raise ValueError(
                f"record {rec.id!r}: distribution has {dist.n_bins} bins, expected {args.nbins}"
            )
        hyps = extract_hypotheses(dist, k=args.k, delta_div=args.delta_div)
        instances.append(
            {
                "id": rec.id,
                "hypotheses": [{"bins": list(h.bins), "beta": h.beta} for h in hyps],
            }
        )
    payload = {
        "n_bins": args.nbins,
        "k": args.k,
        "delta_div": args.delta_div,
        "instances": instances,
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")
    print(f"wrote hypotheses for {len(instances)} instances to {args.out}")
    return 0


def _cmd_neighbors(args) -> int:
    records = read_records(args.records)
    base = Path(args.records).parent
    feats = [
        normalize_features(np.moveaxis(load_features(rec, base), 0, -1)) for rec in records
    ]
    graph = build_neighbor_graph(feats, m=args.m)
    payload = {
        "ids": [rec.id for rec in records],
        "m": graph.m,
        "neighbor_ids": graph.neighbor_ids.tolist(),
        "similarities": graph.similarities.tolist(),
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")
    print(f"wrote {graph.m}-neighbor graph over {graph.n_instances} instances to {args.out}")
    return 0


def _load_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _cmd_induce(args) -> int:
    hyp_payload = _load_json(args.hypotheses)
    nbr_payload = _load_json(args.neighbors)
    ids = [entry["id"] for entry in hyp_payload["instances"]]
    if ids != nbr_payload["ids"]:
        raise ValueError("hypothesis and neighbor files describe different instance lists")

    scheme = BinningScheme(int(hyp_payload["n_bins"]))
    hypothesis_sets = []
    for entry in hyp_payload["instances"]:
        hyps = []
        for h in entry["hypotheses"]:
            b_az, b_el, b_cy = (int(b) for b in h["bins"])
            pose = scheme.pose_of_bins(b_az, b_el, b_cy)
            hyps.append(
                PoseHypothesis(
                    rotation=euler_to_rotation(pose),
                    beta=float(h["beta"]),
                    bins=(b_az, b_el, b_cy),
                )
            )
        hypothesis_sets.append(hyps)
    graph = NeighborGraph(
        neighbor_ids=np.asarray(nbr_payload["neighbor_ids"], dtype=int),
        similarities=np.asarray(nbr_payload["similarities"], dtype=float),
    )
    try:
        cfg = InferenceConfig(
            lam=args.lam,
            delta=args.delta,
            max_sweeps=args.max_sweeps,
            pmi_normalize=not args.no_pmi,
            unary_confidence=args.unary_confidence,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    result = run_induction(hypothesis_sets, graph, cfg, instance_ids=ids)

    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for pose in result.poses:
            writer.writerow(
                [
                    pose.instance_id,
                    _fmt(pose.euler.az),
                    _fmt(pose.euler.el),
                    _fmt(pose.euler.cy),
                    _fmt(pose.confidence),
                    pose.z_index,
                ]
            )
    print(
        f"induced {len(result.poses)} poses in {result.sweeps} sweeps "
        f"(converged={result.converged}); wrote {args.out}"
    )
    return 0


def _read_preds(path: str) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"id", "az", "el", "cy"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"prediction CSV lacks columns: {sorted(missing)}")
        for row in reader:
            rows.append(row)
    if not rows:
        raise ValueError("prediction CSV has no rows")
    return rows


def _cmd_eval(args) -> int:
    rows = _read_preds(args.preds)
    by_id = {rec.id: rec for rec in read_records(args.records)}

    if not 0 < args.top_frac <= 1:
        raise UsageError("--top-frac must lie in (0, 1]")
    if args.top_frac < 1.0:
        if any(row.get("confidence") in (None, "") for row in rows):
            raise ValueError("--top-frac needs a confidence column in the prediction CSV")
        order = sorted(
            range(len(rows)), key=lambda i: (-float(rows[i]["confidence"]), i)
        )
        rows = [rows[i] for i in order[: math.ceil(args.top_frac * len(rows))]]

    preds, gts, pred_azimuths, gt_facings = [], [], [], []
    for row in rows:
        rec = by_id.get(row["id"])
        if rec is None:
            raise ValueError(f"prediction id {row['id']!r} not present in records")
        if rec.gt_pose is None:
            raise ValueError(f"record {rec.id!r} has no gt_pose to evaluate against")
        pose = EulerPose(float(row["az"]), float(row["el"]), float(row["cy"]))
        preds.append(euler_to_rotation(pose))
        gts.append(euler_to_rotation(rec.gt_pose))
        pred_azimuths.append(pose.az)
        gt_facings.append(rec.facing)

    have_facings = all(f is not None for f in gt_facings)
    report = error_report(
        preds,
        gts,
        theta=args.theta,
        pred_azimuths=pred_azimuths if have_facings else None,
        gt_facings=gt_facings if have_facings else None,
    )
    print(report.as_text())
    if args.out is not None:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report.as_dict(), fh, indent=2)
            fh.write("\n")
    return 0


def _cmd_factorize(args) -> int:
    records = read_records(args.records)
    with_kp = [rec for rec in records if rec.keypoints is not None]
    if len(with_kp) < 2:
        raise ValueError("need at least 2 records with keypoints to factorize")
    counts = {len(rec.keypoints) for rec in with_kp}
    if len(counts) != 1:
        raise ValueError("records disagree on keypoint count")
    uv = np.array([[(u, v) for u, v, _ in rec.keypoints] for rec in with_kp])
    visible = np.array([[vis for _, _, vis in rec.keypoints] for rec in with_kp])
    table = KeypointTable(
        uv=uv, visible=visible, ids=tuple(rec.id for rec in with_kp), pairs=args.pairs
    )
    model = rigid_factorize(table, max_iters=args.max_iters, tol=args.tol)
    if args.pairs:
        model = canonical_align(model, args.pairs)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_tensor(out / "shape.pit", model.shape.astype(np.float32))
    with open(out / "poses.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("id", "az", "el", "cy"))
        for row, orig in enumerate(model.instance_indices):
            euler = rotation_to_euler(model.rotations[row])
            writer.writerow(
                [with_kp[orig].id, _fmt(euler.az), _fmt(euler.el), _fmt(euler.cy)]
            )
    print(
        f"factorized {model.n_instances}/{len(with_kp)} instances; "
        f"residual {model.residual:.6g} after {len(model.residual_history)} iterations "
        f"(converged={model.converged}); wrote {out}"
    )
    return 0


_COMMANDS = {
    "synth": (_cmd_synth, ("out",)),
    "hypotheses": (_cmd_hypotheses, ("records", "out")),
    "neighbors": (_cmd_neighbors, ("records", "out")),
    "induce": (_cmd_induce, ("hypotheses", "neighbors", "out")),
    "eval": (_cmd_eval, ("preds", "records")),
    "factorize": (_cmd_factorize, ("records", "out")),
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subparsers = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    handler, required = _COMMANDS[args.command]
    try:
        if args.config is not None:
            _apply_config(args, subparsers[args.command], argv)
        _require(args, *required)
        return handler(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
