"""``fairaudit`` command line.

Exit codes: 0 success, 2 input error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from fairaudit import __version__
from fairaudit.embedding_store import write_annotations, write_embeddings
from fairaudit.errors import InputError, InvariantError
from fairaudit.fairness import AS_WRITTEN, STANDARD, ThresholdPolicy
from fairaudit.protocol import ATTRIBUTES, enumerate_intersections, generate_pairs, pair_mask, write_pairs
from fairaudit.report import AuditConfig, emit, load_inputs, run_audit
from fairaudit.verification import COSINE, EUCLIDEAN, roc

log = logging.getLogger("fairaudit")

FORMATS = ("json", "csv", "markdown")


def _comma_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _groupby(text: str) -> tuple[str, ...]:
    out = []
    for t in _comma_list(text):
        t = "age_bin" if t == "age" else t
        if t not in ATTRIBUTES:
            raise argparse.ArgumentTypeError(f"unknown attribute {t!r} (choose from race, gender, age)")
        out.append(t)
    return tuple(out)


def _formats(text: str) -> tuple[str, ...]:
    out = tuple("markdown" if t == "md" else t for t in _comma_list(text))
    bad = [t for t in out if t not in FORMATS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown format(s) {bad}; choose from {', '.join(FORMATS)}")
    return out


def _add_inputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--embeddings", required=True, help="binary (.bin) or CSV embedding file")
    p.add_argument("--annotations", required=True, help="annotation CSV")
    p.add_argument("--metric", choices=("cosine", "euclidean"), default="cosine")
    p.add_argument("--normalize", choices=("on", "off"), default="on")
    p.add_argument("--groupby", type=_groupby, default=("race", "gender", "age_bin"),
                   help="comma list of race, gender, age")
    p.add_argument("--join", choices=("strict", "lenient"), default="strict")
    p.add_argument("--seed", type=int, default=0)


def _config(args) -> AuditConfig:
    kind = getattr(args, "threshold", "fpr").replace("-", "_")
    value = getattr(args, "threshold_value", None)
    if value is None:
        value = getattr(args, "fpr_target", 0.01) if kind == "fpr" else 0.0
    if kind == "fixed" and getattr(args, "threshold_value", None) is None:
        raise InputError("--threshold fixed needs --threshold-value")
    return AuditConfig(
        embeddings=args.embeddings, annotations=args.annotations, pairs=getattr(args, "pairs", None),
        metric=EUCLIDEAN if args.metric == "euclidean" else COSINE, normalize=args.normalize == "on",
        fpr_target=getattr(args, "fpr_target", 0.01), retrieval_fpr=getattr(args, "retrieval_fpr", 0.005),
        policy=getattr(args, "policy", "both"),
        convention=AS_WRITTEN if getattr(args, "convention", "standard") == "as-written" else STANDARD,
        groupby=args.groupby, seed=args.seed, threshold_policy=ThresholdPolicy(kind, value), join=args.join,
    )


def _write_rows(rows: Sequence[Sequence], header: Sequence[str], path: Path | None) -> None:
    if path is None:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    tmp.replace(path)


def _out_dir(args) -> Path | None:
    if args.out_dir is None:
        return None
    d = Path(args.out_dir)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {d}: {exc}") from exc
    return d


def _roc_figure(cfg: AuditConfig, out_dir: Path) -> Path:
    from fairaudit.plotting import roc_curves
    from fairaudit.verification import score_pairs

    cohort, pairs = load_inputs(cfg)
    sp = score_pairs(pairs, cohort, cfg.metric)
    curves = {}
    full = roc(sp)
    curves["all"] = (full.fpr, full.tpr)
    for sel in enumerate_intersections(["race"]):
        sub = sp.subset(pair_mask(pairs, cohort, sel.with_policy(cfg.policy)))
        if (sub.genuine.any() and (~sub.genuine).any()):
            c = roc(sub)
            curves[sel.label] = (c.fpr, c.tpr)
    return roc_curves(curves, out_dir / "roc_by_race.svg", fpr_marker=cfg.fpr_target)


# -- subcommands ------------------------------------------------------------------

def cmd_audit(args) -> int:
    cfg = _config(args)
    report = run_audit(cfg)
    if args.sections:
        keep = set(args.sections)
        report.sections = {k: v for k, v in report.sections.items() if k in keep}
    if args.out_dir is None:
        sys.stdout.write(report.to_json())
        return 0
    written = emit(report, args.out_dir, args.format)
    if args.figures:
        written.append(_roc_figure(cfg, Path(args.out_dir)))
    for path in written:
        log.info("wrote %s", path)
    return 0


def cmd_retrieve(args) -> int:
    from fairaudit.retrieval import map_by_slice

    cfg = _config(args)
    cohort, _ = _load_cohort(cfg)
    sels = [s for a in cfg.groupby for s in enumerate_intersections([a])]
    res = map_by_slice(cohort, sels, cfg.metric, args.retrieval_fpr)
    rows = [[s.label, r.n_queries, r.n_excluded, r.n_trials, _num(r.mean_ap), _num(r.tpr)] for s, r in res.items()]
    out = _out_dir(args)
    _write_rows(rows, ["group", "n_queries", "n_excluded", "n_trials", "map", "tpr"],
                None if out is None else out / "retrieval.csv")
    return 0


def _load_cohort(cfg: AuditConfig):
    from fairaudit.embedding_store import join_cohort, load_annotations, load_embeddings, normalize

    cohort = join_cohort(load_embeddings(cfg.embeddings), load_annotations(cfg.annotations), cfg.join)
    if cfg.normalize:
        cohort = cohort.with_embeddings(normalize(cohort.embeddings))
    return cohort, None


def _num(v) -> str:
    return "undefined" if v is None or (isinstance(v, float) and np.isnan(v)) else repr(float(v))


def cmd_project(args) -> int:
    from fairaudit.plotting import attribute_labels, scatter_by_attribute
    from fairaudit.projection import TsneConfig, pca2, tsne

    cfg = _config(args)
    cohort, _ = _load_cohort(cfg)
    emb = cohort.embeddings
    if args.sample and args.sample < len(cohort):
        rng = np.random.default_rng(args.seed)
        keep = np.sort(rng.choice(len(cohort), size=args.sample, replace=False))
        emb = emb.take([cohort.ids[i] for i in keep])
    if args.method == "tsne":
        proj = tsne(emb, TsneConfig(perplexity=args.perplexity, iterations=args.iterations, seed=args.seed))
    else:
        proj = pca2(emb)
    attrs = ["age" if a == "age_bin" else a for a in cfg.groupby]
    labels = {a: attribute_labels(cohort, proj.ids, a) for a in attrs}
    out = Path(args.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    rows = [[sid, repr(float(x)), repr(float(y)), *(labels[a][i] for a in attrs)]
            for i, (sid, (x, y)) in enumerate(zip(proj.ids, proj.coordinates))]
    _write_rows(rows, ["sample_id", "x", "y", *attrs], out / f"{args.method}_coordinates.csv")
    for a in attrs:
        scatter_by_attribute(proj.coordinates, labels[a], a, out / f"{args.method}_{a}.svg")
    log.info("%s objective %.6g; wrote %d figures to %s", args.method, proj.final_objective, len(attrs), out)
    return 0


def cmd_synth(args) -> int:
    from fairaudit.synthetic import CohortSpec, generate_cohort

    spec = CohortSpec.grid(identities=args.identities, samples_per_identity=args.samples_per_identity,
                           dispersion=args.dispersion, noise=args.noise, dim=args.dim, seed=args.seed,
                           race_anchor=args.race_anchor, age_jitter=args.age_jitter)
    cohort = generate_cohort(spec)
    pairs = generate_pairs(cohort, args.per_fold, args.folds, seed=args.seed)
    out = _out_dir(args) or Path(".")
    write_embeddings(cohort.embeddings, out / "embeddings.bin")
    write_annotations([cohort.annotation(s) for s in cohort.ids], out / "annotations.csv")
    write_pairs(pairs, out / "pairs.csv")
    log.info("wrote %d samples, %d pairs to %s", len(cohort), len(pairs), out)
    return 0


def cmd_loss_check(args) -> int:
    from fairaudit.margin_loss import MarginLossParams, arcface_loss, gradient_check, random_fixture

    rows = []
    worst = 0.0
    for seed in range(args.seeds):
        x, labels, w = random_fixture(seed, n=args.samples, dim=args.dim, classes=args.classes)
        params = MarginLossParams(args.s, args.m, w)
        err = gradient_check(x, labels, params)
        worst = max(worst, err)
        rows.append([seed, repr(arcface_loss(x, labels, params)[0]), repr(err), "pass" if err <= args.tol else "FAIL"])
    _write_rows(rows, ["seed", "loss", "grad_rel_error", "status"], None)
    if worst > args.tol:
        raise InvariantError(f"gradient check failed: worst relative error {worst:.3g} > {args.tol:g}")
    return 0


def cmd_replay(args) -> int:
    from fairaudit.replay import (GAP_COLUMNS, REPLAY_COLUMNS, load_value_table, reference_gaps, replay, to_markdown,
                                  write_csv)

    rows = load_value_table(args.values)
    records = replay(rows)
    gaps = reference_gaps(rows, args.reference_metric, args.reference_scope) if args.reference_scope else []
    out = _out_dir(args)
    if out is None:
        sys.stdout.write(to_markdown(records))
        for g in gaps:
            sys.stdout.write(f"{g['scope']} {g['group']} {g['metric']}: {g['value']} vs {g['reference']} "
                             f"{g['reference_value']} -> gap {g['gap']:+}\n")
    else:
        write_csv(records, REPLAY_COLUMNS, out / "replay.csv")
        (out / "replay.md").write_text(to_markdown(records), encoding="utf-8")
        if gaps:
            write_csv(gaps, GAP_COLUMNS, out / "reference_gaps.csv")
    worst = max((r["diff_points"] for r in records if r["diff_points"] is not None), default=None)
    if worst is not None:
        log.info("largest deviation from published annotations: %.3f points", worst)
    return 0


def cmd_annotator_fpr(args) -> int:
    from fairaudit.verification import annotator_fpr, load_annotator_csv

    pred, truth, groups = load_annotator_csv(args.input)
    table = annotator_fpr(pred, truth, groups)
    _write_rows([[g, c, _num(v)] for (g, c), v in table.items()], ["group", "class", "fpr"], None)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fairaudit", description="Demographic bias audit for face embeddings.")
    p.add_argument("--version", action="version", version=f"fairaudit {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def verification_flags(q):
        _add_inputs(q)
        q.add_argument("--pairs", required=True, help="pair protocol CSV")
        q.add_argument("--fpr-target", type=float, default=0.01)
        q.add_argument("--retrieval-fpr", type=float, default=0.005)
        q.add_argument("--policy", choices=("both", "either"), default="both")
        q.add_argument("--convention", choices=("standard", "as-written"), default="standard")
        q.add_argument("--threshold", choices=("fpr", "max-accuracy", "fixed"), default="fpr",
                       help="global threshold for the fairness sweep")
        q.add_argument("--threshold-value", type=float, default=None)
        q.add_argument("--out-dir", default=None)
        q.add_argument("--format", type=_formats, default=FORMATS, help="comma list of json, csv, markdown")

    q = sub.add_parser("audit", help="full audit report")
    verification_flags(q)
    q.add_argument("--no-figures", dest="figures", action="store_false")
    q.set_defaults(func=cmd_audit, sections=None)

    q = sub.add_parser("verify", help="verification accuracy and TPR@FPR by slice")
    verification_flags(q)
    q.set_defaults(func=cmd_audit, figures=False,
                   sections=("overall", "by_race", "race_gender", "race_age", "race_gender_age", "age_gap"))

    q = sub.add_parser("retrieve", help="mAP and TPR by attribute slice")
    _add_inputs(q)
    q.add_argument("--retrieval-fpr", "--fpr-target", dest="retrieval_fpr", type=float, default=0.005)
    q.add_argument("--out-dir", default=None)
    q.set_defaults(func=cmd_retrieve)

    q = sub.add_parser("project", help="2-D projection with scatter figures")
    _add_inputs(q)
    q.add_argument("--method", choices=("tsne", "pca"), default="tsne")
    q.add_argument("--perplexity", type=float, default=30.0)
    q.add_argument("--iterations", type=int, default=1000)
    q.add_argument("--sample", type=int, default=0, help="project a seeded random subset of this size")
    q.add_argument("--out-dir", default=None)
    q.set_defaults(func=cmd_project)

    q = sub.add_parser("synth", help="write a synthetic cohort and pair protocol")
    q.add_argument("--identities", type=int, default=4, help="identities per race/gender/age subgroup")
    q.add_argument("--samples-per-identity", type=int, default=4)
    q.add_argument("--dispersion", type=float, default=1.0)
    q.add_argument("--noise", type=float, default=0.3)
    q.add_argument("--dim", type=int, default=32)
    q.add_argument("--race-anchor", type=float, default=0.0)
    q.add_argument("--age-jitter", type=float, default=0.0)
    q.add_argument("--per-fold", type=int, default=100)
    q.add_argument("--folds", type=int, default=10)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out-dir", default=None)
    q.set_defaults(func=cmd_synth)

    q = sub.add_parser("loss-check", help="margin loss gradient check on random fixtures")
    q.add_argument("--s", type=float, default=64.0)
    q.add_argument("--m", type=float, default=0.5)
    q.add_argument("--seeds", type=int, default=10)
    q.add_argument("--samples", type=int, default=5)
    q.add_argument("--dim", type=int, default=8)
    q.add_argument("--classes", type=int, default=4)
    q.add_argument("--tol", type=float, default=1e-5)
    q.set_defaults(func=cmd_loss_check)

    q = sub.add_parser("replay-tables", help="re-derive disparity annotations from published values")
    q.add_argument("--values", required=True, help="CSV: table,scope,group,metric,value[,mode][,published]")
    q.add_argument("--reference-metric", default="d_m")
    q.add_argument("--reference-scope", default=None, help="report gaps above the best value of this scope")
    q.add_argument("--out-dir", default=None)
    q.set_defaults(func=cmd_replay)

    q = sub.add_parser("annotator-fpr", help="per-group one-vs-rest FPR of attribute predictions")
    q.add_argument("--input", required=True, help="CSV: sample_id,group,true_label,pred_label")
    q.set_defaults(func=cmd_annotator_fpr)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s: %(message)s",
                        stream=sys.stderr)
    try:
        return args.func(args)
    except InvariantError as exc:
        print(f"fairaudit: invariant violation: {exc}", file=sys.stderr)
        return 3
    except InputError as exc:
        print(f"fairaudit: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
