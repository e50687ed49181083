"""Audit orchestration and report emission (JSON, CSV, Markdown).

A report is a set of named sections.  Each section is a flat table whose
columns are fixed per section type (see ``SCHEMAS``) so that CSV output can
be read back losslessly.  Floats are written with ``repr`` (shortest
round-trip form), undefined cells as ``undefined``.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from fairaudit import __version__
from fairaudit.embedding_store import (AGE_BINS, AnnotatedCohort, Race, join_cohort, load_annotations,
                                       load_embeddings, normalize)
from fairaudit.errors import AuditError, InputError, InvariantError
from fairaudit.fairness import (RELATIVE, STANDARD, ThresholdPolicy, fairness_sweep, relative_disparity)
from fairaudit.protocol import (BOTH, SubgroupSelector, VerificationPair, enumerate_intersections, load_pairs,
                                pair_mask, pair_rows)
from fairaudit.retrieval import map_by_slice
from fairaudit.similarity import CROSS_IDENTITY_ONLY, group_similarity
from fairaudit.verification import COSINE, EUCLIDEAN, ScoredPairs, kfold_accuracy, roc, score_pairs, tpr_at_fpr

SCHEMA_VERSION = 1
UNDEFINED = "undefined"

VERIFY_COLUMNS = [
    ("group", "str"), ("scope", "str"), ("race", "str"), ("gender", "str"), ("age", "str"), ("age_gap", "int"),
    ("n_pairs", "int"), ("n_genuine", "int"), ("n_folds", "int"),
    ("accuracy", "float"), ("accuracy_std", "float"), ("tpr", "float"), ("tpr_disparity", "float"),
    ("baseline", "str"),
]
RETRIEVAL_COLUMNS = [
    ("group", "str"), ("scope", "str"), ("n_queries", "int"), ("n_excluded", "int"), ("n_trials", "int"),
    ("map", "float"), ("map_disparity", "float"), ("map_baseline", "str"),
    ("tpr", "float"), ("tpr_disparity", "float"), ("tpr_baseline", "str"),
]
SIMILARITY_COLUMNS = [
    ("group", "str"), ("scope", "str"), ("n_inter", "int"), ("inter_mean", "float"), ("inter_std", "float"),
    ("n_intra", "int"), ("intra_mean", "float"), ("intra_std", "float"), ("sampled", "bool"),
]
FAIRNESS_COLUMNS = [
    ("group", "str"), ("scope", "str"), ("race", "str"), ("gender", "str"), ("age", "str"),
    ("n_inside", "int"), ("n_outside", "int"), ("threshold", "float"),
    ("dfpr", "float"), ("dfnr", "float"), ("d_m", "float"), ("p_rule", "float"),
    ("p_rule_disparity", "float"), ("baseline", "str"),
]

VERIFY_SECTIONS = ("overall", "by_race", "race_gender", "race_age", "race_gender_age", "age_gap")
SCHEMAS = {name: VERIFY_COLUMNS for name in VERIFY_SECTIONS}
SCHEMAS.update(retrieval=RETRIEVAL_COLUMNS, similarity=SIMILARITY_COLUMNS, fairness=FAIRNESS_COLUMNS)

# (value column, disparity column, baseline column)
DISPARITY_COLUMNS = {
    **{name: [("tpr", "tpr_disparity", "baseline")] for name in VERIFY_SECTIONS},
    "retrieval": [("map", "map_disparity", "map_baseline"), ("tpr", "tpr_disparity", "tpr_baseline")],
    "fairness": [("p_rule", "p_rule_disparity", "baseline")],
    "similarity": [],
}

TITLES = {
    "overall": "Overall verification performance",
    "by_race": "Performance by race",
    "race_gender": "Race x gender intersections",
    "race_age": "Race x age intersections",
    "race_gender_age": "Race x gender x age intersections",
    "age_gap": "Cross-age performance by age gap",
    "retrieval": "Retrieval performance",
    "similarity": "Inter- and intra-group cosine similarity",
    "fairness": "Disparate impact and mistreatment (race x gender x age)",
}


@dataclass
class Section:
    name: str
    rows: list[dict]
    notes: list[str] = field(default_factory=list)

    @property
    def columns(self) -> list[tuple[str, str]]:
        return SCHEMAS[self.name]

    def to_dict(self) -> dict:
        return {"title": TITLES[self.name], "columns": [c for c, _ in self.columns], "notes": list(self.notes),
                "rows": [{c: _json_cell(row.get(c)) for c, _ in self.columns} for row in self.rows]}


@dataclass
class AuditReport:
    metadata: dict
    sections: dict[str, Section]

    def to_dict(self) -> dict:
        return {"schema": SCHEMA_VERSION, "metadata": self.metadata,
                "sections": {name: s.to_dict() for name, s in self.sections.items()}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"


@dataclass
class AuditConfig:
    embeddings: str | None = None
    annotations: str | None = None
    pairs: str | None = None
    metric: str = COSINE
    normalize: bool = True
    fpr_target: float = 0.01
    retrieval_fpr: float = 0.005
    policy: str = BOTH
    convention: str = STANDARD
    groupby: tuple[str, ...] = ("race", "gender", "age_bin")
    seed: int = 0
    threshold_policy: ThresholdPolicy = field(default_factory=ThresholdPolicy)
    identity_policy: str = CROSS_IDENTITY_ONLY
    join: str = "strict"
    retrieval: bool = True
    similarity: bool = True


class StageError(AuditError):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


class InputStageError(StageError, InputError):
    pass


class InvariantStageError(StageError, InvariantError):
    pass


def _stage(name: str, fn: Callable, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except InvariantError as exc:
        raise InvariantStageError(name, exc) from exc
    except (InputError, ValueError, OSError) as exc:
        raise InputStageError(name, exc) from exc


def _workers() -> int:
    raw = os.environ.get("FAIRAUDIT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise InputError(f"FAIRAUDIT_THREADS must be an integer, got {raw!r}") from None


def _pmap(fn: Callable, items: Sequence) -> list:
    workers = _workers()
    if workers == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def stage_seed(root: int, stage: int) -> int:
    return int(np.random.SeedSequence([root, stage]).generate_state(1)[0])


# -- verification slices ------------------------------------------------------

def _selector_fields(sel: SubgroupSelector) -> dict:
    return {"race": sel.race.value if sel.race else None,
            "gender": sel.gender.value if sel.gender else None,
            "age": AGE_BINS[sel.age_bin] if sel.age_bin is not None else None}


def verification_row(sp: ScoredPairs, fpr_target: float) -> dict:
    n_gen = int(sp.genuine.sum())
    row = {"n_pairs": len(sp), "n_genuine": n_gen, "n_folds": 0,
           "accuracy": None, "accuracy_std": None, "tpr": None}
    if n_gen == 0 or n_gen == len(sp):
        return row
    row["tpr"] = tpr_at_fpr(roc(sp), fpr_target)
    try:
        kf = kfold_accuracy(sp, skip_degenerate=True)
    except InputError:
        return row
    row.update(n_folds=len(kf.folds), accuracy=kf.mean, accuracy_std=kf.std)
    return row


def _annotate(rows: list[dict], pairs: list[tuple[str, str, str]]) -> None:
    """Fill disparity/baseline columns from the value column, per scope."""
    for value_col, disp_col, base_col in pairs:
        values = {i: r[value_col] for i, r in enumerate(rows)}
        disp = relative_disparity(values, scope={i: r["scope"] for i, r in enumerate(rows)}, mode=RELATIVE,
                                  strict=False)
        for i, r in enumerate(rows):
            d = disp[i]
            r[disp_col] = None if d is None else d.disparity
            r[base_col] = None if d is None else rows[d.baseline]["group"]


def _slice_rows(sp: ScoredPairs, pairs, cohort, selectors, policy, fpr_target, scope_of) -> list[dict]:
    def one(sel):
        sel = sel.with_policy(policy)
        mask = pair_mask(pairs, cohort, sel) if len(pairs) else np.zeros(0, dtype=bool)
        row = {"group": sel.label, "scope": scope_of(sel), **_selector_fields(sel), "age_gap": None}
        row.update(verification_row(sp.subset(mask), fpr_target))
        return row
    return _pmap(one, list(selectors))


def _age_gap_rows(sp, pairs, cohort, races, fpr_target, policy) -> list[dict]:
    ia, ib = pair_rows(pairs, cohort)
    gap = np.abs(cohort.age_bins[ia] - cohort.age_bins[ib])
    rows = []
    groups = [SubgroupSelector(race=r, policy=policy) for r in races] if races else [SubgroupSelector.all()]
    for sel in groups:
        in_group = pair_mask(pairs, cohort, sel) if not sel.everyone else np.ones(len(pairs), dtype=bool)
        for g in range(len(AGE_BINS)):
            label = f"{sel.label} gap {g}"
            row = {"group": label, "scope": sel.label, **_selector_fields(sel), "age_gap": g}
            row.update(verification_row(sp.subset(in_group & (gap == g)), fpr_target))
            rows.append(row)
    return rows


# -- audit ----------------------------------------------------------------------

def load_inputs(cfg: AuditConfig) -> tuple[AnnotatedCohort, list[VerificationPair]]:
    for name in ("embeddings", "annotations", "pairs"):
        if getattr(cfg, name) is None:
            raise InputError(f"missing required input: --{name}")
    emb = _stage("load", load_embeddings, cfg.embeddings)
    ann = _stage("load", load_annotations, cfg.annotations)
    cohort = _stage("load", join_cohort, emb, ann, cfg.join)
    if cfg.normalize:
        cohort = cohort.with_embeddings(_stage("load", normalize, cohort.embeddings))
    pairs = _stage("load", load_pairs, cfg.pairs, cohort)
    return cohort, pairs


def run_audit(cfg: AuditConfig) -> AuditReport:
    cohort, pairs = load_inputs(cfg)
    inputs = {"embeddings": str(cfg.embeddings), "annotations": str(cfg.annotations), "pairs": str(cfg.pairs)}
    return audit_cohort(cohort, pairs, cfg, inputs)


def audit_cohort(cohort: AnnotatedCohort, pairs: list[VerificationPair], cfg: AuditConfig,
                 inputs: dict | None = None) -> AuditReport:
    """Run every analysis stage on an in-memory cohort and pair protocol."""
    groupby = tuple(a for a in ("race", "gender", "age_bin") if a in set(cfg.groupby))
    if len(groupby) != len(set(cfg.groupby)):
        raise InputError(f"unknown groupby attributes in {cfg.groupby!r}")
    if cfg.normalize and not cohort.embeddings.normalized:
        cohort = cohort.with_embeddings(_stage("load", normalize, cohort.embeddings))
    metric = EUCLIDEAN if cfg.metric in ("euclidean", EUCLIDEAN) else cfg.metric
    sp = _stage("score", score_pairs, pairs, cohort, metric)
    threshold = _stage("threshold", cfg.threshold_policy.resolve, sp)
    fpr_pct = f"{cfg.fpr_target * 100:g}%"

    sections: dict[str, Section] = {}
    overall = {"group": "all", "scope": "all", "race": None, "gender": None, "age": None, "age_gap": None}
    overall.update(_stage("overall", verification_row, sp, cfg.fpr_target))
    sections["overall"] = Section("overall", [overall], [f"TPR at FPR<={fpr_pct}"])

    race_attr = "race" in groupby
    if race_attr:
        rows = _stage("by_race", _slice_rows, sp, pairs, cohort, enumerate_intersections(["race"]), cfg.policy,
                      cfg.fpr_target, lambda s: "race")
        sections["by_race"] = Section("by_race", rows)
    for name, attrs in (("race_gender", ["race", "gender"]), ("race_age", ["race", "age_bin"]),
                        ("race_gender_age", ["race", "gender", "age_bin"])):
        if set(attrs) <= set(groupby):
            rows = _stage(name, _slice_rows, sp, pairs, cohort, enumerate_intersections(attrs), cfg.policy,
                          cfg.fpr_target, lambda s: s.race.value)
            sections[name] = Section(name, rows)
    if "age_bin" in groupby:
        races = list(Race) if race_attr else []
        sections["age_gap"] = Section("age_gap", _stage("age_gap", _age_gap_rows, sp, pairs, cohort, races,
                                                        cfg.fpr_target, cfg.policy))
    if cfg.policy == BOTH:
        ia, ib = pair_rows(pairs, cohort)
        if "race_age" in sections:
            mixed = int(np.count_nonzero(cohort.age_bins[ia] != cohort.age_bins[ib]))
            sections["race_age"].notes.append(f"{mixed} pairs with differing age bins fall in no age slice")
        if "race_gender" in sections:
            mixed = int(np.count_nonzero(cohort.gender_codes[ia] != cohort.gender_codes[ib]))
            sections["race_gender"].notes.append(f"{mixed} pairs with differing genders fall in no gender slice")

    attr_selectors = [(a, enumerate_intersections([a])) for a in groupby]
    if cfg.retrieval and attr_selectors:
        sels = [s for _, group in attr_selectors for s in group]
        scope = {s: a for a, group in attr_selectors for s in group}
        res = _stage("retrieval", map_by_slice, cohort, sels, metric, cfg.retrieval_fpr)
        rows = [{"group": s.label, "scope": scope[s], "n_queries": r.n_queries, "n_excluded": r.n_excluded,
                 "n_trials": r.n_trials, "map": r.mean_ap, "tpr": r.tpr} for s, r in res.items()]
        sections["retrieval"] = Section("retrieval", rows, [
            f"TPR at FPR<={cfg.retrieval_fpr * 100:g}% over all query-document pairs",
            "slice membership applies to the query only; all samples are documents",
            "relevant documents share the query identity, regardless of slice",
        ])
    if cfg.similarity and attr_selectors:
        seed = stage_seed(cfg.seed, 1)

        def sim_row(item):
            attr, sel = item
            try:
                st = group_similarity(cohort, sel, cfg.identity_policy, seed=seed)
            except InputError:
                return {"group": sel.label, "scope": attr, "n_inter": 0, "n_intra": 0, "inter_mean": None,
                        "inter_std": None, "intra_mean": None, "intra_std": None, "sampled": False}
            return {"group": sel.label, "scope": attr, "n_inter": st.n_inter, "inter_mean": st.inter_mean,
                    "inter_std": st.inter_std, "n_intra": st.n_intra, "intra_mean": st.intra_mean,
                    "intra_std": st.intra_std, "sampled": st.sampled}
        items = [(a, s) for a, group in attr_selectors for s in group]
        sections["similarity"] = Section("similarity", _stage("similarity", _pmap, sim_row, items), [
            f"identity policy: {cfg.identity_policy}", "standard deviations are population values"])
    if groupby:
        sels = enumerate_intersections(groupby)
        recs = _stage("fairness", fairness_sweep, sp, pairs, cohort, sels, cfg.threshold_policy, cfg.convention)
        rows = [{"group": r.selector.label, "scope": r.selector.race.value if r.selector.race else "all",
                 **_selector_fields(r.selector), "n_inside": r.n_inside, "n_outside": r.n_outside,
                 "threshold": r.threshold_used, "dfpr": r.dfpr, "dfnr": r.dfnr, "d_m": r.d_m, "p_rule": r.p_rule}
                for r in recs]
        sections["fairness"] = Section("fairness", rows, [
            f"convention: {cfg.convention}", f"threshold: {cfg.threshold_policy.describe()}",
            "inside pairs have both samples in the subgroup; all other pairs are outside"])

    for name, sec in sections.items():
        _annotate(sec.rows, DISPARITY_COLUMNS[name])

    metadata = {
        "tool": "fairaudit",
        "version": __version__,
        "inputs": inputs or {},
        "cohort": {"samples": len(cohort), "identities": int(len(np.unique(cohort.identity_codes))),
                   "pairs": len(pairs), "dropped_by_join": len(cohort.dropped)},
        "metric": metric,
        "normalize": bool(cfg.normalize),
        "fpr_target": cfg.fpr_target,
        "retrieval_fpr": cfg.retrieval_fpr,
        "pair_policy": cfg.policy,
        "convention": cfg.convention,
        "threshold_policy": cfg.threshold_policy.describe(),
        "global_threshold": _json_cell(threshold),
        "identity_policy": cfg.identity_policy,
        "groupby": list(groupby),
        "seed": cfg.seed,
        "protocol_notes": [
            "accuracy: per fold, max-accuracy threshold chosen on the other folds; mean and population std",
            "folds lacking a class in the slice are skipped (n_folds counts those used)",
            "TPR@FPR: largest empirical FPR not above the target, no interpolation",
            "disparity: relative to the best value in the row's scope",
        ],
    }
    return AuditReport(metadata, sections)


# -- serialization --------------------------------------------------------------

def _json_cell(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "NaN"
        if math.isinf(v):
            return "Infinity" if v > 0 else "-Infinity"
        return v
    return v


def _csv_cell(v) -> str:
    v = _json_cell(v)
    if v is None:
        return UNDEFINED
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_cell(text: str, kind: str):
    if text == UNDEFINED:
        return None
    if kind == "int":
        return int(text)
    if kind == "float":
        return text if text in ("NaN", "Infinity", "-Infinity") else float(text)
    if kind == "bool":
        return text == "true"
    return text


def check_consistency(report: AuditReport) -> None:
    """Recompute every disparity column from its value column; must match exactly."""
    for name, sec in report.sections.items():
        for value_col, disp_col, base_col in DISPARITY_COLUMNS[name]:
            rows = [dict(r) for r in sec.rows]
            _annotate(rows, [(value_col, disp_col, base_col)])
            for mine, theirs in zip(rows, sec.rows):
                if mine[disp_col] != theirs.get(disp_col) or mine[base_col] != theirs.get(base_col):
                    raise InvariantError(f"section {name}: {disp_col} of {theirs.get('group')!r} does not "
                                         f"recompute from {value_col}")
        for row in sec.rows:
            count_col = next(c for c, k in sec.columns if k == "int" and c.startswith("n_"))
            if row.get(count_col) is None:
                raise InvariantError(f"section {name}: row {row.get('group')!r} has no count")


def _fmt(v, digits: int = 4) -> str:
    return UNDEFINED if v is None else f"{v:.{digits}f}"


def _pct(d) -> str:
    return f"({d * 100:.1f}%)"


def _value_with_disparity(row, value_col, disp_col, base_col) -> str:
    v = row.get(value_col)
    if v is None:
        return UNDEFINED
    d = row.get(disp_col)
    if d is None or row.get(base_col) == row.get("group"):
        return _fmt(v)
    return f"{_fmt(v)} {_pct(d)}"


def _table(header: list[str], body: list[list[str]]) -> list[str]:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(cells) + " |" for cells in body]
    return lines


def _baseline_note(rows, base_col) -> str:
    seen = {}
    for r in rows:
        if r.get(base_col) is not None:
            seen.setdefault(r["scope"], r[base_col])
    if not seen:
        return "Baseline: none (no defined values)."
    return "Baseline (best in scope, disparity 0): " + "; ".join(f"{s}: {b}" for s, b in seen.items()) + "."


def to_markdown(report: AuditReport) -> str:
    md = report.metadata
    out = ["# Demographic bias audit", "",
           f"- metric: {md['metric']} (normalized: {md['normalize']})",
           f"- pair policy: {md['pair_policy']}; convention: {md['convention']}",
           f"- threshold policy: {md['threshold_policy']} = {md['global_threshold']!r}",
           f"- seed: {md['seed']}; tool version: {md['version']}", ""]
    tpr_head = f"TPR@FPR={md['fpr_target'] * 100:g}%"
    for name, sec in report.sections.items():
        out += [f"## {TITLES[name]}", ""]
        if name in VERIFY_SECTIONS:
            body = [[r["group"], str(r["n_pairs"]),
                     UNDEFINED if r["accuracy"] is None else f"{r['accuracy']:.4f} ± {r['accuracy_std']:.4f}",
                     _value_with_disparity(r, "tpr", "tpr_disparity", "baseline")] for r in sec.rows]
            out += _table(["Group", "Pairs", "Accuracy ± Std", tpr_head], body)
            notes = [_baseline_note(sec.rows, "baseline")]
        elif name == "retrieval":
            head = f"TPR@FPR={md['retrieval_fpr'] * 100:g}%"
            body = [[r["scope"], r["group"], str(r["n_queries"]),
                     _value_with_disparity(r, "map", "map_disparity", "map_baseline"),
                     _value_with_disparity(r, "tpr", "tpr_disparity", "tpr_baseline")] for r in sec.rows]
            out += _table(["Attribute", "Group", "Queries", "mAP", head], body)
            notes = [_baseline_note(sec.rows, "map_baseline")]
        elif name == "similarity":
            def ms(m, s):
                return UNDEFINED if m is None else f"{m:.6f} ± {s:.6f}"
            body = [[r["scope"], r["group"], ms(r["inter_mean"], r["inter_std"]), str(r["n_inter"]),
                     ms(r["intra_mean"], r["intra_std"]), str(r["n_intra"])] for r in sec.rows]
            out += _table(["Attribute", "Group", "Inter-group", "Pairs", "Intra-group", "Pairs"], body)
            notes = []
        else:
            body = [[r["group"], str(r["n_inside"]),
                     _value_with_disparity(r, "p_rule", "p_rule_disparity", "baseline"),
                     _fmt(r["d_m"]), _fmt(r["dfpr"]), _fmt(r["dfnr"])] for r in sec.rows]
            out += _table(["Group", "Inside pairs", "p%-rule", "D_M", "DFPR", "DFNR"], body)
            notes = [_baseline_note(sec.rows, "baseline")]
        out.append("")
        out += [f"_{n}_" for n in notes + sec.notes]
        out.append("")
    return "\n".join(out)


def _atomic_write_all(files: dict[Path, str]) -> list[Path]:
    staged = []
    try:
        for path, text in files.items():
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            staged.append((tmp, path))
    except OSError:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, path in staged:
        os.replace(tmp, path)
    return list(files)


def section_csv(sec: Section) -> str:
    lines = [",".join(c for c, _ in sec.columns)]
    for row in sec.rows:
        cells = []
        for c, _ in sec.columns:
            text = _csv_cell(row.get(c))
            if any(ch in text for ch in ',"\n'):
                text = '"' + text.replace('"', '""') + '"'
            cells.append(text)
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def emit(report: AuditReport, out_dir, formats: Sequence[str] = ("json", "csv", "markdown")) -> list[Path]:
    """Write the report; all files appear together or not at all."""
    check_consistency(report)
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out_dir}: {exc}") from exc
    files: dict[Path, str] = {}
    for fmt in formats:
        if fmt == "json":
            files[out_dir / "report.json"] = report.to_json()
        elif fmt == "csv":
            for name, sec in report.sections.items():
                files[out_dir / f"{name}.csv"] = section_csv(sec)
        elif fmt in ("markdown", "md"):
            files[out_dir / "report.md"] = to_markdown(report)
        else:
            raise InputError(f"unknown output format {fmt!r}")
    try:
        return _atomic_write_all(files)
    except OSError as exc:
        raise InputError(f"cannot write report to {out_dir}: {exc}") from exc


def load_report_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def load_sections_csv(out_dir, names: Sequence[str]) -> dict[str, list[dict]]:
    """Read section CSVs back into row dicts typed per the section schema."""
    import csv

    out = {}
    for name in names:
        cols = SCHEMAS[name]
        with (Path(out_dir) / f"{name}.csv").open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != [c for c, _ in cols]:
                raise InputError(f"{name}.csv: unexpected header {header!r}")
            out[name] = [{c: _parse_cell(t, k) for (c, k), t in zip(cols, rec)} for rec in reader]
    return out
