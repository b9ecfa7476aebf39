# components/reporting.py
import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from jinja2 import Environment, FileSystemLoader, StrictUndefined

from components.harness import BASELINE
from components.metrics import mean_std
from core.errors import ReportError
from core.storage import format_float, read_json, write_rows_csv
from data.models import StrategyKind

logger = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).resolve().parent.parent / "templates"
ROW_ORDER = [BASELINE] + [s.value for s in StrategyKind]
ROW_LABELS = {
    BASELINE: "No feature selection",
    StrategyKind.NV.value: "BPSO (no validation)",
    StrategyKind.PV.value: "BPSO (partial validation)",
    StrategyKind.GV.value: "BPSO (global validation)",
}

_env = Environment(
    loader=FileSystemLoader(str(TEMPLATE_DIR)),
    keep_trailing_newline=True,
    trim_blocks=True,
    lstrip_blocks=True,
    undefined=StrictUndefined,
)


def collect_summaries(run_dir: Path) -> Tuple[Dict[str, List[dict]], List[str]]:
    """Per-strategy replication summaries, plus the replication directories that have none."""
    run_dir = Path(run_dir)
    summaries: Dict[str, List[dict]] = {}
    incomplete: List[str] = []
    for name in ROW_ORDER:
        strategy_dir = run_dir / name
        if not strategy_dir.is_dir():
            continue
        for rep_dir in sorted(strategy_dir.glob("rep_*"), key=lambda p: int(p.name.split("_")[1])):
            summary_path = rep_dir / "summary.json"
            if summary_path.exists():
                summaries.setdefault(name, []).append(read_json(summary_path))
            else:
                incomplete.append(str(rep_dir.relative_to(run_dir)))
    return summaries, incomplete


def _stat(values: List[Optional[float]]) -> Tuple[Optional[float], Optional[float]]:
    present = [v for v in values if v is not None]
    return mean_std(present) if present else (None, None)


def summarize(summaries: Dict[str, List[dict]]) -> Tuple[List[dict], List[str]]:
    targets = sorted({t for rows in summaries.values() for s in rows for t in s.get("transfer", {})})
    table = []
    for name in ROW_ORDER:
        rows = summaries.get(name)
        if not rows:
            continue
        eer_mean, eer_std = _stat([s["eer_mean"] for s in rows])
        gaps = [s.get("overfitting_gap") for s in rows]
        row = {
            "strategy": name,
            "label": ROW_LABELS[name],
            "replications": len(rows),
            "n_features": _stat([s["n_features"] for s in rows])[0],
            "feature_fraction": _stat([s["feature_fraction"] for s in rows])[0],
            "informative_selected": _stat([s.get("informative_selected") for s in rows])[0],
            "eer_mean": eer_mean,
            "eer_std": eer_std,
            "random_eer_mean": _stat([s.get("random_eer_mean") for s in rows])[0],
            "global_eer_mean": _stat([s.get("global_eer") for s in rows])[0],
            "gap_mean": _stat(gaps)[0],
            "gap_positive": sum(1 for g in gaps if g is not None and g > 0),
            "transfer": {},
        }
        for target in targets:
            mean, std = _stat([s.get("transfer", {}).get(target, {}).get("eer_mean") for s in rows])
            row["transfer"][target] = {"eer_mean": mean, "eer_std": std}
        table.append(row)
    return table, targets


def _fmt(value: Optional[float], digits: int = 4) -> str:
    return "" if value is None else f"{value:.{digits}f}"


def _pct(value: Optional[float]) -> str:
    return "-" if value is None else f"{100 * value:.2f}"


def cmd_report(run_dir: Path) -> Tuple[Path, Path]:
    """Write summary.csv and summary.md under run_dir from every replication summary."""
    run_dir = Path(run_dir)
    summaries, incomplete = collect_summaries(run_dir)
    if not summaries:
        raise ReportError(f"No completed runs under {run_dir}"
                          + (f"; incomplete: {', '.join(incomplete)}" if incomplete else ""))
    for path in incomplete:
        logger.warning(f"[REPORT] Missing summary.json in {path}")

    table, targets = summarize(summaries)

    base_fields = ["strategy", "replications", "n_features", "feature_fraction", "informative_selected", "eer_mean",
                   "eer_std", "random_eer_mean", "global_eer_mean", "gap_mean", "gap_positive"]
    fieldnames = list(base_fields)
    for target in targets:
        fieldnames += [f"{target}_eer_mean", f"{target}_eer_std"]
    csv_rows = []
    for row in table:
        out = {k: row[k] if isinstance(row[k], (int, str)) else format_float(row[k]) for k in base_fields}
        for target in targets:
            out[f"{target}_eer_mean"] = format_float(row["transfer"][target]["eer_mean"])
            out[f"{target}_eer_std"] = format_float(row["transfer"][target]["eer_std"])
        csv_rows.append(out)
    csv_path = write_rows_csv(run_dir / "summary.csv", fieldnames, csv_rows)

    template = _env.get_template("report.md.j2")
    markdown = template.render(rows=table, targets=targets, incomplete=incomplete, fmt=_fmt, pct=_pct)
    md_path = run_dir / "summary.md"
    md_path.write_text(markdown, encoding="utf-8")

    logger.info(f"[REPORT] {len(table)} rows from {sum(len(v) for v in summaries.values())} runs -> {md_path}")
    return csv_path, md_path
