"""Score tables: CSV as the source of truth, markdown rendered from it."""

import csv
import io
from typing import Dict, List, Optional

# Published full-scale reference results (percent for DER/JER, dB otherwise).
# Desk-scale runs never reproduce these; they appear in reports side-by-side,
# clearly labeled, so directional comparisons have an anchor.
REFERENCE_FULL_SCALE: Dict[str, Dict[str, float]] = {
    "mixture": {"der": 256.3, "jer": 62.9, "int_db": 0.0, "si_snr_db": 6.5},
    "tsvad_only": {"der": 43.1, "jer": 34.0, "int_db": 26.9, "si_snr_db": 3.0},
    "pbsrnn_only": {"der": 39.9, "jer": 16.7, "int_db": 36.6, "si_snr_db": 11.1},
    "cascade1": {"der": 26.5, "jer": 16.2, "int_db": 41.3, "si_snr_db": 10.4},
    "cascade2": {"der": 84.8, "jer": 44.8, "int_db": 25.7, "si_snr_db": 2.9},
    "parallel": {"der": 32.0, "jer": 19.3, "int_db": 40.8, "si_snr_db": 9.7},
}

REFERENCE_LABEL = "reference (full scale; NOT reproduced at desk scale)"

SCORE_FIELDS = ["config", "mode", "der", "jer", "int_db", "si_snr_db"]


def _fmt(v, digits=4) -> str:
    if v is None:
        return ""
    return f"{v:.{digits}f}"


def rows_to_csv(rows: List[Dict], fields: Optional[List[str]] = None) -> str:
    fields = fields or SCORE_FIELDS
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in fields})
    return buf.getvalue()


def csv_to_rows(text: str) -> List[Dict]:
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        row = dict(rec)
        for k in ("der", "jer", "int_db", "si_snr_db", "n"):
            if k in row:
                row[k] = float(row[k]) if row[k] not in ("", None) else None
        rows.append(row)
    return rows


def render_scores_markdown(agg_rows: List[Dict], title: str = "Scores") -> str:
    """Markdown table per config with DER/JER (down) and INT/SI-SNR (up),
    plus the labeled full-scale reference column block."""
    lines = [f"# {title}", ""]
    configs = sorted({r["config"] for r in agg_rows})
    for config in configs:
        lines.append(f"## {config or 'all'}")
        lines.append("")
        lines.append(
            "| mode | DER% (down) | JER% (down) | INT dB (up) | SI-SNR dB (up) | "
            f"{REFERENCE_LABEL}: DER% / JER% / INT / SI-SNR |"
        )
        lines.append("|---|---|---|---|---|---|")
        for r in [x for x in agg_rows if x["config"] == config]:
            ref = REFERENCE_FULL_SCALE.get(r["mode"])
            ref_cell = (
                f"{ref['der']} / {ref['jer']} / {ref['int_db']} / {ref['si_snr_db']}"
                if ref
                else "n/a"
            )
            der_pc = None if r["der"] is None else 100.0 * r["der"]
            jer_pc = None if r["jer"] is None else 100.0 * r["jer"]
            lines.append(
                f"| {r['mode']} | {_fmt(der_pc, 1)} | {_fmt(jer_pc, 1)} | "
                f"{_fmt(r['int_db'], 1)} | {_fmt(r['si_snr_db'], 1)} | {ref_cell} |"
            )
        lines.append("")
    return "\n".join(lines) + "\n"


def render_overlap_sweep_csv(agg_rows: List[Dict]) -> str:
    """DER and SI-SNR against the overlap configs, one row per (config, mode)."""
    order = ["0L", "0S", "OV10", "OV20", "OV30", "OV40"]
    rows = sorted(
        [r for r in agg_rows if r["config"] in order],
        key=lambda r: (order.index(r["config"]), r["mode"]),
    )
    return rows_to_csv(rows, ["config", "mode", "der", "si_snr_db"])


ABLATION_FIELDS = ["win_s", "arch", "der", "jer", "int_db"]


def render_ablation_markdown(rows: List[Dict]) -> str:
    lines = [
        "# Window-length ablation",
        "",
        "| Win | Arch | DER% (down) | JER% (down) | INT dB (up) |",
        "|---|---|---|---|---|",
    ]
    for r in rows:
        der_pc = None if r["der"] is None else 100.0 * r["der"]
        jer_pc = None if r["jer"] is None else 100.0 * r["jer"]
        lines.append(
            f"| {r['win_s']:.2f}s | {r['arch']} | {_fmt(der_pc, 1)} | "
            f"{_fmt(jer_pc, 1)} | {_fmt(r['int_db'], 1)} |"
        )
    return "\n".join(lines) + "\n"
