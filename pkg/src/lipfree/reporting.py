"""Bound rows, report files, and plot-data emission.

Every verified inequality becomes one BoundRow; a report is an ordered
list of rows written as CSV (stable schema, 17-significant-digit floats)
plus a JSON summary.  Writing the same rows twice produces byte-identical
files: ordering, float formatting, and quoting are all pinned down here.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

__all__ = [
    "SCHEMA_ID",
    "REFS",
    "BoundRow",
    "sort_rows",
    "rows_to_csv",
    "write_report",
    "read_csv_rows",
    "summarize",
    "rows_from_summary",
    "emit_plot_data",
    "fmt17",
]

SCHEMA_ID = "lipfree-bounds-v1"

# Provenance labels for the report's paper_ref column.  The strings form a
# closed vocabulary; each row must carry one of them verbatim.
REFS: Dict[str, str] = {
    "plumbing": "invented — artifact plumbing",
    "norm-equiv": "§2, \"K^{-1}‖·‖₂ ≤ ‖·‖ ≤ K‖·‖₂\"",
    "body-norm": "§1, \"Φ(x) = Σ_{i=1}^3 φ(½|x_i|)\" and \"φ(1)=1 and φ(t)=0 for t ∈ [0,¾]\"",
    "kernel-mass": "§2, \"ν_s(x) = (1/s^N) ν(x/s)\" and \"∫_{ℝ^N} ν(x) dx = 1\"",
    "kernel-g": "§2, \"Set G = (e∫₀¹ exp(1/(r²−1)) r^{N−1} dr)^{−1}\"",
    "kernel-identity": "§2, \"1/A = ∫_{B₁} exp(1/(‖z‖₂²−1)) dz = Γ/(eG)\"",
    "tangent-identity": "§2 Lemma — \"(Dψ(x)−I)|_{T_x} = 0\"",
    "near-tangent": "§2 Lemma — \"‖y−x−P_x(y−x)‖₂ ≤ ε‖y−x‖₂\"",
    "translation": "§2 Lemma — \"‖ψ(x+z)−ψ(y+z)−(x−y)‖₂ ≤ ε‖x−y‖₂\"",
    "chart-inverse": "§3, \"Let φ_x denote this inverse\"",
    "cover": "§3, \"We form the cover {U_x : x∈M} of M∩B_{n²} and find a finite subcover U_1,…,U_m\"; selection strategy invented — artifact plumbing",
    "interpolant": "§2, \"Λ(f,C)(x) = Σ_{γ∈{0,1}^d} (∏ …) f(v_γ)\" — the interpolant is \"coordinatewise affine\"",
    "interp-face": "§3, \"Λ(G(f),C) and Λ(G(f),C′) are equal on C∩C′. Therefore Λ(G(f)) is well-defined\"",
    "interp-error": "§2 Lemma — \"Lip_{‖·‖₂}((Λ(f,C) − f)|_C) ≤ (1+√d)ε\" and \"‖(Λ(f,C) − f)|_C‖∞ ≤ √d δ Lip_{‖·‖₂}(f)\"",
    "smoothing": "§3, \"S_n(f)(x) = f̂_{s_n}(x) − f̂_{s_n}(0)\" and \"Set s_n = δ/(2nKL_n)\"; houses Sₙ, s_n, δₙ, L_n, and the close/far split parameter δ",
    "smoothing-lip": "§2 Prop — \"|f̂_s(x) − f̂_s(y)| ≤ (1+ε)‖x−y‖\" via §2 Lemma; calibration procedure invented — artifact plumbing",
    "partition": "§3, \"α_i: M→[0,1] … H-Lipschitz functions, where H≥1, forming a partition of unity subordinate to U_1,…,U_m\"; houses α_i, H, m",
    "glue": "§2 Lemma — \"‖g−f‖∞ ≤ ε and Lip_{‖·‖}(g−f) ≤ (1+mH)ε\"",
    "mu": "§2, \"μ(t) = (log R)^{−1}(2 log R − log t) if R ≤ t ≤ R²\"; houses μ, R",
    "flatten": "§2 Prop — \"Φ(f)(x) = μ(‖x‖₂)f(x) if x ∈ B_{R²}\" with \"‖Φ‖ ≤ 1+K²/log R\"",
    "gamma-def": "§3, \"Define Γ_n: Lip₀(M)→Lip₀(M) by Γ_n(f) = Φ_n(Q_n(f))\"; houses Qₙ′ (\"Q_n'(f)(x) = Σ α_i(x) P_i(S_n(f))(x)\"), Qₙ (\"Q_n(f)(x) = Q_n'(f)(x)−Q_n'(f)(0)\"), Φₙ, Γₙ",
    "gamma-bounds": "§3, \"‖Γ_n‖ ≤ (1+K²/log n)(1+3/n)\" and \"|Γ_n(f)(x)−f(x)| = |Q_n(f)(x)−f(x)| ≤ 4/n\" for \"n ≥ ‖x‖₂\"",
    "eps-target": "§3, proof of main theorem — ε target \"(2mnHK(1+√d)max(L_n,J_n))^{−1}\"; assembly per \"Γ_n(f) = Φ_n(Q_n(f))\"",
    "flat-patch": "§1, \"Φ(x)=1 whenever |x₁|,|x₂| ≤ 3/2 and x₃=2, and thus all such points x belong to M\"",
    "avg-derivative": "§1, \"T(a,b,c) = ∫_C DΨ(x,y,0)(a,b,c) dxdy\"",
    "retraction-budget": "§1, \"Lip(Ψ) ≤ 1+ξ and ‖Ψ(x)−x‖~ ≤ ξ\"; houses Ψ, ξ, C, U",
    "projection": "§1, \"a norm-one projection onto ℝ²×{0}, a contradiction\"; and \"the subspace ℝ²×{0} is not 1-complemented\"; search invented — artifact plumbing",
}


def fmt17(x: float) -> str:
    """Format a float with 17 significant digits (round-trip exact)."""
    return "%.17g" % float(x)


@dataclass
class BoundRow:
    """One verified inequality: sampled side vs budgeted side.

    Pass criterion, evaluated exactly as stored:
        sampled_value <= paper_value * (1 + slack) + abs_tol
    """

    bound_name: str
    paper_value: float
    sampled_value: float
    witness: str = ""
    slack: float = 0.0
    abs_tol: float = 0.0
    seconds: float = 0.0
    suite: str = ""
    paper_ref: str = REFS["plumbing"]
    n: Optional[int] = None
    f_index: Optional[int] = None

    @property
    def budget(self) -> float:
        return self.paper_value * (1.0 + self.slack) + self.abs_tol

    @property
    def passed(self) -> bool:
        return bool(self.sampled_value <= self.budget)

    def tagged(self, suite: str = None, ref: str = None, n: int = None,
               f_index: int = None) -> "BoundRow":
        """Copy with report metadata filled in (None leaves a field alone)."""
        kw = {}
        if suite is not None:
            kw["suite"] = suite
        if ref is not None:
            kw["paper_ref"] = REFS[ref] if ref in REFS else ref
        if n is not None:
            kw["n"] = n
        if f_index is not None:
            kw["f_index"] = f_index
        return replace(self, **kw)


CSV_COLUMNS = ["schema_id", "suite", "bound_name", "paper_ref",
               "paper_value", "sampled_value", "witness", "slack",
               "pass", "seconds"]


def sort_rows(rows: Iterable[BoundRow]) -> List[BoundRow]:
    """Deterministic report order: (suite, bound_name, n, f index)."""
    return sorted(rows, key=lambda r: (
        r.suite, r.bound_name,
        r.n if r.n is not None else -1,
        r.f_index if r.f_index is not None else -1))


def _csv_cell(row: BoundRow, col: str, timings: bool) -> str:
    if col == "schema_id":
        return SCHEMA_ID
    if col == "pass":
        return "true" if row.passed else "false"
    if col == "seconds":
        return fmt17(row.seconds if timings else 0.0)
    v = getattr(row, col)
    if isinstance(v, float):
        return fmt17(v)
    return str(v)


def rows_to_csv(rows: Sequence[BoundRow], timings: bool = False) -> str:
    """Render rows as CSV text.  abs_tol is not a column; nonzero values
    are recorded in the witness by the row's producer."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in sort_rows(rows):
        w.writerow([_csv_cell(r, c, timings) for c in CSV_COLUMNS])
    return buf.getvalue()


def read_csv_rows(path: str) -> List[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _row_record(r: BoundRow) -> dict:
    return {"suite": r.suite, "bound_name": r.bound_name,
            "n": r.n, "f_index": r.f_index,
            "paper_ref": r.paper_ref,
            "paper_value": r.paper_value,
            "sampled_value": r.sampled_value,
            "witness": r.witness, "slack": r.slack,
            "abs_tol": r.abs_tol, "pass": r.passed}


def summarize(rows: Sequence[BoundRow], config_echo: str = "",
              extra: dict = None) -> dict:
    rows = sort_rows(rows)
    failures = [{"suite": r.suite, "bound_name": r.bound_name,
                 "n": r.n, "f_index": r.f_index,
                 "paper_value": fmt17(r.paper_value),
                 "sampled_value": fmt17(r.sampled_value),
                 "budget": fmt17(r.budget)}
                for r in rows if not r.passed]
    out = {
        "schema_id": SCHEMA_ID,
        "total": len(rows),
        "passed": sum(1 for r in rows if r.passed),
        "failed": len(failures),
        "failures": failures,
        "rows": [_row_record(r) for r in rows],
        "config_echo": config_echo,
    }
    if extra:
        out.update(extra)
    return out


def rows_from_summary(summary: dict) -> List[BoundRow]:
    """Rebuild report rows from a summary dict's `rows` records."""
    out = []
    for rec in summary.get("rows", []):
        out.append(BoundRow(
            bound_name=rec["bound_name"],
            paper_value=float(rec["paper_value"]),
            sampled_value=float(rec["sampled_value"]),
            witness=rec.get("witness", ""),
            slack=float(rec.get("slack", 0.0)),
            abs_tol=float(rec.get("abs_tol", 0.0)),
            suite=rec.get("suite", ""),
            paper_ref=rec.get("paper_ref", REFS["plumbing"]),
            n=rec.get("n"), f_index=rec.get("f_index")))
    return out


def write_report(rows: Sequence[BoundRow], csv_path: str,
                 summary_path: str = None, config_echo: str = "",
                 timings: bool = False, extra: dict = None) -> dict:
    """Write the CSV report and JSON summary; returns the summary dict."""
    text = rows_to_csv(rows, timings=timings)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)
    summary = summarize(rows, config_echo=config_echo, extra=extra)
    if summary_path:
        with open(summary_path, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True, ensure_ascii=False)
            fh.write("\n")
    return summary


def emit_plot_data(labelled_rows: Sequence[Tuple[str, Sequence[BoundRow]]]) -> dict:
    """(n, bound, sampled) series for external plotting; one labelled
    series per report, empty reports yield empty series."""
    series = []
    for label, rows in labelled_rows:
        pts = [{"n": r.n, "bound": r.bound_name, "sampled": r.sampled_value}
               for r in sort_rows(rows)]
        series.append({"label": label, "points": pts})
    return {"schema_id": SCHEMA_ID + "-plot", "series": series}
