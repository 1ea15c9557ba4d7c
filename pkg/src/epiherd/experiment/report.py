"""CSV, markdown and plot-data output for experiment runs."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from ..protocols import Variant
from .runner import ConditionSummary, coverage_bound
from .stats import TestReport


class ReportError(OSError):
    """Writing an output file failed; the message names the file."""


SUMMARY_COLUMNS = [
    "protocol", "p_base", "latency", "k", "side", "max_steps", "theta", "episodes",
    "success_rate", "tts_mean", "tts_sd", "final_jsd_mean", "final_jsd_sd",
    "final_alignment_mean", "final_alignment_sd", "meh_rate_all", "meh_rate_failed",
    "msgs_mean", "bytes_mean", "apb_mean",
]


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, Variant):
        return v.value
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(text: str):
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def summary_row(s: ConditionSummary) -> list[str]:
    k = s.key
    vals = [
        k.protocol, k.p_base, k.latency, k.k, k.side, k.max_steps,
        k.theta if k.protocol is Variant.C3 else None, s.episodes,
        s.success_rate, s.tts_mean, s.tts_sd, s.final_jsd_mean, s.final_jsd_sd,
        s.final_alignment_mean, s.final_alignment_sd, s.meh_rate_all, s.meh_rate_failed,
        s.msgs_mean, s.bytes_mean, s.apb_mean,
    ]
    return [_cell(v) for v in vals]


def _open(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return path.open("w", newline="")
    except OSError as e:
        raise ReportError(f"cannot write {path}: {e}") from e


def write_summaries_csv(path, summaries: Sequence[ConditionSummary]) -> Path:
    """Long-form CSV, one row per condition, RFC 4180 quoting and CRLF line ends."""
    path = Path(path)
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for s in summaries:
            w.writerow(summary_row(s))
    return path


def read_summaries_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return [{k: _parse(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def write_tsv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with _open(path) as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])
    return path


def read_tsv(path) -> tuple[list[str], list[list]]:
    """Inverse of :func:`write_tsv`: floats come back bit-identical."""
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh, delimiter="\t")
        header = next(r)
        return header, [[_parse(v) for v in row] for row in r]


# --- plot data ------------------------------------------------------------------


def outcome_series(summaries: Sequence[ConditionSummary], metric: str) -> list[tuple]:
    """Per-timestep mean of a trace metric, split by protocol and episode outcome.

    Rows are (condition label, outcome, t, mean, episodes contributing). An episode
    contributes to step t only while it is still running.
    """
    rows = []
    for s in summaries:
        acc: dict[tuple, list] = defaultdict(list)
        for o in s.outcomes:
            if not o.records:
                continue
            outcome = "success" if o.success else "failure"
            for rec in o.records:
                acc[(outcome, rec.t)].append(getattr(rec, metric))
        for (outcome, t), vals in sorted(acc.items()):
            rows.append((s.key.label(), outcome, t, math.fsum(vals) / len(vals), len(vals)))
    return rows


def scatter_rows(summaries: Sequence[ConditionSummary]) -> list[tuple]:
    return [
        (s.key.protocol, s.key.p_base, s.key.latency, s.key.k, s.success_rate, s.meh_rate_all, s.meh_rate_failed)
        for s in summaries
    ]


def theta_rows(summaries: Sequence[ConditionSummary]) -> list[tuple]:
    return [
        (s.key.theta, s.key.k, s.msgs_mean, s.success_rate, s.meh_rate_failed, s.meh_rate_all,
         s.final_jsd_mean, s.final_alignment_mean)
        for s in summaries if s.key.protocol is Variant.C3
    ]


# --- markdown ---------------------------------------------------------------------


def _fmt(v, digits=3) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return f"{v:.{digits}f}"
    return str(v)


def _apb(v) -> str:
    return "n/a" if v is None else f"{v * 1e6:.2f}"


def markdown_table(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(str(c) for c in r) + " |" for r in rows]
    return "\n".join(lines)


def _factorial_section(summaries: Sequence[ConditionSummary]) -> list[str]:
    out = []
    for k in sorted({s.key.k for s in summaries}):
        group = [s for s in summaries if s.key.k == k]
        base = lambda s: [s.key.protocol.value, f"{s.key.p_base * 100:g}", s.key.latency]
        out.append(f"### Task performance, k = {k}\n")
        out.append(markdown_table(
            ["Protocol", "Loss (%)", "Latency", "Success", "TTS mean", "TTS SD"],
            [base(s) + [_fmt(s.success_rate), _fmt(s.tts_mean, 1), _fmt(s.tts_sd, 1)] for s in group],
        ))
        out.append(f"\n### Epistemic alignment, k = {k}\n")
        out.append(markdown_table(
            ["Protocol", "Loss (%)", "Latency", "JSD mean", "JSD SD", "Align mean", "Align SD"],
            [base(s) + [_fmt(s.final_jsd_mean, 4), _fmt(s.final_jsd_sd, 4), _fmt(s.final_alignment_mean),
                        _fmt(s.final_alignment_sd)] for s in group],
        ))
        out.append(f"\n### MEH and communication cost, k = {k}\n")
        out.append(markdown_table(
            ["Protocol", "Loss (%)", "Latency", "MEH (failed)", "MEH (all)", "Msgs", "Bytes", "APB (x1e-6)"],
            [base(s) + [_fmt(s.meh_rate_failed), _fmt(s.meh_rate_all), _fmt(s.msgs_mean, 1),
                        _fmt(s.bytes_mean, 0), _apb(s.apb_mean)] for s in group],
        ))
        out.append("")
    return out


def _theta_section(summaries: Sequence[ConditionSummary]) -> list[str]:
    rows = []
    for s in summaries:
        label = f"{s.key.theta:.2f}" if s.key.protocol is Variant.C3 else f"{s.key.protocol.value} reference"
        rows.append([label, s.key.k, _fmt(s.success_rate), _fmt(s.tts_mean, 1), _fmt(s.final_jsd_mean, 4),
                     _fmt(s.final_alignment_mean), _fmt(s.meh_rate_failed), _fmt(s.meh_rate_all),
                     _fmt(s.msgs_mean, 1), _apb(s.apb_mean)])
    return [markdown_table(
        ["Theta", "k", "Success", "TTS", "JSD", "Align", "MEH (failed)", "MEH (all)", "Msgs", "APB (x1e-6)"], rows
    ), ""]


def _scaling_section(summaries: Sequence[ConditionSummary]) -> list[str]:
    rows = []
    for s in summaries:
        k = s.key
        rows.append([f"{k.side}x{k.side}", k.max_steps, f"{coverage_bound(k.side, k.max_steps) * 100:.1f}%",
                     k.protocol.value, _fmt(s.success_rate), _fmt(s.tts_mean, 1), _fmt(s.final_jsd_mean, 4),
                     _fmt(s.final_alignment_mean), _fmt(s.meh_rate_all), _fmt(s.meh_rate_failed),
                     _fmt(s.msgs_mean, 1)])
    return [markdown_table(
        ["Grid", "T", "Coverage bound", "Protocol", "Success", "TTS", "JSD", "Align", "MEH (all)",
         "MEH (failed)", "Msgs"], rows
    ), ""]


def _generic_section(summaries: Sequence[ConditionSummary]) -> list[str]:
    rows = [[s.key.label(), _fmt(s.success_rate), _fmt(s.tts_mean, 1), _fmt(s.final_jsd_mean, 4),
             _fmt(s.final_alignment_mean), _fmt(s.meh_rate_failed), _fmt(s.meh_rate_all), _fmt(s.msgs_mean, 1),
             _apb(s.apb_mean)] for s in summaries]
    return [markdown_table(
        ["Condition", "Success", "TTS", "JSD", "Align", "MEH (failed)", "MEH (all)", "Msgs", "APB (x1e-6)"], rows
    ), ""]


_SECTIONS = {"factorial": _factorial_section, "theta": _theta_section, "scaling": _scaling_section}


def markdown_report(sweeps: Mapping[str, Sequence[ConditionSummary]], tests: Optional[TestReport] = None) -> str:
    out = ["# Experiment report", ""]
    for name, summaries in sweeps.items():
        n = {s.episodes for s in summaries}
        out.append(f"## {name} ({', '.join(str(x) for x in sorted(n))} episodes per condition)\n")
        out += _SECTIONS.get(name, _generic_section)(summaries)
    if tests is not None and tests.results:
        rejected = sum(r.rejected for r in tests.results)
        out.append(f"## Protocol comparisons (Benjamini-Hochberg, q = {tests.q:g})\n")
        out.append(f"{rejected} of {len(tests.results)} comparisons significant.\n")
        out.append(markdown_table(
            ["Comparison", "p", "Significant"],
            [[r.label, f"{r.p_value:.3g}", "yes" if r.rejected else "no"] for r in tests.results],
        ))
        out.append("")
    return "\n".join(out)


def emit_report(out_dir, sweeps: Mapping[str, Sequence[ConditionSummary]], tests: Optional[TestReport] = None) -> list[Path]:
    """Write CSVs, the markdown report and TSV plot data under ``out_dir``."""
    if not any(sweeps.values()):
        raise ValueError("emit_report needs at least one summary")
    out = Path(out_dir)
    written = []
    for name, summaries in sweeps.items():
        written.append(write_summaries_csv(out / f"{name}.csv", summaries))
        written.append(write_tsv(
            out / f"{name}_success_vs_meh.tsv",
            ["protocol", "p_base", "latency", "k", "success_rate", "meh_rate_all", "meh_rate_failed"],
            scatter_rows(summaries),
        ))
        if any(s.key.protocol is Variant.C3 for s in summaries) and name == "theta":
            written.append(write_tsv(
                out / "theta_curves.tsv",
                ["theta", "k", "msgs_mean", "success_rate", "meh_rate_failed", "meh_rate_all",
                 "final_jsd_mean", "final_alignment_mean"],
                theta_rows(summaries),
            ))
        traced = [s for s in summaries if any(o.records for o in s.outcomes)]
        if traced:
            for metric, fname in (("mean_pairwise_jsd", "jsd_by_outcome"), ("mean_alignment", "alignment_by_outcome")):
                written.append(write_tsv(
                    out / f"{name}_{fname}.tsv", ["condition", "outcome", "t", "mean", "episodes"],
                    outcome_series(traced, metric),
                ))
    report = out / "report.md"
    with _open(report) as fh:
        try:
            fh.write(markdown_report(sweeps, tests))
        except OSError as e:
            raise ReportError(f"cannot write {report}: {e}") from e
    written.append(report)
    return written
