"""Rendering of optimization runs: tab-separated text, JSON and figures."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

from .driver import OUTCOMES, RunReport

COLUMNS = ("function", "value", "outcome", "cost_before", "cost_after", "applied",
           "verdict", "inputs_checked", "candidates", "elapsed", "rewrite")


def text_report(reports: Sequence[RunReport]) -> str:
    lines = ["\t".join(COLUMNS)]
    for rep in reports:
        for o in rep.outcomes:
            lines.append("\t".join(str(x) for x in (
                rep.function, o.value, o.outcome, o.cost_before, o.cost_after, int(o.applied),
                o.verdict or "-", o.inputs_checked, o.candidates, f"{o.elapsed:.3f}", o.rewrite or "-")))
    lines.append("")
    lines.append("\t".join(("function", "target", "examined", *OUTCOMES, "applied", "uops_before",
                            "uops_after", "synth_calls", "wall_time")))
    for rep in reports:
        lines.append("\t".join(str(x) for x in (
            rep.function, rep.target, rep.examined, *(rep.count(k) for k in OUTCOMES),
            rep.rewrites_applied, rep.uops_before, rep.uops_after, rep.synth_calls,
            f"{rep.wall_time:.3f}")))
    return "\n".join(lines) + "\n"


def json_report(reports: Sequence[RunReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2) + "\n"


def render(reports: Sequence[RunReport], fmt: str) -> str:
    if fmt == "json":
        return json_report(reports)
    if fmt == "text":
        return text_report(reports)
    raise ValueError(f"unknown report format {fmt!r}")


def plot_reports(reports: Sequence[RunReport], out_dir) -> list[Path]:
    """Write one uOp figure per run plus a summary; returns the paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for rep in reports:
        if not rep.outcomes:
            continue
        vals = rep.outcomes
        xs = range(len(vals))
        fig, ax = plt.subplots(figsize=(max(4, 0.6 * len(vals) + 2), 3.2))
        ax.bar([x - 0.2 for x in xs], [o.cost_before for o in vals], width=0.4, label="slice")
        ax.bar([x + 0.2 for x in xs], [o.cost_after for o in vals], width=0.4, label="rewrite")
        ax.set_xticks(list(xs))
        ax.set_xticklabels([f"%{o.value}" for o in vals], rotation=45, ha="right")
        ax.set_ylabel("uOps")
        ax.set_title(f"@{rep.function} ({rep.target})")
        ax.legend(frameon=False)
        fig.tight_layout()
        p = out / f"{rep.function}.uops.png"
        fig.savefig(p, dpi=120)
        plt.close(fig)
        paths.append(p)
    if reports:
        fig, ax = plt.subplots(figsize=(max(4, 0.8 * len(reports) + 2), 3.2))
        xs = range(len(reports))
        ax.bar([x - 0.2 for x in xs], [r.uops_before for r in reports], width=0.4, label="input")
        ax.bar([x + 0.2 for x in xs], [r.uops_after for r in reports], width=0.4, label="optimized")
        ax.set_xticks(list(xs))
        ax.set_xticklabels([f"@{r.function}" for r in reports], rotation=45, ha="right")
        ax.set_ylabel("uOps")
        ax.set_title("whole-function cost")
        ax.legend(frameon=False)
        fig.tight_layout()
        p = out / "summary.uops.png"
        fig.savefig(p, dpi=120)
        plt.close(fig)
        paths.append(p)
    return paths
