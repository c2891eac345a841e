"""Run-result containers and the versioned plain-text report format.

Reports are UTF-8 with LF endings, headed by ``sgfb-report v1``, built
from bracketed sections of ``key = value`` lines and whitespace-separated
table rows.  Confusion counts are stored as exact integers (ratios shown
at 4 decimals are display only and are recomputed on read); every other
float is serialized with ``repr`` so ``read_report`` inverts
``write_report`` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .errors import ParameterError, ReportFormatError

REPORT_HEADER = "sgfb-report v1"


@dataclass(frozen=True)
class Metrics:
    """Confusion counts with derived accuracy/sensitivity/specificity.

    Ratios are properties so that any undefined denominator surfaces as
    None rather than a silent zero.
    """

    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        for name in ("tp", "tn", "fp", "fn"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 0:
                raise ParameterError(f"{name} must be a non-negative int, got {v!r}")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def acc(self) -> Optional[float]:
        t = self.total
        return (self.tp + self.tn) / t if t > 0 else None

    @property
    def sen(self) -> Optional[float]:
        d = self.tp + self.fn
        return self.tp / d if d > 0 else None

    @property
    def spe(self) -> Optional[float]:
        d = self.tn + self.fp
        return self.tn / d if d > 0 else None


@dataclass(frozen=True)
class FoldResult:
    """Metrics of one cross-validation fold and the weights it used."""

    index: int
    metrics: Metrics
    lam: float
    lam1: float


@dataclass(frozen=True)
class GridResult:
    """Hyperparameter search outcome: surface plus selections."""

    lambda_grid: tuple[float, ...]
    lambda1_grid: tuple[float, ...]
    surface: tuple[tuple[float, ...], ...]  # [i][j]: mean inner acc
    best_lam: float
    best_lam1: float
    fold_choices: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class FractionRow:
    """Aggregate metrics of one training-set fraction."""

    fraction: float
    repeats: int
    acc_mean: float
    acc_std: float
    sen_mean: Optional[float]
    sen_std: Optional[float]
    spe_mean: Optional[float]
    spe_std: Optional[float]


@dataclass(frozen=True)
class RunResults:
    """Everything one pipeline run reports."""

    config: dict[str, str]
    folds: tuple[FoldResult, ...] = ()
    summary: dict[str, Optional[float]] = field(default_factory=dict)
    grid: Optional[GridResult] = None
    fractions: Optional[tuple[FractionRow, ...]] = None
    diagnostics: dict[str, float] = field(default_factory=dict)
    flags: dict[str, int] = field(default_factory=dict)
    timings: Optional[dict[str, float]] = None


def _fmt_opt(v) -> str:
    return "undef" if v is None else repr(float(v))


def _parse_opt(s: str):
    return None if s == "undef" else float(s)


def _disp(v) -> str:
    return "undef" if v is None else f"{v:.4f}"


def format_report(results: RunResults) -> str:
    """Render a RunResults to the versioned report text."""
    lines = [REPORT_HEADER, ""]

    lines.append("[config]")
    for k, v in results.config.items():
        lines.append(f"{k} = {v}")
    lines.append("")

    if results.folds:
        lines.append("[folds]")
        lines.append("fold tp tn fp fn lambda lambda1 acc sen spe")
        for fr in results.folds:
            m = fr.metrics
            lines.append(
                f"{fr.index} {m.tp} {m.tn} {m.fp} {m.fn} "
                f"{fr.lam!r} {fr.lam1!r} "
                f"{_disp(m.acc)} {_disp(m.sen)} {_disp(m.spe)}"
            )
        lines.append("")

    if results.summary:
        lines.append("[summary]")
        for k, v in results.summary.items():
            lines.append(f"{k} = {_fmt_opt(v)}")
        lines.append("")

    if results.grid is not None:
        g = results.grid
        lines.append("[grid]")
        lines.append("lambda_grid = " + ",".join(repr(v) for v in g.lambda_grid))
        lines.append("lambda1_grid = " + ",".join(repr(v) for v in g.lambda1_grid))
        lines.append(f"best_lambda = {g.best_lam!r}")
        lines.append(f"best_lambda1 = {g.best_lam1!r}")
        for k, (lam, lam1) in enumerate(g.fold_choices):
            lines.append(f"fold_choice {k} {lam!r} {lam1!r}")
        for i, row in enumerate(g.surface):
            for j, v in enumerate(row):
                lines.append(f"surface {i} {j} {v!r}")
        lines.append("")

    if results.fractions is not None:
        lines.append("[fractions]")
        lines.append(
            "fraction repeats acc_mean acc_std sen_mean sen_std spe_mean spe_std"
        )
        for row in results.fractions:
            lines.append(
                f"{row.fraction!r} {row.repeats} {row.acc_mean!r} "
                f"{row.acc_std!r} {_fmt_opt(row.sen_mean)} {_fmt_opt(row.sen_std)} "
                f"{_fmt_opt(row.spe_mean)} {_fmt_opt(row.spe_std)}"
            )
        lines.append("")

    if results.diagnostics:
        lines.append("[diagnostics]")
        for k, v in results.diagnostics.items():
            lines.append(f"{k} = {v!r}")
        lines.append("")

    lines.append("[flags]")
    for k, v in results.flags.items():
        lines.append(f"{k} = {v}")
    lines.append("")

    if results.timings is not None:
        lines.append("[timings]")
        for k, v in results.timings.items():
            lines.append(f"{k} = {v!r}")
        lines.append("")

    return "\n".join(lines)


def write_report(results: RunResults, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(format_report(results))


def _split_sections(text: str):
    lines = text.split("\n")
    if not lines or lines[0] != REPORT_HEADER:
        raise ReportFormatError(
            f"missing report header {REPORT_HEADER!r}; got "
            f"{lines[0]!r}" if lines else "empty report"
        )
    sections: dict[str, list[str]] = {}
    order: list[str] = []
    current = None
    for ln_no, raw in enumerate(lines[1:], start=2):
        line = raw.rstrip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            if current in sections:
                raise ReportFormatError(
                    f"line {ln_no}: duplicate section [{current}]"
                )
            sections[current] = []
            order.append(current)
            continue
        if current is None:
            raise ReportFormatError(f"line {ln_no}: content before any section")
        sections[current].append(line)
    return sections


def _kv(lines, section):
    out = {}
    for line in lines:
        if " = " not in line:
            raise ReportFormatError(
                f"[{section}] expected 'key = value', got {line!r}"
            )
        k, _, v = line.partition(" = ")
        out[k] = v
    return out


def parse_report(text: str) -> RunResults:
    """Parse report text back into RunResults (inverse of format_report)."""
    sections = _split_sections(text)
    if "config" not in sections or "flags" not in sections:
        raise ReportFormatError("report must contain [config] and [flags]")

    config = _kv(sections["config"], "config")

    folds = []
    if "folds" in sections:
        rows = sections["folds"]
        if not rows or rows[0].split() != [
            "fold", "tp", "tn", "fp", "fn", "lambda", "lambda1", "acc", "sen", "spe",
        ]:
            raise ReportFormatError("[folds] header row is malformed")
        for line in rows[1:]:
            cells = line.split()
            if len(cells) != 10:
                raise ReportFormatError(f"[folds] row has {len(cells)} cells: {line!r}")
            folds.append(
                FoldResult(
                    index=int(cells[0]),
                    metrics=Metrics(
                        tp=int(cells[1]), tn=int(cells[2]),
                        fp=int(cells[3]), fn=int(cells[4]),
                    ),
                    lam=float(cells[5]),
                    lam1=float(cells[6]),
                )
            )

    summary = {}
    if "summary" in sections:
        summary = {
            k: _parse_opt(v) for k, v in _kv(sections["summary"], "summary").items()
        }

    grid = None
    if "grid" in sections:
        kv = {}
        fold_choices = []
        cells_by_ij = {}
        for line in sections["grid"]:
            if line.startswith("fold_choice "):
                _, k, lam, lam1 = line.split()
                fold_choices.append((int(k), float(lam), float(lam1)))
            elif line.startswith("surface "):
                _, i, j, v = line.split()
                cells_by_ij[(int(i), int(j))] = float(v)
            elif " = " in line:
                k, _, v = line.partition(" = ")
                kv[k] = v
            else:
                raise ReportFormatError(f"[grid] unexpected line {line!r}")
        try:
            lam_grid = tuple(float(v) for v in kv["lambda_grid"].split(","))
            lam1_grid = tuple(float(v) for v in kv["lambda1_grid"].split(","))
            best_lam = float(kv["best_lambda"])
            best_lam1 = float(kv["best_lambda1"])
        except KeyError as exc:
            raise ReportFormatError(f"[grid] missing key {exc}") from exc
        surface = tuple(
            tuple(cells_by_ij[(i, j)] for j in range(len(lam1_grid)))
            for i in range(len(lam_grid))
        )
        fold_choices.sort(key=lambda t: t[0])
        grid = GridResult(
            lambda_grid=lam_grid,
            lambda1_grid=lam1_grid,
            surface=surface,
            best_lam=best_lam,
            best_lam1=best_lam1,
            fold_choices=tuple((lam, lam1) for _, lam, lam1 in fold_choices),
        )

    fractions = None
    if "fractions" in sections:
        rows = sections["fractions"]
        if not rows or rows[0].split() != [
            "fraction", "repeats", "acc_mean", "acc_std",
            "sen_mean", "sen_std", "spe_mean", "spe_std",
        ]:
            raise ReportFormatError("[fractions] header row is malformed")
        parsed = []
        for line in rows[1:]:
            cells = line.split()
            if len(cells) != 8:
                raise ReportFormatError(f"[fractions] row malformed: {line!r}")
            parsed.append(
                FractionRow(
                    fraction=float(cells[0]),
                    repeats=int(cells[1]),
                    acc_mean=float(cells[2]),
                    acc_std=float(cells[3]),
                    sen_mean=_parse_opt(cells[4]),
                    sen_std=_parse_opt(cells[5]),
                    spe_mean=_parse_opt(cells[6]),
                    spe_std=_parse_opt(cells[7]),
                )
            )
        fractions = tuple(parsed)

    diagnostics = {}
    if "diagnostics" in sections:
        diagnostics = {
            k: float(v)
            for k, v in _kv(sections["diagnostics"], "diagnostics").items()
        }

    flags = {k: int(v) for k, v in _kv(sections["flags"], "flags").items()}

    timings = None
    if "timings" in sections:
        timings = {
            k: float(v) for k, v in _kv(sections["timings"], "timings").items()
        }

    return RunResults(
        config=config,
        folds=tuple(folds),
        summary=summary,
        grid=grid,
        fractions=fractions,
        diagnostics=diagnostics,
        flags=flags,
        timings=timings,
    )


def read_report(path) -> RunResults:
    with open(path, "r", encoding="utf-8", newline="\n") as f:
        return parse_report(f.read())
