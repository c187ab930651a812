"""
Evaluation matrix: bundled cases x failure detection x learning mode, with
mean search statistics per cell and the shortest solution from the oracle.
"""
import csv
import io
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel

import spec_dsl
from errors import ConfigurationError, WorkbenchError
from search_engine import EvaluationCache, Learning, SearchConfig, SearchStats, SearchStatus, solve_bfs, solve_iddfs
from space_model import ProblemInstance

SPEC_DIR = Path(__file__).resolve().parent / "specs"


@dataclass(frozen=True)
class BenchCase:
    label: str
    spec_path: Path
    instance: Optional[str] = None  # instance name or label; first instance when None

    def load(self) -> ProblemInstance:
        return spec_dsl.load(self.spec_path).instance(self.instance)


BUNDLED_CASES: Tuple[BenchCase, ...] = (
    BenchCase("F(4,9)->6", SPEC_DIR / "F_4_9.pspace"),
    BenchCase("F(3,5)->4", SPEC_DIR / "F_3_5.pspace"),
    BenchCase("F(9,17)->5", SPEC_DIR / "F_9_17.pspace"),
    BenchCase("V(4qt,9gal)->6gal", SPEC_DIR / "V_4qt_9gal.pspace"),
    BenchCase("V(2,3,5)->4", SPEC_DIR / "V_2_3_5.pspace"),
    BenchCase("A(4,9)->6", SPEC_DIR / "A_4_9.pspace"),
)


@dataclass(frozen=True)
class BenchConfig:
    failure_detection: bool
    learning: Learning

    @property
    def label(self) -> str:
        return f"FD {'on' if self.failure_detection else 'off'} {self.learning.value}"


DEFAULT_CONFIGS: Tuple[BenchConfig, ...] = tuple(
    BenchConfig(fd, learning)
    for fd, learning in itertools.product((True, False), (Learning.NONE, Learning.DURING, Learning.PERSIST))
)

# Soar decisions and search states per case, as originally reported; a different
# machine model, printed for orientation only.
SOAR_REFERENCE: Dict[str, Dict[str, Tuple[str, str]]] = {
    "F(4,9)->6": {
        "FD on none": ("20657", "5104"), "FD on during": ("1357", "332"), "FD on persist": ("9", "0"),
        "FD off none": ("80434", "19055"), "FD off during": ("2126", "556"), "FD off persist": ("9", "0"),
    },
    "F(3,5)->4": {
        "FD on none": ("3355", "841"), "FD on during": ("548", "89"), "FD on persist": ("7", "0"),
        "FD off none": ("8072", "1916"), "FD off during": ("1087", "193"), "FD off persist": ("7", "0"),
    },
    "F(9,17)->5": {
        "FD on none": ("86.9M", "21.4M"), "FD on during": ("8201", "1254"), "FD on persist": ("21", "0"),
        "FD off none": ("600M+", "n/a"), "FD off during": ("7147", "1114"), "FD off persist": ("21", "0"),
    },
    "V(4qt,9gal)->6gal": {
        "FD on none": ("3422", "862"), "FD on during": ("526", "97"), "FD on persist": ("7", "0"),
        "FD off none": ("8071", "1929"), "FD off during": ("801", "136"), "FD off persist": ("7", "0"),
    },
    "V(2,3,5)->4": {
        "FD on none": ("1599", "363"), "FD on during": ("908", "212"), "FD on persist": ("5", "0"),
        "FD off none": ("1890", "421"), "FD off during": ("860", "199"), "FD off persist": ("5", "0"),
    },
}


@dataclass(frozen=True)
class BenchMatrix:
    cases: Sequence[BenchCase] = BUNDLED_CASES
    configs: Sequence[BenchConfig] = DEFAULT_CONFIGS
    repetitions: int = 5
    expansion_cap: int = 5_000_000
    seed: Optional[int] = None  # None: lexicographic ordering in every repetition
    max_depth: int = 64
    workers: int = 1

    def __post_init__(self):
        labels = [c.label for c in self.cases]
        if len(set(labels)) != len(labels):
            raise ConfigurationError("bench case labels must be unique")
        if self.repetitions < 1:
            raise ConfigurationError("repetitions must be at least 1")


# ========== Report ==========

class CellResult(BaseModel):
    config: str
    failure_detection: bool
    learning: Learning
    runs: int
    mean_expansions: float
    mean_generated: float
    mean_new_states: float
    mean_cache_hits: float
    solution_length: Optional[int] = None
    status: SearchStatus


class RowResult(BaseModel):
    label: str
    min_solution: Optional[int] = None
    cells: List[CellResult] = []
    error: Optional[str] = None


class BenchReport(BaseModel):
    repetitions: int
    ordering: str
    columns: List[str]
    rows: List[RowResult] = []

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["case", "min_solution", "failure_detection", "learning", "runs", "mean_expansions",
                         "mean_generated", "mean_new_states", "mean_cache_hits", "solution_length", "status"])
        for row in self.rows:
            if row.error is not None:
                writer.writerow([row.label, "", "", "", 0, "", "", "", "", "", f"error: {row.error}"])
                continue
            for cell in row.cells:
                writer.writerow([row.label, _blank(row.min_solution), "on" if cell.failure_detection else "off",
                                 cell.learning.value, cell.runs, f"{cell.mean_expansions:.1f}",
                                 f"{cell.mean_generated:.1f}", f"{cell.mean_new_states:.1f}",
                                 f"{cell.mean_cache_hits:.1f}", _blank(cell.solution_length), cell.status.value])
        return out.getvalue()

    def to_text(self) -> str:
        sections = [
            self._table(f"Mean expansions ({self.repetitions} repetitions, {self.ordering} ordering)",
                        lambda c: f"{c.mean_expansions:.1f}"),
            self._table("Mean newly generated states", lambda c: f"{c.mean_new_states:.1f}"),
            self._reference(),
        ]
        return "\n\n".join(s for s in sections if s) + "\n"

    def _table(self, title: str, value) -> str:
        header = ["case", "Min. Soln"] + self.columns
        lines = [header]
        for row in self.rows:
            if row.error is not None:
                lines.append([row.label, "-", f"error: {row.error}"])
                continue
            by_config = {c.config: c for c in row.cells}
            cells = []
            for column in self.columns:
                cell = by_config.get(column)
                if cell is None:
                    cells.append("-")
                elif cell.status is SearchStatus.BUDGET_EXCEEDED:
                    cells.append("budget-exceeded")
                else:
                    cells.append(value(cell))
            lines.append([row.label, _blank(row.min_solution) or "-"] + cells)
        return title + "\n" + _align(lines)

    def _reference(self) -> str:
        rows = [row.label for row in self.rows if row.label in SOAR_REFERENCE]
        if not rows:
            return ""
        lines = [["case"] + self.columns]
        for label in rows:
            ref = SOAR_REFERENCE[label]
            lines.append([label] + ["/".join(ref[c]) if c in ref else "-" for c in self.columns])
        title = "Reported Soar decisions/states (different machine model, not comparable)"
        return title + "\n" + _align(lines)


def _blank(value: Optional[int]) -> str:
    return "" if value is None else str(value)


def _align(lines: List[List[str]]) -> str:
    widths = [max(len(line[i]) for line in lines if i < len(line)) for i in range(max(map(len, lines)))]
    out = []
    for line in lines:
        parts = [line[0].ljust(widths[0])] + [text.rjust(widths[i]) for i, text in enumerate(line) if i > 0]
        out.append("  ".join(parts).rstrip())
    return "\n".join(out)


# ========== Running ==========

def run_cell(instance: ProblemInstance, config: BenchConfig, matrix: BenchMatrix) -> CellResult:
    samples: List[SearchStats] = []
    for rep in range(matrix.repetitions):
        search = SearchConfig(
            failure_detection=config.failure_detection,
            learning=config.learning,
            max_depth=matrix.max_depth,
            seed=None if matrix.seed is None else matrix.seed + rep,
            max_expansions=matrix.expansion_cap,
        )
        cache = None
        if config.learning is Learning.PERSIST:
            # warm-up solve; the measured run re-solves with what it learned
            cache = EvaluationCache()
            solve_iddfs(instance, search, cache)
        _, stats = solve_iddfs(instance, search, cache)
        samples.append(stats)
        if stats.status is SearchStatus.BUDGET_EXCEEDED:
            logger.warning(f"{instance.title} [{config.label}]: more than {matrix.expansion_cap} expansions, "
                           f"skipping remaining repetitions")
            break

    def mean(attr: str) -> float:
        return float(np.mean([getattr(s, attr) for s in samples]))

    return CellResult(
        config=config.label,
        failure_detection=config.failure_detection,
        learning=config.learning,
        runs=len(samples),
        mean_expansions=mean("expansions"),
        mean_generated=mean("generated"),
        mean_new_states=mean("new_states"),
        mean_cache_hits=mean("cache_hits"),
        solution_length=samples[-1].solution_length,
        status=samples[-1].status,
    )


def run_row(case: BenchCase, matrix: BenchMatrix) -> RowResult:
    try:
        instance = case.load()
        solution, _ = solve_bfs(instance)
        row = RowResult(label=case.label, min_solution=solution.length if solution else None)
        for config in matrix.configs:
            row.cells.append(run_cell(instance, config, matrix))
            logger.info(f"{case.label} [{config.label}] done")
        return row
    except (WorkbenchError, OSError) as e:
        logger.error(f"{case.label}: {e}")
        return RowResult(label=case.label, error=str(e))


def run_matrix(matrix: BenchMatrix) -> BenchReport:
    report = BenchReport(
        repetitions=matrix.repetitions,
        ordering="lexicographic" if matrix.seed is None else f"seeded({matrix.seed}+rep)",
        columns=[c.label for c in matrix.configs],
    )
    if not matrix.cases:
        return report
    with ThreadPoolExecutor(max_workers=max(1, matrix.workers)) as pool:
        report.rows = list(pool.map(lambda case: run_row(case, matrix), matrix.cases))
    return report
