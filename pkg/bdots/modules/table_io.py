"""CSV input and output for the command line.

Observations come in long format, one row per (subject, time):
``subject,group,time,value`` plus an optional ``pair_id`` column. Row numbers in
error messages are file line numbers (the header is line 1).
"""
import logging
import os
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd

from ..errors import MalformedInput
from .fitting import SubjectSeries

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("subject", "group", "time", "value")
SEPARATORS = {".csv": ",", ".tsv": "\t", ".txt": ","}


def _separator(path: str) -> str:
    file_extension = os.path.splitext(path)[1].lower()
    if file_extension not in SEPARATORS:
        raise MalformedInput(f"Unsupported table format: '{file_extension}'. Please provide a .csv or .tsv file.")
    return SEPARATORS[file_extension]


def read_long_csv(path: str) -> List[SubjectSeries]:
    """Read a long-format table into one SubjectSeries per subject, in order of first appearance."""
    try:
        df = pd.read_csv(path, sep=_separator(path), dtype={"subject": str, "group": str, "pair_id": str})
    except FileNotFoundError:
        raise MalformedInput(f"input file not found: {path}")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise MalformedInput(f"could not parse {path}: {e}")

    df.columns = [str(c).strip() for c in df.columns]
    missing = [c for c in REQUIRED_COLUMNS if c not in df.columns]
    if missing:
        raise MalformedInput(f"missing column(s): {', '.join(missing)}")
    if df.empty:
        raise MalformedInput(f"{path} has no observations")
    df["line"] = np.arange(len(df)) + 2

    for col in ("subject", "group"):
        blank = df[col].isna() | (df[col].astype(str).str.strip() == "")
        if blank.any():
            raise MalformedInput(f"empty {col}", row=int(df.loc[blank, "line"].iloc[0]))
    for col in ("time", "value"):
        numeric = pd.to_numeric(df[col], errors="coerce")
        bad = numeric.isna() | ~np.isfinite(numeric.fillna(0.0))
        if bad.any():
            raise MalformedInput(f"{col} is not a finite number", row=int(df.loc[bad, "line"].iloc[0]))
        df[col] = numeric.astype(float)

    dup = df.duplicated(subset=["subject", "time"], keep="first")
    if dup.any():
        row = df.loc[dup].iloc[0]
        raise MalformedInput(f"duplicate observation for subject {row['subject']} at time {row['time']:g}",
                             row=int(row["line"]))

    has_pairs = "pair_id" in df.columns
    series: List[SubjectSeries] = []
    for subject, rows in df.groupby("subject", sort=False):
        groups = rows["group"].unique()
        if len(groups) > 1:
            raise MalformedInput(f"subject {subject} appears in more than one group ({', '.join(groups)})",
                                 row=int(rows.loc[rows["group"] != groups[0], "line"].iloc[0]))
        pair_id = None
        if has_pairs:
            pairs = rows["pair_id"].dropna().unique()
            if len(pairs) > 1:
                raise MalformedInput(f"subject {subject} has more than one pair_id", row=int(rows["line"].iloc[0]))
            pair_id = str(pairs[0]) if len(pairs) else None
        rows = rows.sort_values("time", kind="stable")
        series.append(SubjectSeries(subject_id=str(subject), group=str(groups[0]),
                                    times=rows["time"].to_numpy(), values=rows["value"].to_numpy(),
                                    pair_id=pair_id))
    logger.info("read %d observations for %d subjects from %s", len(df), len(series), path)
    return series


def common_grid(series: Sequence[SubjectSeries]) -> np.ndarray:
    """The time grid shared by every subject."""
    grid = series[0].times
    for s in series[1:]:
        if s.times.shape != grid.shape or not np.allclose(s.times, grid, rtol=0.0, atol=1e-9):
            raise MalformedInput(f"subject {s.subject_id} is not observed on the same time grid as "
                                 f"subject {series[0].subject_id}")
    return grid


def by_group(items) -> Dict[str, list]:
    out: Dict[str, list] = {}
    for item in items:
        out.setdefault(item.group, []).append(item)
    return out


def read_p_values(path: str) -> np.ndarray:
    """One column of p-values, with or without a header line."""
    try:
        df = pd.read_csv(path, header=None, usecols=[0], dtype=str, skip_blank_lines=False)
    except FileNotFoundError:
        raise MalformedInput(f"input file not found: {path}")
    except pd.errors.EmptyDataError:
        return np.empty(0, dtype=float)
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise MalformedInput(f"could not parse {path}: {e}")

    cells = df[0].str.strip()
    cells.index = np.arange(len(cells)) + 1
    cells = cells[cells.notna() & (cells != "")]
    values = pd.to_numeric(cells, errors="coerce")
    # a non-numeric first line is a header
    if len(values) and values.index[0] == 1 and np.isnan(values.iloc[0]):
        cells, values = cells.iloc[1:], values.iloc[1:]
    bad = values.isna()
    if bad.any():
        line = int(values.index[bad][0])
        raise MalformedInput(f"not a number: '{cells.loc[line]}'", row=line)
    return values.to_numpy(dtype=float)


def write_p_values(path: str, p, p_adjusted, alpha: float) -> None:
    p = np.asarray(p, dtype=float)
    p_adjusted = np.asarray(p_adjusted, dtype=float)
    pd.DataFrame({"p": p, "p_adjusted": p_adjusted, "significant": p_adjusted <= alpha}).to_csv(path, index=False)
    logger.info("wrote %d adjusted p-value(s) to %s", p.size, path)
