"""CSV reading and writing: datasets, weight files, and summary tables.

Machine-facing files are written at full precision (repr round-trips floats
exactly); 5-decimal formatting is reserved for terminal output via fmt5.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ParseError
from .model import BalanceWeights, Dataset, WeightScheme, validate_dataset


@dataclass(frozen=True)
class CsvSchema:
    """Column roles for a dataset CSV.

    covariate_columns=None means every column that is neither the treatment
    nor the outcome, in header order.
    """

    treatment_column: str = "T"
    outcome_column: str = "Y"
    covariate_columns: tuple | None = None
    delimiter: str = ","
    header: bool = True

    def __post_init__(self):
        if self.covariate_columns is not None:
            object.__setattr__(self, "covariate_columns", tuple(self.covariate_columns))
        if len(self.delimiter) != 1:
            raise ValueError("delimiter must be a single character")


def nsw_schema() -> CsvSchema:
    """Schema for the job-training study layout commonly shipped as CSV."""
    return CsvSchema(
        treatment_column="treat",
        outcome_column="RE78",
        covariate_columns=(
            "age", "education", "black", "hispanic", "married", "nodegree", "RE74", "RE75",
        ),
    )


def _parse_treatment(token: str, row: int, column: str) -> int:
    tok = token.strip()
    if tok == "0":
        return 0
    if tok == "1":
        return 1
    raise ParseError(
        f"row {row}, column '{column}': treatment must be '0' or '1', got {token!r}",
        row=row,
        column=column,
    )


def _parse_float(token: str, row: int, column: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(
            f"row {row}, column '{column}': expected a number, got {token!r}",
            row=row,
            column=column,
        ) from None


def _resolve_columns(names: list, schema: CsvSchema, path) -> tuple:
    """Check the schema against header names; returns the covariate tuple."""
    for col in (schema.treatment_column, schema.outcome_column):
        if col not in names:
            raise ParseError(f"{path}: missing column '{col}'", column=col)
    if schema.covariate_columns is None:
        covs = tuple(
            c for c in names if c not in (schema.treatment_column, schema.outcome_column)
        )
    else:
        covs = schema.covariate_columns
        for col in covs:
            if col not in names:
                raise ParseError(f"{path}: missing column '{col}'", column=col)
    if not covs:
        raise ParseError(f"{path}: no covariate columns")
    return covs


def _read_rows(path, schema: CsvSchema) -> tuple:
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError(f"{path}: no data rows")
    if schema.header:
        return [c.strip() for c in rows[0]], rows[1:]
    return [f"col{i}" for i in range(len(rows[0]))], rows


def covariate_names(path, schema: CsvSchema | None = None) -> list:
    """The covariate column names read_csv would use for this file."""
    schema = schema or CsvSchema()
    names, _ = _read_rows(path, schema)
    return list(_resolve_columns(names, schema, path))


def read_csv(path, schema: CsvSchema | None = None) -> Dataset:
    """Load a dataset from a delimited text file.

    Rows are validated cell by cell; errors name the 1-based data row (not
    counting the header) and the column. Without a header, columns are named
    by position as col0, col1, ... and the schema must use those names.
    """
    schema = schema or CsvSchema()
    names, body = _read_rows(path, schema)
    if not body:
        raise ParseError(f"{path}: no data rows")
    covs = _resolve_columns(names, schema, path)
    pos = {c: names.index(c) for c in names}
    width = len(names)
    T = np.empty(len(body), dtype=int)
    Y = np.empty(len(body), dtype=float)
    X = np.empty((len(body), len(covs)), dtype=float)
    for i, raw in enumerate(body):
        rownum = i + 1
        if len(raw) != width:
            raise ParseError(
                f"row {rownum}: expected {width} fields, got {len(raw)}", row=rownum
            )
        T[i] = _parse_treatment(raw[pos[schema.treatment_column]], rownum, schema.treatment_column)
        Y[i] = _parse_float(raw[pos[schema.outcome_column]], rownum, schema.outcome_column)
        for j, col in enumerate(covs):
            X[i, j] = _parse_float(raw[pos[col]], rownum, col)
    return validate_dataset(X, T, Y)


def write_weights(path, w: BalanceWeights, data: Dataset) -> None:
    """Write weights in dataset row order: unit index, group flag, weight.

    A leading comment line records the scheme and the penalty so the file is
    self-describing; weights are repr'd so reading them back is exact.
    """
    t_idx = data.treated_index()
    c_idx = data.control_index()
    weight = np.empty(data.n, dtype=float)
    weight[t_idx] = w.p
    weight[c_idx] = w.q
    with open(path, "w", newline="") as fh:
        fh.write(f"# scheme={w.scheme.value},lambda={w.lam!r}\n")
        writer = csv.writer(fh)
        writer.writerow(["unit", "group", "weight"])
        for i in range(data.n):
            writer.writerow([i, int(data.T[i]), repr(float(weight[i]))])


def read_weights(path) -> tuple[BalanceWeights, np.ndarray]:
    """Read a weights file back; returns the weights and the group vector.

    The group vector is in unit order and lets the caller check the file
    against the dataset the weights will be applied to.
    """
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("# scheme="):
            raise ParseError(f"{path}: missing scheme metadata line")
        meta = first[2:].strip()
        fields = dict(part.split("=", 1) for part in meta.split(","))
        try:
            scheme = WeightScheme(fields["scheme"])
            lam = float(fields["lambda"])
        except (KeyError, ValueError) as exc:
            raise ParseError(f"{path}: bad metadata line {first!r}") from exc
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != ["unit", "group", "weight"]:
            raise ParseError(f"{path}: expected header unit,group,weight")
        units, groups, weights = [], [], []
        for i, raw in enumerate(reader):
            rownum = i + 1
            if len(raw) != 3:
                raise ParseError(f"row {rownum}: expected 3 fields", row=rownum)
            units.append(int(_parse_float(raw[0], rownum, "unit")))
            groups.append(_parse_treatment(raw[1], rownum, "group"))
            weights.append(_parse_float(raw[2], rownum, "weight"))
    order = np.argsort(np.asarray(units))
    groups_arr = np.asarray(groups, dtype=int)[order]
    weights_arr = np.asarray(weights, dtype=float)[order]
    w = BalanceWeights(
        p=weights_arr[groups_arr == 1], q=weights_arr[groups_arr == 0], scheme=scheme, lam=lam
    )
    return w, groups_arr


def write_table(path, rows: list[dict]) -> None:
    """Write summary rows as CSV with full-precision numeric cells."""
    if not rows:
        raise ValueError("no rows to write")
    fieldnames = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell_repr(v) for k, v in row.items()})


def _cell_repr(v):
    if isinstance(v, (float, np.floating)):  # np.float64 subclasses float
        return repr(float(v))
    return v


def fmt5(v) -> str:
    """Terminal cell formatting: floats at 5 decimals, blanks stay blank."""
    if v == "" or v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.5f}"
    return str(v)
