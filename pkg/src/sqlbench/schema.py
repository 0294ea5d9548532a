"""Database catalog model and commented-schema rendering.

The rendered text is an external contract: golden files under tests/golden
pin the exact bytes of all nine column-definition variants on the fixture
catalog. Column lines are indented "#   " (one pound sign, three spaces);
format-header lines use the plain "# " prefix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional

TYPE_NAMES = ("text", "int", "date", "datetime", "real", "varchar")

MAX_SAMPLE_VALUES = 5


class UnknownColumnInFilter(ValueError):
    pass


class SchemaVariant(str, Enum):
    """The nine column-definition variants, named by their optional elements."""

    C_N = "C_N"
    C_T = "C_T"
    C_D = "C_D"
    C_V = "C_V"
    C_P = "C_P"
    C_VD = "C_VD"
    C_VDT = "C_VDT"
    C_VDP = "C_VDP"
    C_A = "C_A"


# Optional elements carried by each variant, in canonical line order:
# TYPE, DESCRIPTION, VALUES, PRIMARY_KEY.
_VARIANT_ELEMENTS: dict[SchemaVariant, frozenset[str]] = {
    SchemaVariant.C_N: frozenset(),
    SchemaVariant.C_T: frozenset({"type"}),
    SchemaVariant.C_D: frozenset({"description"}),
    SchemaVariant.C_V: frozenset({"values"}),
    SchemaVariant.C_P: frozenset({"primary_key"}),
    SchemaVariant.C_VD: frozenset({"description", "values"}),
    SchemaVariant.C_VDT: frozenset({"type", "description", "values"}),
    SchemaVariant.C_VDP: frozenset({"description", "values", "primary_key"}),
    SchemaVariant.C_A: frozenset({"type", "description", "values", "primary_key"}),
}


def _collapse_line(text: str) -> str:
    return " ".join(text.split())


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    type_name: str = "text"
    description: Optional[str] = None
    values: Optional[tuple[str, ...]] = None
    is_primary_key: bool = False

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("column name must be non-empty")
        if self.type_name not in TYPE_NAMES:
            raise ValueError(f"unknown type name {self.type_name!r}")
        if self.description is not None:
            object.__setattr__(self, "description", _collapse_line(self.description))
        if self.values is not None:
            values = tuple(self.values)
            if not 1 <= len(values) <= MAX_SAMPLE_VALUES:
                raise ValueError(f"values must hold 1..{MAX_SAMPLE_VALUES} entries")
            object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class TableSpec:
    name: str
    columns: tuple[ColumnSpec, ...]

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("table name must be non-empty")
        object.__setattr__(self, "columns", tuple(self.columns))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate column names in table {self.name!r}")


@dataclass(frozen=True)
class ForeignKey:
    table: str
    column: str
    ref_table: str
    ref_column: str


@dataclass(frozen=True)
class DatabaseCatalog:
    database_id: str
    tables: tuple[TableSpec, ...]
    foreign_keys: tuple[ForeignKey, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "tables", tuple(self.tables))
        object.__setattr__(self, "foreign_keys", tuple(self.foreign_keys))
        names = [t.name for t in self.tables]
        if len(set(names)) != len(names):
            raise ValueError("duplicate table names in catalog")
        columns = self.column_set()
        for fk in self.foreign_keys:
            if (fk.table, fk.column) not in columns or (fk.ref_table, fk.ref_column) not in columns:
                raise ValueError(f"foreign key references unknown column: {fk}")

    def table_map(self) -> dict[str, TableSpec]:
        return {t.name: t for t in self.tables}

    def column_set(self) -> set[tuple[str, str]]:
        return {(t.name, c.name) for t in self.tables for c in t.columns}

    def key_columns(self) -> set[tuple[str, str]]:
        """Primary-key columns plus both endpoints of every foreign key."""
        keys = {(t.name, c.name) for t in self.tables for c in t.columns if c.is_primary_key}
        for fk in self.foreign_keys:
            keys.add((fk.table, fk.column))
            keys.add((fk.ref_table, fk.ref_column))
        return keys


ColumnFilter = Mapping[str, Iterable[str]]


def _validate_filter(catalog: DatabaseCatalog, keep: ColumnFilter) -> dict[str, set[str]]:
    tables = catalog.table_map()
    resolved: dict[str, set[str]] = {}
    for table_name, columns in keep.items():
        if table_name not in tables:
            raise UnknownColumnInFilter(f"unknown table in filter: {table_name!r}")
        known = {c.name for c in tables[table_name].columns}
        wanted = set(columns)
        unknown = wanted - known
        if unknown:
            raise UnknownColumnInFilter(
                f"unknown columns in filter for {table_name!r}: {sorted(unknown)}")
        resolved[table_name] = wanted
    return resolved


def filter_catalog(catalog: DatabaseCatalog, keep: Optional[ColumnFilter]) -> DatabaseCatalog:
    """Project a catalog onto a column filter.

    Tables absent from `keep` retain all columns; a table mapped to an empty
    set is dropped. Foreign keys survive only if both endpoints do.
    """
    if keep is None:
        return catalog
    resolved = _validate_filter(catalog, keep)
    tables = []
    for table in catalog.tables:
        if table.name not in resolved:
            tables.append(table)
            continue
        cols = tuple(c for c in table.columns if c.name in resolved[table.name])
        if cols:
            tables.append(TableSpec(table.name, cols))
    kept = {(t.name, c.name) for t in tables for c in t.columns}
    fks = tuple(
        fk for fk in catalog.foreign_keys
        if (fk.table, fk.column) in kept and (fk.ref_table, fk.ref_column) in kept
    )
    return DatabaseCatalog(catalog.database_id, tuple(tables), fks)


def _format_value(value: str) -> str:
    # Values containing a comma are double-quoted so the list stays parseable.
    if "," in value:
        return f'"{value}"'
    return value


def _column_line(column: ColumnSpec, variant: SchemaVariant) -> str:
    if variant is SchemaVariant.C_N:
        return f"#   {column.name}"
    elements = _VARIANT_ELEMENTS[variant]
    parts: list[str] = []
    if "type" in elements:
        parts.append(column.type_name)
    if "description" in elements and column.description:
        parts.append(f"({column.description})")
    if "values" in elements and column.values:
        parts.append("(" + ", ".join(_format_value(v) for v in column.values) + ")")
    if "primary_key" in elements and column.is_primary_key:
        parts.append("PRIMARY_KEY")
    body = ", ".join(parts)
    if body:
        return f"#   {column.name}: {body}"
    return f"#   {column.name}:"


def render_schema(
    catalog: DatabaseCatalog,
    variant: SchemaVariant,
    keep: Optional[ColumnFilter] = None,
) -> str:
    """Render the concrete commented schema block for one variant.

    Returns one "# TABLE (" ... "# )" group per retained table, then a
    "# FOREIGN KEYS:" section listing every key whose endpoints survive the
    filter. Ends with exactly one newline; an empty catalog renders "".
    """
    variant = SchemaVariant(variant)
    resolved = _validate_filter(catalog, keep) if keep is not None else None

    lines: list[str] = []
    kept_columns: set[tuple[str, str]] = set()
    for table in catalog.tables:
        columns = [
            c for c in table.columns
            if resolved is None or table.name not in resolved or c.name in resolved[table.name]
        ]
        if not columns:
            continue
        lines.append(f"# {table.name} (")
        for column in columns:
            lines.append(_column_line(column, variant))
            kept_columns.add((table.name, column.name))
        lines.append("# )")

    fk_lines = [
        f"# {fk.table}.{fk.column}={fk.ref_table}.{fk.ref_column}"
        for fk in catalog.foreign_keys
        if (fk.table, fk.column) in kept_columns and (fk.ref_table, fk.ref_column) in kept_columns
    ]
    if fk_lines:
        lines.append("# FOREIGN KEYS:")
        lines.extend(fk_lines)

    if not lines:
        return ""
    return "\n".join(lines) + "\n"


_HEADER_COLUMN_LINES: dict[SchemaVariant, tuple[str, ...]] = {
    SchemaVariant.C_N: ("# COLUMN_NAME",),
    SchemaVariant.C_T: ("# COLUMN_NAME: TYPE",),
    SchemaVariant.C_D: ("# COLUMN_NAME: DESCRIPTION",),
    SchemaVariant.C_V: ("# COLUMN_NAME: (ENUM_VALUE, ENUM_VALUE2, ...)",),
    SchemaVariant.C_P: (
        "# COLUMN_NAME: PRIMARY_KEY",
        "# COLUMN_NAME:",
    ),
    SchemaVariant.C_VD: ("# COLUMN_NAME: (DESCRIPTION), (ENUM_VALUE, ENUM_VALUE2, ...)",),
    SchemaVariant.C_VDT: ("# COLUMN_NAME: TYPE, (DESCRIPTION), (ENUM_VALUE, ENUM_VALUE2, ...)",),
    SchemaVariant.C_VDP: (
        "# COLUMN_NAME: (DESCRIPTION), (ENUM_VALUE, ENUM_VALUE2, ...), PRIMARY_KEY",
        "# COLUMN_NAME: (DESCRIPTION), (ENUM_VALUE, ENUM_VALUE2, ...)",
    ),
    SchemaVariant.C_A: (
        "# COLUMN_NAME: TYPE, (DESCRIPTION), (ENUM_VALUE, ENUM_VALUE2, ...), PRIMARY_KEY",
        "# COLUMN_NAME: TYPE, (DESCRIPTION), (ENUM_VALUE, ENUM_VALUE2, ...)",
    ),
}


def column_line_costs(catalog, variant: SchemaVariant, counter) -> dict[tuple[str, str], int]:
    """Token cost of each column's rendered line under a line-additive counter.

    Because rendered lines are newline-separated, removing a column removes
    exactly its own line; these costs let truncation loops account for
    removals without re-rendering the whole block.
    """
    variant = SchemaVariant(variant)
    return {
        (table.name, column.name): counter(_column_line(column, variant))
        for table in catalog.tables
        for column in table.columns
    }


def schema_token_fn(catalog, variant: SchemaVariant, counter):
    """Exact keep-filter token counter for the rendered schema block.

    Computes the same number as counter(render_schema(catalog, variant,
    keep)) for any line-additive counter (newlines never sit inside a
    token), from precomputed per-line costs instead of re-rendering.
    """
    variant = SchemaVariant(variant)
    line_costs = column_line_costs(catalog, variant, counter)
    header_costs = {t.name: counter(f"# {t.name} (") for t in catalog.tables}
    footer_cost = counter("# )")
    fk_header_cost = counter("# FOREIGN KEYS:")
    fk_costs = [
        (fk, counter(f"# {fk.table}.{fk.column}={fk.ref_table}.{fk.ref_column}"))
        for fk in catalog.foreign_keys
    ]

    def tokens(keep: Optional[ColumnFilter]) -> int:
        total = 0
        kept: set[tuple[str, str]] = set()
        for table in catalog.tables:
            wanted = None if keep is None or table.name not in keep else set(keep[table.name])
            columns = [c.name for c in table.columns if wanted is None or c.name in wanted]
            if not columns:
                continue
            total += header_costs[table.name] + footer_cost
            for name in columns:
                total += line_costs[(table.name, name)]
                kept.add((table.name, name))
        fk_line_costs = [
            cost for fk, cost in fk_costs
            if (fk.table, fk.column) in kept and (fk.ref_table, fk.ref_column) in kept
        ]
        if fk_line_costs:
            total += fk_header_cost + sum(fk_line_costs)
        return total

    return tokens


def render_schema_format_header(variant: SchemaVariant) -> str:
    """Render the generic format block describing one variant's column lines."""
    variant = SchemaVariant(variant)
    lines = ["# TABLE_NAME ("]
    lines.extend(_HEADER_COLUMN_LINES[variant])
    lines.append("# )")
    lines.append("# FOREIGN KEYS:")
    lines.append("# TABLE_NAME1.COLUMN_NAME1 = TABLE_NAME2.COLUMN_NAME2")
    return "\n".join(lines) + "\n"
