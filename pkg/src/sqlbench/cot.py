"""Multi-step chain-of-thought inference.

Two orchestrations: tables -> columns -> SQL, and tables -> columns ->
skeleton -> SQL. In PRED mode every step after the first sees only the
schema elements parsed out of the previous step's response (failing open
to the full schema when a parse yields nothing usable); FULL mode keeps
the complete definition in every step. Steps within a trace run strictly
in sequence; distinct instances may run concurrently.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .bench import TaskInstance
from .budget import (
    TokenBudget,
    TokenCounter,
    count_tokens,
    derive_seed,
    partition_columns,
    truncate_target,
)
from .gateway import EmptyResponse, extract_sql
from .prompts import FEW_SHOT_FORMAT_LINE, PromptBundle, note_line, question_line
from .schema import (
    DatabaseCatalog,
    SchemaVariant,
    filter_catalog,
    render_schema,
    schema_token_fn,
)
from .skeleton import UnterminatedComment, UnterminatedString, extract_skeleton

logger = logging.getLogger(__name__)

MODE_NONE = "none"
MODE_COT_SP_PRED = "cot-sp-pred"
MODE_COT_SP_FULL = "cot-sp-full"
MODE_COT_SK_PRED = "cot-sk-pred"
MODE_COT_SK_FULL = "cot-sk-full"
COT_MODES = (MODE_COT_SP_PRED, MODE_COT_SP_FULL, MODE_COT_SK_PRED, MODE_COT_SK_FULL)
ALL_MODES = (MODE_NONE,) + COT_MODES


class StepParseFailure(RuntimeError):
    pass


class SkeletonParseFailure(RuntimeError):
    pass


_STEP1_HEADER = (
    "# TABLE_NAME (\n"
    "# COLUMN_NAME: DESCRIPTION\n"
    "# )\n"
    "# FOREIGN KEYS:\n"
    "# TABLE_NAME1.COLUMN_NAME1 = TABLE_NAME2.COLUMN_NAME2"
)
_LATER_HEADER = (
    "# TABLE_NAME (\n"
    "# COLUMN_NAME: TYPE, (DESCRIPTION), (VALUE1, VALUE2, ...)\n"
    "# )\n"
    "# FOREIGN KEYS:\n"
    "# TABLE_NAME1.COLUMN_NAME1 = TABLE_NAME2.COLUMN_NAME2"
)
_STEP1_PROPERTIES = "### Here are SQLite SQL tables, with their properties:"
_LATER_PROPERTIES = "### Here are SQLite SQL tables that will be used, with their properties:"
_STEP_BY_STEP = "Please generate the SQL script STEP BY STEP."

_STEP1_TAIL = (
    "Find the required tables based on the QUESTION.\n"
    "\n"
    "Tables: (table\n"
    "         table)"
)
_STEP2_TAIL_TEMPLATE = (
    "Given the tables:\n"
    "{tables}.\n"
    "From the given tables, find the required columns based on the QUESTION.\n"
    "\n"
    "Columns: table: (column\n"
    "                column)"
)
_SP_FINAL_TAIL_TEMPLATE = (
    "Given the tables and columns used in the SQL query:\n"
    "{columns}.\n"
    "### Complete sqlite SQL query based on the given tables and columns\n"
    "SELECT"
)
_SK_SKELETON_TAIL_TEMPLATE = (
    "Given the tables and columns:\n"
    "{columns}.\n"
    "Based on the given the tables and columns, write the skeleton of the SQL "
    "query corresponding to the question."
)
_SK_FINAL_TAIL_TEMPLATE = (
    "Given the tables and columns:\n"
    "{columns},\n"
    "and sql skeleton:\n"
    "{skeleton}.\n"
    "### Complete sqlite SQL query based on the given tables, columns and sql_skeleton\n"
    "SELECT"
)

_STEP1_VARIANT = SchemaVariant.C_D
_LATER_VARIANT = SchemaVariant.C_VDT


@dataclass
class CotTrace:
    mode: str
    predicted_tables: list[str] = field(default_factory=list)
    predicted_columns: dict[str, list[str]] = field(default_factory=dict)
    skeleton: Optional[str] = None
    step_prompts: list[PromptBundle] = field(default_factory=list)
    step_responses: list[str] = field(default_factory=list)
    final_sql: str = ""
    warnings: list[str] = field(default_factory=list)


def parse_table_list(step_response: str, catalog: DatabaseCatalog) -> list[str]:
    """Extract table names from a step-1 response.

    Prefers the parenthesized block after "Tables:"; names there are kept
    verbatim (deduplicated, appearance order) so the caller can validate
    and warn. Without a block, falls back to scanning the free text for
    catalog table names, returned in catalog order.
    """
    match = re.search(r"Tables?\s*:\s*\(([^)]*)\)", step_response, re.IGNORECASE)
    if match:
        names: list[str] = []
        for raw in re.split(r"[,\s]+", match.group(1)):
            name = raw.strip().strip("\"'`")
            if name and name not in names:
                names.append(name)
        return names
    lowered = {w.lower() for w in re.findall(r"\w+", step_response)}
    return [t.name for t in catalog.tables if t.name.lower() in lowered]


def parse_column_list(
    step_response: str,
    catalog: DatabaseCatalog,
    tables: Sequence[str],
) -> dict[str, list[str]]:
    """Extract a {table: columns} map from a step-2 response.

    Mirrors table parsing on the "Columns: table: (column ...)" shape, with
    a free-text fallback against the given tables' catalog columns.
    """
    table_map = catalog.table_map()
    lookup = {name.lower(): name for name in table_map}

    columns: dict[str, list[str]] = {}
    anchor = re.search(r"Columns?\s*:", step_response, re.IGNORECASE)
    if anchor:
        tail = step_response[anchor.end():]
        for table_raw, block in re.findall(r"([\w.]+)\s*:\s*\(([^)]*)\)", tail):
            table = lookup.get(table_raw.strip().strip("\"'`").lower())
            if table is None:
                continue
            for raw in re.split(r"[,\s]+", block):
                name = raw.strip().strip("\"'`")
                if "." in name:
                    name = name.rsplit(".", 1)[1]
                if name:
                    columns.setdefault(table, [])
                    if name not in columns[table]:
                        columns[table].append(name)
    if columns:
        return columns

    lowered = {w.lower() for w in re.findall(r"\w+", step_response)}
    for table_name in tables:
        table = table_map.get(table_name)
        if table is None:
            continue
        present = [c.name for c in table.columns if c.name.lower() in lowered]
        if present:
            columns[table_name] = present
    return columns


def _validate_tables(names: Sequence[str], catalog: DatabaseCatalog, trace: CotTrace) -> list[str]:
    lookup = {t.name.lower(): t.name for t in catalog.tables}
    valid: list[str] = []
    for name in names:
        resolved = lookup.get(name.lower())
        if resolved is None:
            trace.warnings.append(f"predicted table {name!r} not in catalog; dropped")
        elif resolved not in valid:
            valid.append(resolved)
    return valid


def _validate_columns(
    columns: Mapping[str, Sequence[str]],
    catalog: DatabaseCatalog,
    trace: CotTrace,
) -> dict[str, list[str]]:
    table_map = catalog.table_map()
    valid: dict[str, list[str]] = {}
    for table_name, names in columns.items():
        table = table_map.get(table_name)
        if table is None:
            trace.warnings.append(f"predicted columns for unknown table {table_name!r}; dropped")
            continue
        known = {c.name.lower(): c.name for c in table.columns}
        kept = []
        for name in names:
            resolved = known.get(name.lower())
            if resolved is None:
                trace.warnings.append(
                    f"predicted column {table_name}.{name} not in catalog; dropped")
            elif resolved not in kept:
                kept.append(resolved)
        if kept:
            valid[table_name] = kept
    return valid


def _restrict_to_tables(catalog: DatabaseCatalog, tables: Sequence[str]) -> DatabaseCatalog:
    wanted = set(tables)
    keep = {
        t.name: ({c.name for c in t.columns} if t.name in wanted else set())
        for t in catalog.tables
    }
    return filter_catalog(catalog, keep)


def _restrict_to_columns(
    catalog: DatabaseCatalog,
    columns: Mapping[str, Sequence[str]],
) -> DatabaseCatalog:
    keep = {
        t.name: set(columns.get(t.name, ()))
        for t in catalog.tables
    }
    return filter_catalog(catalog, keep)


def _build_step_prompt(
    instance: TaskInstance,
    schema_catalog: DatabaseCatalog,
    step_index: int,
    header: str,
    properties_line: str,
    variant: SchemaVariant,
    tail: str,
    budget: TokenBudget,
    seed: int,
    counter: TokenCounter,
) -> PromptBundle:
    def render(keep) -> str:
        lines = [FEW_SHOT_FORMAT_LINE, header, properties_line]
        schema_text = render_schema(schema_catalog, variant, keep).rstrip("\n")
        if schema_text:
            lines.append(schema_text)
        lines.append(question_line(instance.question))
        note = note_line(instance.external_knowledge)
        if note:
            lines.append(note)
        lines.append(_STEP_BY_STEP)
        lines.append(tail)
        return "\n".join(lines)

    # Lines are newline-separated, so the count splits into a fixed
    # scaffold plus the schema block, tallied from per-line costs.
    schema_tokens = schema_token_fn(schema_catalog, variant, counter)
    scaffold = counter(render(None)) - schema_tokens(None)

    def prompt_tokens(keep) -> int:
        return scaffold + schema_tokens(keep)

    link_text = f"{instance.question} {instance.external_knowledge}"
    partition = partition_columns(schema_catalog, question=link_text)
    keep, record = truncate_target(
        schema_catalog, partition,
        prompt_tokens,
        budget.available,
        derive_seed(seed, instance.question_id, "step", step_index),
    )
    text = render(keep)
    return PromptBundle(text, counter(text), "cot_step", step_index, record)


def _normalize_skeleton(step_response: str) -> str:
    try:
        statement = extract_sql(step_response)
        skeleton = extract_skeleton(statement)
    except (EmptyResponse, UnterminatedString, UnterminatedComment, ValueError) as exc:
        raise SkeletonParseFailure(f"cannot derive a skeleton: {exc}") from exc
    if not skeleton.text:
        raise SkeletonParseFailure("step response yielded an empty skeleton")
    return skeleton.text


def _run_steps(
    instance: TaskInstance,
    catalog: DatabaseCatalog,
    client,
    mode: str,
    *,
    with_skeleton: bool,
    budget: TokenBudget,
    seed: int,
    counter: TokenCounter,
    restrict_after_step1: bool = True,
) -> CotTrace:
    predicted_only = mode.endswith("-pred")
    trace = CotTrace(mode=mode)

    def run_step(bundle: PromptBundle) -> str:
        trace.step_prompts.append(bundle)
        response = client.complete(bundle)
        trace.step_responses.append(response)
        return response

    # Step 1: find tables over the description-only schema.
    step1 = _build_step_prompt(
        instance, catalog, 1, _STEP1_HEADER, _STEP1_PROPERTIES,
        _STEP1_VARIANT, _STEP1_TAIL, budget, seed, counter)
    response = run_step(step1)
    tables = _validate_tables(parse_table_list(response, catalog), catalog, trace)
    if not tables:
        trace.warnings.append("no usable tables parsed from step 1; using full schema")
        tables = [t.name for t in catalog.tables]
        predicted_only = False
    trace.predicted_tables = tables

    restrict = predicted_only and restrict_after_step1
    step2_catalog = _restrict_to_tables(catalog, tables) if restrict else catalog
    tables_related = ", ".join(tables)

    # Step 2: find columns within the predicted tables.
    step2 = _build_step_prompt(
        instance, step2_catalog, 2, _LATER_HEADER, _LATER_PROPERTIES,
        _LATER_VARIANT, _STEP2_TAIL_TEMPLATE.format(tables=tables_related),
        budget, seed, counter)
    response = run_step(step2)
    columns = _validate_columns(
        parse_column_list(response, catalog, tables), catalog, trace)
    if restrict:
        # Later-step schemas may only narrow what step 1 predicted.
        for extra in [name for name in columns if name not in set(tables)]:
            trace.warnings.append(
                f"predicted columns for table {extra!r} outside step-1 tables; dropped")
            del columns[extra]
    if not columns:
        trace.warnings.append("no usable columns parsed from step 2; using full schema")
        columns = {name: [c.name for c in catalog.table_map()[name].columns] for name in tables}
        restrict = False
    trace.predicted_columns = columns

    later_catalog = _restrict_to_columns(catalog, columns) if restrict else catalog
    columns_related = ", ".join(
        f"{table}.{column}" for table, cols in columns.items() for column in cols)

    if with_skeleton:
        step3 = _build_step_prompt(
            instance, later_catalog, 3, _LATER_HEADER, _LATER_PROPERTIES,
            _LATER_VARIANT, _SK_SKELETON_TAIL_TEMPLATE.format(columns=columns_related),
            budget, seed, counter)
        response = run_step(step3)
        trace.skeleton = _normalize_skeleton(response)

        final_tail = _SK_FINAL_TAIL_TEMPLATE.format(
            columns=columns_related, skeleton=trace.skeleton)
        final_index = 4
    else:
        final_tail = _SP_FINAL_TAIL_TEMPLATE.format(columns=columns_related)
        final_index = 3

    final_step = _build_step_prompt(
        instance, later_catalog, final_index, _LATER_HEADER, _LATER_PROPERTIES,
        _LATER_VARIANT, final_tail, budget, seed, counter)
    response = run_step(final_step)
    trace.final_sql = extract_sql(response)
    return trace


def run_cot_sp(
    instance: TaskInstance,
    catalog: DatabaseCatalog,
    client,
    mode: str = MODE_COT_SP_FULL,
    *,
    budget: Optional[TokenBudget] = None,
    seed: int = 0,
    counter: TokenCounter = count_tokens,
    restrict_after_step1: bool = True,
) -> CotTrace:
    if mode not in (MODE_COT_SP_PRED, MODE_COT_SP_FULL):
        raise ValueError(f"run_cot_sp cannot handle mode {mode!r}")
    return _run_steps(
        instance, catalog, client, mode, with_skeleton=False,
        budget=budget or TokenBudget(), seed=seed, counter=counter,
        restrict_after_step1=restrict_after_step1)


def run_cot_sk(
    instance: TaskInstance,
    catalog: DatabaseCatalog,
    client,
    mode: str = MODE_COT_SK_FULL,
    *,
    budget: Optional[TokenBudget] = None,
    seed: int = 0,
    counter: TokenCounter = count_tokens,
    restrict_after_step1: bool = True,
) -> CotTrace:
    if mode not in (MODE_COT_SK_PRED, MODE_COT_SK_FULL):
        raise ValueError(f"run_cot_sk cannot handle mode {mode!r}")
    return _run_steps(
        instance, catalog, client, mode, with_skeleton=True,
        budget=budget or TokenBudget(), seed=seed, counter=counter,
        restrict_after_step1=restrict_after_step1)


def run_cot(
    instance: TaskInstance,
    catalog: DatabaseCatalog,
    client,
    mode: str,
    **kwargs,
) -> CotTrace:
    """Dispatch on mode; "none" is rejected (use the zero-shot path)."""
    if mode in (MODE_COT_SP_PRED, MODE_COT_SP_FULL):
        return run_cot_sp(instance, catalog, client, mode, **kwargs)
    if mode in (MODE_COT_SK_PRED, MODE_COT_SK_FULL):
        return run_cot_sk(instance, catalog, client, mode, **kwargs)
    raise ValueError(f"mode {mode!r} is not a chain-of-thought mode")
