import json
import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


def format_sig(x, digits=6):
    """Format a number with ``digits`` significant digits; missing values become '-'."""
    try:
        value = float(x)
    except (TypeError, ValueError):
        return x
    if math.isnan(value):
        return "-"
    return f"{value:.{digits}g}"


def _missing(x):
    return pd.api.types.is_scalar(x) and pd.isna(x)


def format_dataframe(df, numeric_columns, digits=6):
    """
    Format a DataFrame for readable display.
    - Fills NA values with '-'.
    - Formats specified numeric columns to ``digits`` significant digits.

    Parameters:
    df (pd.DataFrame): The DataFrame to format.
    numeric_columns (list): List of numeric column names to format.
    digits (int): Significant digits.

    Returns:
    pd.DataFrame: The formatted DataFrame.
    """
    formatted_df = df.astype(object)
    for col in formatted_df.columns:
        if col in numeric_columns:
            formatted_df[col] = formatted_df[col].map(lambda x: "-" if _missing(x) else format_sig(x, digits))
        else:
            formatted_df[col] = formatted_df[col].map(lambda x: "-" if _missing(x) else x)
    return formatted_df


def dataframe_to_markdown(
    df,
    file_name="dataframe_table.md",
    highlight_rows=None,
    center_align_columns=None,
    column_widths=100,
):
    """
    Convert a DataFrame to an HTML-in-Markdown table and save it, with the first
    column left-aligned, ``center_align_columns`` centered, and the rest
    right-aligned.

    Parameters:
    df (pd.DataFrame): The DataFrame to convert.
    file_name (str or Path): Name of the file to save the table.
    highlight_rows (list): Row indices to render in bold.
    center_align_columns (list): Column names to center align.
    column_widths (int): Header cell width in pixels.
    """
    highlight_rows = highlight_rows or []
    center_align_columns = center_align_columns or []

    md_output = "<table>\n<thead>\n<tr>\n"
    for i, col in enumerate(df.columns):
        header_align = "left" if i == 0 else "center"
        md_output += f'<th style="text-align:{header_align}; width: {column_widths}px;"><strong>{col}</strong></th>\n'
    md_output += "</tr>\n</thead>\n<tbody>\n"

    for index, row in df.iterrows():
        md_output += "<tr>\n"
        for i, col in enumerate(df.columns):
            cell_value = "" if pd.isna(row[col]) else row[col]
            if i == 0:
                align = "left"
            elif col in center_align_columns:
                align = "center"
            else:
                align = "right"
            if index in highlight_rows:
                md_output += f'<td style="text-align:{align}"><strong>{cell_value}</strong></td>\n'
            else:
                md_output += f'<td style="text-align:{align}">{cell_value}</td>\n'
        md_output += "</tr>\n"
    md_output += "</tbody>\n</table>\n"

    with open(file_name, "w") as file:
        file.write(md_output)
    logger.info("Markdown table saved to '%s'", file_name)


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(data, file_name):
    """Write ``data`` as indented JSON with sorted keys; non-finite floats become null."""
    Path(file_name).parent.mkdir(parents=True, exist_ok=True)
    with open(file_name, "w") as file:
        json.dump(_jsonable(data), file, indent=2, sort_keys=True)
        file.write("\n")
    logger.info("JSON saved to '%s'", file_name)
