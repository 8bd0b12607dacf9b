import json
import math
import warnings

import numpy as np
import pandas as pd

from extremes.utils import dataframe_to_markdown, format_dataframe, format_sig, write_json


def test_format_sig():
    assert format_sig(-942.32612) == "-942.326"
    assert format_sig(math.nan) == "-"
    assert format_sig("failed") == "failed"
    assert format_sig(0.0123456789, 3) == "0.0123"


def test_format_dataframe():
    df = pd.DataFrame({"Model": ["a", "b"], "AIC": [1888.6512, None]})
    formatted = format_dataframe(df, ["AIC"])
    assert list(formatted["AIC"]) == ["1888.65", "-"]


def test_dataframe_to_markdown(tmp_path):
    df = pd.DataFrame({"Model": ["Lg-Exp", "GEV"], "AIC": ["1888.65", "1914.51"]})
    path = tmp_path / "table.md"
    dataframe_to_markdown(df, file_name=path, highlight_rows=[0])
    text = path.read_text()
    assert text.startswith("<table>")
    assert "<strong>Lg-Exp</strong>" in text
    assert '<td style="text-align:right">1914.51</td>' in text


def test_write_json(tmp_path):
    path = tmp_path / "nested" / "out.json"
    write_json({"b": math.inf, "a": np.float64(1.5), "c": np.arange(2)}, path)
    text = path.read_text()
    assert json.loads(text) == {"a": 1.5, "b": None, "c": [0, 1]}
    assert text.index('"a"') < text.index('"b"')
    assert text.endswith("\n")


def test_format_dataframe_fills_missing_cells_without_warnings():
    df = pd.DataFrame(
        {
            "Model": ["a", None, "c"],
            "k": pd.array([2, None, 3], dtype="Int64"),
            "AIC": [1.5, math.nan, None],
        }
    )
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        formatted = format_dataframe(df, ["k", "AIC"])
    assert list(formatted["Model"]) == ["a", "-", "c"]
    assert list(formatted["k"]) == ["2", "-", "3"]
    assert list(formatted["AIC"]) == ["1.5", "-", "-"]
