#!/usr/bin/env python3
"""
Influence Abstraction Toolkit - Report Export
Rendering of CLI reports as human summaries, versioned table documents or JSON
"""

import json
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional

import pandas as pd

REPORT_TITLE = 'influence-abstraction report'
REPORT_VERSION = 1
FLOAT_FORMAT = '%.12g'


@dataclass
class Report:
    """One subcommand result: ordered summary fields plus named tables"""
    kind: str
    summary: Dict[str, Any] = field(default_factory=dict)
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    settings: Dict[str, Any] = field(default_factory=dict)

    def add_table(self, name: str, frame: pd.DataFrame) -> 'Report':
        self.tables[name] = frame
        return self


def _scalar(value: Any) -> Any:
    if isinstance(value, float):
        return float(FLOAT_FORMAT % value)
    if hasattr(value, 'item'):
        return _scalar(value.item())
    return value


def _text(value: Any) -> str:
    if isinstance(value, float):
        return FLOAT_FORMAT % value
    return str(value)


class ExportManager:
    """Handle export to various formats"""

    @staticmethod
    def header(report: Report, version: int = REPORT_VERSION) -> str:
        lines = [f"# {REPORT_TITLE} v{version}", f"# kind\t{report.kind}"]
        lines += [f"# setting\t{key}\t{_text(value)}" for key, value in report.settings.items()]
        return '\n'.join(lines) + '\n'

    @staticmethod
    def to_table_document(report: Report, version: int = REPORT_VERSION) -> str:
        """Export as a line-oriented table document with a versioned header"""
        out = ExportManager.header(report, version)
        out += ''.join(f"summary\t{key}\t{_text(value)}\n" for key, value in report.summary.items())
        for name, frame in report.tables.items():
            out += f"## {name}\n"
            out += frame.to_csv(sep='\t', index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
        return out

    @staticmethod
    def to_json(report: Report, version: int = REPORT_VERSION, pretty: bool = True) -> str:
        """Export as JSON"""
        data = {
            'report': REPORT_TITLE,
            'version': version,
            'kind': report.kind,
            'settings': {k: _scalar(v) for k, v in report.settings.items()},
            'summary': {k: _scalar(v) for k, v in report.summary.items()},
            'tables': {name: [{k: _scalar(v) for k, v in row.items()} for row in frame.to_dict(orient='records')]
                       for name, frame in report.tables.items()},
        }
        if pretty:
            return json.dumps(data, indent=2) + '\n'
        return json.dumps(data) + '\n'

    @staticmethod
    def to_human(report: Report) -> str:
        """Export as an aligned plain-text summary"""
        width = max((len(k) for k in report.summary), default=0)
        out = f"{report.kind}\n"
        out += ''.join(f"  {key.ljust(width)}  {_text(value)}\n" for key, value in report.summary.items())
        for name, frame in report.tables.items():
            out += f"\n{name}\n"
            if frame.empty:
                out += "  (empty)\n"
                continue
            body = frame.to_string(index=False, float_format=lambda v: FLOAT_FORMAT % v)
            out += ''.join(f"  {line}\n" for line in body.splitlines())
        return out

    @staticmethod
    def render(report: Report, fmt: str = 'human', version: Optional[int] = None) -> str:
        if fmt == 'table':
            return ExportManager.to_table_document(report, version or REPORT_VERSION)
        if fmt == 'json':
            return ExportManager.to_json(report, version or REPORT_VERSION)
        if fmt == 'human':
            return ExportManager.to_human(report)
        raise ValueError(f"unknown report format {fmt!r}")

    @staticmethod
    def frame(rows, columns) -> pd.DataFrame:
        """DataFrame with a fixed column order, also when rows is empty"""
        return pd.DataFrame(list(rows), columns=list(columns))

    @staticmethod
    def settings_of(values: Mapping[str, Any]) -> Dict[str, Any]:
        return {key: values[key] for key in sorted(values)}
