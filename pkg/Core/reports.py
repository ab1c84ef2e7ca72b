"""Result files: CSV tables, the JSON run manifest and an optional styled workbook."""

import os
import sys
import json
import logging
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import scipy
import openpyxl
from openpyxl.styles import Font, PatternFill, Border, Side, Alignment
from openpyxl.utils import get_column_letter

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.10g'

def rows_to_frame(rows: Sequence[Dict[str, Any]], config_hash: str) -> pd.DataFrame:
    """Table of result rows with the config hash as the last column."""
    frame = pd.DataFrame(list(rows))
    frame['config_hash'] = config_hash
    return frame

def write_csv(rows: Sequence[Dict[str, Any]], path: str, config_hash: str) -> pd.DataFrame:
    """Write rows as CSV with fixed float formatting and return the table."""
    frame = rows_to_frame(rows, config_hash)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return frame

def package_versions() -> Dict[str, str]:
    return {
        'python': sys.version.split()[0],
        'numpy': np.__version__,
        'pandas': pd.__version__,
        'scipy': scipy.__version__,
        'openpyxl': openpyxl.__version__,
    }

def write_manifest(path: str, config: Dict[str, Any], config_hash: str, seed: int,
                   files: List[str], extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """JSON manifest: the full config, its hash, the seed, package versions and result files.

    Feeding `config` back through `--config` reproduces the CSVs byte for byte.
    """
    manifest = {
        'config_hash': config_hash,
        'seed': seed,
        'config': config,
        'versions': package_versions(),
        'files': [os.path.basename(f) for f in files],
    }
    if extra:
        manifest.update(extra)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=2, default=str)
    return manifest

def write_xlsx(frames: Dict[str, pd.DataFrame], path: str, column_width: int = 15):
    """One sheet per table, with a bold shaded header row."""
    wb = openpyxl.Workbook()
    wb.remove(wb.active)

    header_fill = PatternFill(start_color="DDDDDD", end_color="DDDDDD", fill_type="solid")
    header_font = Font(bold=True)
    header_border = Border(bottom=Side(style='medium'))

    for title, frame in frames.items():
        # Sheet titles are capped at 31 characters
        ws = wb.create_sheet(title=title[:31])
        for col, header in enumerate(frame.columns, start=1):
            cell = ws.cell(row=1, column=col, value=str(header))
            cell.font = header_font
            cell.fill = header_fill
            cell.border = header_border
            cell.alignment = Alignment(horizontal='center')

        for row, record in enumerate(frame.itertuples(index=False), start=2):
            for col, value in enumerate(record, start=1):
                if isinstance(value, np.generic):
                    value = value.item()
                if isinstance(value, float) and not np.isfinite(value):
                    value = None
                ws.cell(row=row, column=col, value=value)

        for col in range(1, len(frame.columns) + 1):
            ws.column_dimensions[get_column_letter(col)].width = column_width

    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    wb.save(path)
    logger.info(f"Wrote workbook {path}")

def print_table(rows: Sequence[Dict[str, Any]], limit: int = 20):
    """Print the first rows of a result table."""
    if not rows:
        print("(no rows)")
        return
    frame = pd.DataFrame(list(rows))
    with pd.option_context('display.max_columns', None, 'display.width', 160):
        print(frame.head(limit).to_string(index=False, float_format=lambda v: f"{v:.6g}"))
    if len(frame) > limit:
        print(f"... {len(frame) - limit} more rows")
