# -*- coding: utf-8 -*-
"""Table 1 (family × {non-sparse, sparse} thresholds) as an Excel workbook."""

from io import BytesIO
from pathlib import Path
from typing import Iterable, Optional, Union

from openpyxl import Workbook
from openpyxl.chart import BarChart, Reference
from openpyxl.styles import Alignment, Border, Font, PatternFill, Side
from openpyxl.utils import get_column_letter

from modules.bounds import table1
from modules.common import LN2
from modules.models import BoundReport, FamilyModel


XLSX_MEDIA_TYPE = "application/vnd.openxmlformats-officedocument.spreadsheetml.sheet"

BLUE = "123B75"
CYAN = "1CA6E8"
LIGHT_BLUE = "DCEEFF"
WHITE = "FFFFFF"
GRID = Side(style="thin", color="CCD6E3")

FAMILY_LABELS = {
    "cpt": "条件概率表 CPT",
    "gaussian": "线性高斯 Gaussian",
    "noisy_or": "Noisy-OR",
    "logistic": "逻辑回归 Logistic",
}


def _style_title(ws, title: str, end_column: int) -> None:
    ws.merge_cells(start_row=1, start_column=1, end_row=1, end_column=end_column)
    cell = ws.cell(1, 1, title)
    cell.fill = PatternFill("solid", fgColor=BLUE)
    cell.font = Font(color=WHITE, bold=True, size=16)
    cell.alignment = Alignment(horizontal="center", vertical="center")
    ws.row_dimensions[1].height = 28


def _style_header(ws, row: int, end_column: int) -> None:
    for column in range(1, end_column + 1):
        cell = ws.cell(row, column)
        cell.fill = PatternFill("solid", fgColor=CYAN)
        cell.font = Font(color=WHITE, bold=True)
        cell.alignment = Alignment(horizontal="center", vertical="center")
        cell.border = Border(top=GRID, bottom=GRID, left=GRID, right=GRID)


def _style_table(ws, start_row: int, end_row: int, end_column: int) -> None:
    for row in ws.iter_rows(min_row=start_row, max_row=end_row, min_col=1, max_col=end_column):
        for cell in row:
            cell.border = Border(top=GRID, bottom=GRID, left=GRID, right=GRID)
            cell.alignment = Alignment(vertical="center")


def _set_widths(ws, widths: dict[int, float]) -> None:
    for column, width in widths.items():
        ws.column_dimensions[get_column_letter(column)].width = width


def _scale(value: Optional[float], bits: bool) -> Optional[float]:
    return None if value is None else (value / LN2 if bits else value)


def table1_workbook(
    m: int, k: int, families: Optional[Iterable[FamilyModel]] = None, bits: bool = False
) -> BytesIO:
    grid = table1(m, k, families)
    wb = Workbook()
    ws = wb.active
    ws.title = "Table1"
    detail_ws = wb.create_sheet("明细")

    _style_title(ws, f"结构学习样本数下界 L（m={m}, k={k}）", 3)
    ws["A3"] = "单位"
    ws["B3"] = "log-size in bits" if bits else "nats / samples"
    ws["A3"].font = Font(bold=True, color=BLUE)
    ws["A3"].fill = PatternFill("solid", fgColor=LIGHT_BLUE)

    header_row = 5
    ws.append([])
    ws.append(["分布族", "非稀疏 L(G_m)", f"稀疏 L(G_m,k), k={k}"])
    for kind, cells in grid.items():
        ws.append([FAMILY_LABELS[kind], cells["non_sparse"].threshold_L, cells["sparse"].threshold_L])
    last = header_row + len(grid)
    _style_header(ws, header_row, 3)
    _style_table(ws, header_row, last, 3)
    for row in range(header_row + 1, last + 1):
        for column in (2, 3):
            ws.cell(row, column).number_format = "0.0000"

    chart = BarChart()
    chart.title = "各分布族阈值 L"
    chart.y_axis.title = "samples"
    chart.add_data(Reference(ws, min_col=2, max_col=3, min_row=header_row, max_row=last), titles_from_data=True)
    chart.set_categories(Reference(ws, min_col=1, min_row=header_row + 1, max_row=last))
    chart.height = 8
    chart.width = 15
    ws.add_chart(chart, "E3")
    _set_widths(ws, {1: 22, 2: 20, 3: 22})
    ws.freeze_panes = "A6"

    _style_title(detail_ws, "阈值明细", 9)
    detail_ws.append(
        ["分布族", "类型", "Δ_max", "ln|G| 下界", "threshold_L", "fano_L", "R(m,k)", "vacuous", "备注"]
    )
    for kind, cells in grid.items():
        for column, report in cells.items():
            detail_ws.append(_detail_row(kind, column, report, bits))
    _style_header(detail_ws, 2, 9)
    _style_table(detail_ws, 2, detail_ws.max_row, 9)
    for row in range(3, detail_ws.max_row + 1):
        for column in range(3, 8):
            detail_ws.cell(row, column).number_format = "0.000000"
    _set_widths(detail_ws, {1: 22, 2: 12, 3: 12, 4: 14, 5: 14, 6: 14, 7: 12, 8: 10, 9: 60})
    detail_ws.freeze_panes = "A3"
    detail_ws.auto_filter.ref = f"A2:I{detail_ws.max_row}"

    for sheet in wb.worksheets:
        sheet.sheet_view.showGridLines = False
        sheet.page_setup.orientation = "landscape"

    output = BytesIO()
    wb.save(output)
    output.seek(0)
    return output


def _detail_row(kind: str, column: str, report: BoundReport, bits: bool) -> list:
    return [
        FAMILY_LABELS[kind],
        column,
        report.delta_max,
        _scale(report.log_size_lb, bits),
        report.threshold_L,
        report.fano_L,
        report.R,
        "是" if report.vacuous else "否",
        "；".join(report.notes),
    ]


def save_table1_workbook(
    path: Union[str, Path], m: int, k: int, families: Optional[Iterable[FamilyModel]] = None, bits: bool = False
) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(table1_workbook(m, k, families, bits).getvalue())
    except OSError as exc:
        raise OSError(f"Excel 写入失败：{path}（{exc}）") from exc
    return path
