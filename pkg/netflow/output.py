import numpy as np
from prompt_toolkit import print_formatted_text
from prompt_toolkit.formatted_text import FormattedText
from prompt_toolkit.styles import Style
from scipy import sparse

from .files import format_number


DENSE_EDGE_LIMIT = 50


def create_style(fg=None, bg=None) -> Style:
    styles = ""
    # argparse hands over "None" as text when users pass it explicitly
    if fg and fg != "None":
        styles += f"fg:{fg} "
    if bg and bg != "None":
        styles += f"bg:{bg}"
    return Style.from_dict({
        "error": f"{styles} reverse",
        "normal": f"{styles}",
    })


class ConsoleOutput:
    """ Prints lines to the terminal through prompt_toolkit. """

    def __init__(self, style: Style = None, file=None):
        self.style = style or create_style()
        self.file = file

    def __call__(self, text):
        kind = "error" if str(text).startswith(("Error", "Unsupported command")) else "normal"
        print_formatted_text(
            FormattedText([(f"class:{kind}", str(text))]), style=self.style, file=self.file
        )


def _entry(value) -> str:
    if float(value).is_integer():
        return str(int(value))
    return format_number(value)


def dense_lines(matrix) -> list:
    dense = matrix.toarray() if sparse.issparse(matrix) else np.asarray(matrix)
    if dense.size == 0:
        return [f"({dense.shape[0]}x{dense.shape[1]} empty)"]
    cells = [[_entry(v) for v in row] for row in dense]
    width = max(len(c) for row in cells for c in row)
    return [" ".join(c.rjust(width) for c in row) for row in cells]


def triplet_lines(matrix) -> list:
    """ row col value, 1-based, in row-major order """
    coo = sparse.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    return [f"{coo.row[k] + 1} {coo.col[k] + 1} {_entry(coo.data[k])}" for k in order]


def matrix_lines(name, matrix, dense=True) -> list:
    rows, cols = matrix.shape
    lines = [f"{name} ({rows}x{cols})"]
    lines.extend(dense_lines(matrix) if dense else triplet_lines(matrix))
    return lines
