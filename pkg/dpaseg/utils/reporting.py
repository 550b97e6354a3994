"""
Tabular result reporting: every table is written as CSV and as aligned text
"""

from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd

FLOAT_FORMAT = "{:.4f}"


class ResultTable:
    """A titled DataFrame with fixed-precision CSV and plain-text renderings"""

    def __init__(self, title: str, frame: pd.DataFrame, float_format: str = FLOAT_FORMAT):
        """
        Args:
            title: Heading of the text rendering
            frame: Table content, one row per result
            float_format: Format applied to every float cell
        """
        self.title = title
        self.frame = frame.reset_index(drop=True)
        self.float_format = float_format

    @classmethod
    def from_records(
        cls,
        title: str,
        records: Sequence[Dict[str, Any]],
        columns: Optional[List[str]] = None,
        float_format: str = FLOAT_FORMAT,
    ) -> "ResultTable":
        return cls(title, pd.DataFrame.from_records(list(records), columns=columns), float_format)

    def __len__(self) -> int:
        return len(self.frame)

    def _formatted(self) -> pd.DataFrame:
        out = self.frame.copy()
        for column in out.columns:
            if pd.api.types.is_float_dtype(out[column]):
                out[column] = out[column].map(lambda v: "" if pd.isna(v) else self.float_format.format(v))
        return out

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self._formatted().to_csv(path, index=False, lineterminator="\n")
        return path

    def to_text(self) -> str:
        body = self._formatted().to_string(index=False)
        rule = "=" * max(len(self.title), max((len(line) for line in body.splitlines()), default=0))
        return f"{self.title}\n{rule}\n{body}\n"

    def write(self, out_dir: Union[str, Path], stem: str) -> Tuple[Path, Path]:
        """Write `<stem>.csv` and `<stem>.txt` under out_dir"""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = self.to_csv(out_dir / f"{stem}.csv")
        txt_path = out_dir / f"{stem}.txt"
        txt_path.write_text(self.to_text(), encoding="utf-8")
        return csv_path, txt_path
