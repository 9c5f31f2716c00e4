"""
JSON persistence helpers

Reads and writes the JSON side files of a run (records, train reports).
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Union

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class DataLoader:
    """Loads and saves run artifacts as JSON"""

    @staticmethod
    def save_data_to_json(data: Any, file_path: PathLike):
        """Save data to JSON file; floats are written with full repr precision"""
        path = Path(file_path)
        with open(path, 'w') as f:
            json.dump(data, f, indent=2, sort_keys=True)
            f.write("\n")
        logger.debug(f"Data saved to {path}")

    @staticmethod
    def load_json(file_path: PathLike) -> Any:
        """Load a JSON document; a missing file raises FileNotFoundError"""
        path = Path(file_path)
        with open(path, 'r') as f:
            data = json.load(f)
        logger.debug(f"Loaded {path}")
        return data

    @staticmethod
    def find_records(root: PathLike, name: str = "record.json") -> List[Path]:
        """All record files under root in a stable order"""
        return sorted(Path(root).glob(f"*/*/{name}"))

    @staticmethod
    def load_records(root: PathLike) -> List[Dict]:
        records = [DataLoader.load_json(p) for p in DataLoader.find_records(root)]
        logger.info(f"Loaded {len(records)} run records from {root}")
        return records
