"""Byte accounting of a distilled set against its original dataset."""

import json
from dataclasses import dataclass


@dataclass
class BudgetReport:
    image_bytes: int
    compensator_bytes: int
    label_bytes: int
    manifest_bytes: int
    original_bytes: int
    label_mode: str = 'static'
    label_epochs: int = 1

    @property
    def total_bytes(self) -> int:
        return self.image_bytes + self.compensator_bytes + self.label_bytes + self.manifest_bytes

    @property
    def cr(self) -> float:
        if self.original_bytes <= 0:
            return 0.0
        return self.total_bytes / self.original_bytes

    def to_dict(self):
        return {
            'image_bytes': self.image_bytes,
            'compensator_bytes': self.compensator_bytes,
            'label_bytes': self.label_bytes,
            'manifest_bytes': self.manifest_bytes,
            'original_bytes': self.original_bytes,
            'total_bytes': self.total_bytes,
            'label_mode': self.label_mode,
            'label_epochs': self.label_epochs,
            'cr': self.cr,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)
