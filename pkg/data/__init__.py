"""Dataset generation and class-indexed sampling."""

from .sampling import class_permutations, sample_anchor_set, select_per_class, stratified_split
from .toy_data import class_templates, generate_toy_dataset, load_external_dataset

__all__ = [
    'class_permutations', 'sample_anchor_set', 'select_per_class', 'stratified_split',
    'class_templates', 'generate_toy_dataset', 'load_external_dataset',
]
