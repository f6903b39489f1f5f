from .dataset import LabeledDataset, AnchorSet
from .network import ARCHITECTURES, ModelSpec, BatchNormState, TeacherModel
from .bundle import UFC, SubsetRecord, DistilledDataset, IntegratedSet, MixupBatch, BaselineSet, compute_K
from .budget import BudgetReport
from .run_config import RunConfig

__all__ = [
    'LabeledDataset', 'AnchorSet', 'ARCHITECTURES', 'ModelSpec', 'BatchNormState', 'TeacherModel',
    'UFC', 'SubsetRecord', 'DistilledDataset', 'IntegratedSet', 'MixupBatch', 'BaselineSet', 'compute_K',
    'BudgetReport', 'RunConfig',
]
