from .gen_data import register as register_gen_data
from .teachers import register as register_teachers
from .distill import register as register_distill
from .baseline import register as register_baseline
from .student import register as register_student
from .evaluate import register as register_evaluate
from .metrics import register as register_metrics
from .compare import register as register_compare

COMMANDS = [
    register_gen_data, register_teachers, register_distill, register_baseline,
    register_student, register_evaluate, register_metrics, register_compare,
]

__all__ = ['COMMANDS']
