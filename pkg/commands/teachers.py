"""train-teachers: train every ensemble architecture on the training split."""

import logging
import os

from commands.common import RunContext, add_common_arguments, write_summary
from models.network import ModelSpec
from utils import storage
from utils.csv_export import TEACHER_TRACE_HEADER, write_trace
from utils.parallel import ordered_map
from utils.training import train_teacher

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser('train-teachers', help='train the teacher ensemble')
    add_common_arguments(parser)
    parser.set_defaults(handler=run)


def run(args) -> int:
    ctx = RunContext.from_args(args)
    dataset = ctx.load_dataset()
    train, test = dataset.train(), dataset.test()
    recipe = ctx.config.teacher
    directory = ctx.prepare_dir('teachers')

    def fit(job):
        index, arch = job
        spec = ModelSpec(arch, dataset.dim, dataset.class_count)
        return train_teacher(train, spec, recipe, seed=recipe.seed + index, testset=test)

    models = ordered_map(fit, list(enumerate(ctx.config.ensemble)), ctx.threads)

    rows = []
    for model in models:
        arch = model.spec.architecture_id
        target = os.path.join(directory, arch)
        storage.save_model(model, target, ctx.stamp('teacher'))
        write_trace(os.path.join(target, 'trace.csv'), model.metadata['trace'], TEACHER_TRACE_HEADER)
        rows.append([arch, model.metadata['train_top1'], model.metadata['test_top1']])

    summary = {
        'teachers': [{'architecture_id': r[0], 'train_top1': r[1], 'test_top1': r[2]} for r in rows],
        'stamp': ctx.stamp('teacher'),
    }
    write_summary(directory, summary, ['architecture', 'train_top1', 'test_top1'], rows)
    return 0
