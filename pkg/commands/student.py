"""train-student: train a fresh student on a bundle or baseline set."""

import logging
import os

from commands.common import RunContext, add_common_arguments, write_summary
from models.network import ModelSpec
from utils import storage
from utils.csv_export import write_trace
from utils.student import evaluate, train_student

logger = logging.getLogger(__name__)

SOURCES = ('bundle', 'baseline_random', 'baseline_class_specific')


def register(subparsers) -> None:
    parser = subparsers.add_parser('train-student', help='train and evaluate a student')
    add_common_arguments(parser)
    parser.add_argument('--source', choices=SOURCES, default='bundle')
    parser.add_argument('--mode', choices=('static', 'dynamic'), default=None,
                        help='label mode (defaults to student.mode)')
    parser.set_defaults(handler=run)


def run(args) -> int:
    ctx = RunContext.from_args(args)
    params = ctx.config.student
    mode = args.mode or params.mode
    dataset = ctx.load_dataset()
    source = ctx.load_source(args.source)
    # static training runs without teacher artifacts
    teachers = ctx.teacher_store() if mode == 'dynamic' else None

    spec = ModelSpec(params.architecture_id, dataset.dim, dataset.class_count)
    model, trace = train_student(source, spec, params.recipe, mode=mode, teachers=teachers,
                                 beta=params.mixup_beta, seed=params.seed, use_mixup=params.use_mixup,
                                 testset=dataset.test())
    top1 = evaluate(model, dataset.test(), ctx.threads)

    directory = ctx.prepare_dir(f'student_{args.source}_{mode}')
    model.metadata['test_top1'] = top1
    storage.save_model(model, directory, ctx.stamp('student'))
    write_trace(os.path.join(directory, 'trace.csv'), trace)

    summary = {
        'source': args.source,
        'mode': mode,
        'architecture_id': params.architecture_id,
        'epochs': model.metadata['epochs'],
        'test_top1': top1,
        'teacher_reads': teachers.reads if teachers is not None else 0,
        'stamp': ctx.stamp('student'),
    }
    write_summary(directory, summary, ['source', 'mode', 'epochs', 'test_top1', 'teacher_reads'],
                  [[args.source, mode, summary['epochs'], top1, summary['teacher_reads']]])
    return 0
