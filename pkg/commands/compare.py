"""compare: every method at equalised compression ratio, over the configured seeds."""

import logging
import os

from commands.common import RunContext, add_common_arguments, write_summary
from utils.csv_export import write_accuracy_table
from utils.pipeline import compare

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser('compare', help='accuracy versus compression ratio for every method')
    add_common_arguments(parser)
    parser.set_defaults(handler=run)


def run(args) -> int:
    ctx = RunContext.from_args(args)
    dataset = ctx.load_dataset()
    ensemble = ctx.teacher_store().ensemble()
    directory = ctx.prepare_dir('compare')

    result = compare(dataset, ensemble, ctx.config, ctx.threads)
    write_accuracy_table(os.path.join(directory, 'accuracy_vs_cr.csv'), result['rows'])
    if result.get('ensemble_rows'):
        write_accuracy_table(os.path.join(directory, 'ensemble_size.csv'), result['ensemble_rows'])

    summary = dict(result, stamp=ctx.stamp('bundle'))
    rows = [[s['method'], s['ipc'], s['cr'], s['top1_mean'], s['top1_std']]
            for s in result['summary'] + result.get('ensemble_summary', [])]
    write_summary(directory, summary, ['method', 'ipc', 'cr', 'top1_mean', 'top1_std'], rows)
    return 0
