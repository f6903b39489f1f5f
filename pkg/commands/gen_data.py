"""gen-data: generate the toy original dataset."""

import logging

from commands.common import RunContext, add_common_arguments, write_summary
from data.toy_data import generate_toy_dataset
from utils import storage

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser('gen-data', help='generate the toy dataset')
    add_common_arguments(parser)
    parser.set_defaults(handler=run)


def run(args) -> int:
    ctx = RunContext.from_args(args)
    params = ctx.config.dataset
    dataset = generate_toy_dataset(params.class_count, params.dim, params.n_per_class, params.spread, params.seed,
                                   params.class_separation, params.test_fraction)
    directory = ctx.prepare_dir('dataset')
    storage.save_dataset(dataset, directory, ctx.stamp('dataset'))

    summary = dict(dataset.to_dict(), stamp=ctx.stamp('dataset'))
    write_summary(directory, summary, ['size', 'dim', 'classes', 'test'],
                  [[len(dataset), dataset.dim, dataset.class_count, summary['test_size']]])
    return 0
