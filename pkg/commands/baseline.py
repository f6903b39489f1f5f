"""baseline: build the random coreset or the class-specific synthetic set."""

import logging
import os

from commands.common import RunContext, add_common_arguments, write_summary
from utils import storage
from utils.baselines import class_specific_synthesis, random_coreset
from utils.metrics import compression_ratio

logger = logging.getLogger(__name__)

KINDS = {'random': 'baseline_random', 'class_specific': 'baseline_class_specific'}


def register(subparsers) -> None:
    parser = subparsers.add_parser('baseline', help='build a comparison set')
    add_common_arguments(parser)
    parser.add_argument('--kind', choices=sorted(KINDS), default='random')
    parser.add_argument('--ipc', type=int, default=None, help='images per class (defaults to distill.ipc)')
    parser.set_defaults(handler=run)


def run(args) -> int:
    ctx = RunContext.from_args(args)
    params = ctx.config.distill
    ipc = args.ipc or params.ipc
    dataset = ctx.load_dataset()
    train = dataset.train()
    ensemble = ctx.teacher_store().ensemble()

    if args.kind == 'random':
        result = random_coreset(train, ipc, params.seed, ensemble, params.coreset_labels)
    else:
        result = class_specific_synthesis(ensemble[0], train, ipc, params.alpha, params.synthesis, params.seed,
                                          ensemble, params.baseline_init, ctx.threads)
    result.provenance['stamp'] = ctx.stamp('baseline')

    directory = ctx.prepare_dir(KINDS[args.kind])
    storage.save_bundle(result, os.path.join(directory, 'data'))
    report = compression_ratio(result, dataset)
    with open(os.path.join(directory, 'budget.json'), 'w', encoding='utf-8') as f:
        f.write(report.to_json() + '\n')

    summary = dict(result.to_dict(), budget=report.to_dict())
    write_summary(directory, summary, ['kind', 'ipc', 'size', 'cr'], [[result.kind, ipc, len(result), report.cr]])
    return 0
