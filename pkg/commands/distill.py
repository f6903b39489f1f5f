"""distill: optimise compensators and write the distilled bundle."""

import logging
import os

from commands.common import RunContext, add_common_arguments, write_summary
from utils import storage
from utils.csv_export import UFC_TRACE_HEADER, write_csv
from utils.distill import distill
from utils.metrics import compression_ratio

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser('distill', help='distill the training split into a compensator bundle')
    add_common_arguments(parser)
    parser.set_defaults(handler=run)


def run(args) -> int:
    ctx = RunContext.from_args(args)
    params = ctx.config.distill
    dataset = ctx.load_dataset()
    ensemble = ctx.teacher_store().ensemble()

    bundle = distill(dataset.train(), ensemble, params.ipc, params.alpha, params.synthesis, params.seed, ctx.threads)
    bundle.provenance['stamp'] = ctx.stamp('bundle')

    directory = ctx.prepare_dir('bundle')
    storage.save_bundle(bundle, os.path.join(directory, 'data'))
    trace_rows = [[k, j, it, value]
                  for k, subset in enumerate(bundle.subsets)
                  for j, ufc in enumerate(subset.compensators)
                  for it, value in enumerate(ufc.trace)]
    write_csv(os.path.join(directory, 'ufc_trace.csv'), UFC_TRACE_HEADER, trace_rows)

    report = compression_ratio(bundle, dataset)
    with open(os.path.join(directory, 'budget.json'), 'w', encoding='utf-8') as f:
        f.write(report.to_json() + '\n')

    rows = [[k, j, ufc.optimized_against, ufc.initial_objective, ufc.final_objective]
            for k, subset in enumerate(bundle.subsets) for j, ufc in enumerate(subset.compensators)]
    summary = dict(bundle.to_dict(), budget=report.to_dict())
    write_summary(directory, summary, ['k', 'j', 'teacher', 'initial', 'final'], rows)
    return 0
