"""evaluate: top-1 accuracy of a stored model on the test split."""

import logging
import os

from commands.common import RunContext, add_common_arguments, write_summary
from utils import storage
from utils.csv_export import read_trace
from utils.errors import ArtifactError
from utils.student import evaluate

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser('evaluate', help='evaluate a stored model')
    add_common_arguments(parser)
    parser.add_argument('--model', required=True, help='model directory inside the run, e.g. teachers/A1')
    parser.set_defaults(handler=run)


def run(args) -> int:
    ctx = RunContext.from_args(args)
    dataset = ctx.load_dataset()
    model_dir = ctx.path(args.model)
    if not os.path.isdir(model_dir):
        raise ArtifactError("model directory not found", model_dir)
    model = storage.load_model(model_dir)
    top1 = evaluate(model, dataset.test(), ctx.threads)

    summary = {'model': args.model, 'architecture_id': model.spec.architecture_id, 'test_top1': top1}
    trace_path = os.path.join(model_dir, 'trace.csv')
    if os.path.isfile(trace_path):
        trace = read_trace(trace_path)
        if trace:
            summary['trace_test_top1'] = trace[-1]['test_top1']
            summary['matches_trace'] = trace[-1]['test_top1'] == top1
            if not summary['matches_trace']:
                logger.warning("%s: accuracy %.4f differs from the trace's last row %.4f",
                               trace_path, top1, trace[-1]['test_top1'])

    directory = ctx.prepare_dir(os.path.join('evaluations', args.model.strip('/').replace('/', '_')))
    write_summary(directory, summary, ['model', 'architecture', 'test_top1'],
                  [[args.model, model.spec.architecture_id, top1]])
    return 0
