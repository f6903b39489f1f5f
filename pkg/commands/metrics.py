"""metrics: budget accounting and diagnostics of a bundle or baseline set."""

import json
import logging
import os

import numpy as np

from commands.common import RunContext, add_common_arguments, write_summary
from models.bundle import DistilledDataset
from utils import storage
from utils.csv_export import write_grid
from utils.metrics import (
    compression_ratio, export_penultimate_features, feature_duplication, grid_coordinates,
    label_linearity_gap, loss_landscape_grid, sample_pairs,
)
from utils.pipeline import dynamic_label_epochs, infer_class_groups
from utils.student import as_training_set

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser('metrics', help='compression ratio and diagnostics')
    add_common_arguments(parser)
    parser.add_argument('--source', choices=('bundle', 'baseline_random', 'baseline_class_specific'), default='bundle')
    for name in ('cr', 'duplication', 'landscape', 'linearity', 'features'):
        parser.add_argument(f'--{name}', dest=name, action='store_true', default=None,
                            help=f'compute {name} (defaults come from the metrics config section)')
    parser.set_defaults(handler=run)


def _dump(directory: str, name: str, data) -> None:
    with open(os.path.join(directory, name), 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write('\n')


def run(args) -> int:
    ctx = RunContext.from_args(args)
    toggles = ctx.config.metrics
    explicit = [n for n in ('cr', 'duplication', 'landscape', 'linearity', 'features') if getattr(args, n)]
    wanted = set(explicit) if explicit else {
        n for n, on in (('cr', toggles.compression_ratio), ('duplication', toggles.duplication),
                        ('landscape', toggles.landscape), ('linearity', toggles.linearity),
                        ('features', toggles.features)) if on
    }

    dataset = ctx.load_dataset()
    source = ctx.load_source(args.source)
    data_dir = ctx.path(args.source, 'data')
    directory = ctx.prepare_dir(os.path.join('metrics', args.source))
    summary = {'source': args.source}
    rows = []

    if 'cr' in wanted:
        static = compression_ratio(source, dataset)
        on_disk = storage.directory_bytes(data_dir)
        summary['budget'] = {'static': static.to_dict(), 'directory_bytes': on_disk,
                             'matches_directory': static.total_bytes == on_disk}
        if isinstance(source, DistilledDataset):
            epochs = dynamic_label_epochs(ctx.config, source.M)
            dynamic = compression_ratio(source, dataset, 'dynamic', epochs)
            summary['budget']['dynamic'] = dynamic.to_dict()
            rows.append(['cr_dynamic', dynamic.cr])
        _dump(directory, 'budget.json', summary['budget'])
        rows.append(['cr_static', static.cr])

    need_teachers = wanted & {'duplication', 'landscape', 'linearity', 'features'}
    ensemble = ctx.teacher_store().ensemble() if need_teachers else []
    probe = next((m for m in ensemble if m.spec.architecture_id == toggles.probe_architecture),
                 ensemble[0] if ensemble else None)

    if 'duplication' in wanted:
        groups = infer_class_groups(source) if isinstance(source, DistilledDataset) else source.by_class()
        duplication = feature_duplication(probe, groups)
        summary['duplication'] = duplication
        _dump(directory, 'duplication.json', duplication)
        rows.append(['duplication_mean', duplication['mean']])

    if 'landscape' in wanted:
        rng = np.random.default_rng(ctx.config.distill.seed)
        train = dataset.train()
        anchor = train.instances[0]
        dir_u, dir_v = rng.normal(size=(2, dataset.dim))
        grid = loss_landscape_grid(probe, anchor, int(train.labels[0]), dir_u, dir_v,
                                   toggles.landscape_extent, toggles.landscape_resolution)
        coords = grid_coordinates(toggles.landscape_extent, toggles.landscape_resolution)
        write_grid(os.path.join(directory, 'landscape.csv'), grid, coords, coords)
        center = toggles.landscape_resolution // 2
        summary['landscape'] = {'center': float(grid[center, center]), 'min': float(grid.min()),
                                'center_is_min': bool(grid[center, center] <= grid.min())}
        rows.append(['landscape_center', summary['landscape']['center']])

    if 'linearity' in wanted:
        pairs = sample_pairs(as_training_set(source), toggles.linearity_pairs, ctx.config.distill.seed)
        gap = label_linearity_gap(ensemble, pairs, toggles.linearity_lambdas)
        summary['linearity'] = gap
        _dump(directory, 'linearity.json', gap)
        rows.append(['linearity_gap_mean', gap['mean']])

    if 'features' in wanted:
        export_penultimate_features(probe, dataset.test(), os.path.join(directory, 'features.csv'))
        rows.append(['features_rows', len(dataset.test())])

    write_summary(directory, summary, ['metric', 'value'], rows)
    return 0
