"""Run directories, artifact guards and summaries shared by every command."""

import json
import logging
import os
import shutil
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import config
from models.dataset import LabeledDataset
from models.run_config import ARTIFACT_SECTIONS, RunConfig
from utils import storage
from utils.errors import ArtifactError
from utils.student import TeacherStore

logger = logging.getLogger(__name__)

RUN_CONFIG = 'run_config.json'


def add_common_arguments(parser) -> None:
    parser.add_argument('--run-dir', required=True, help='run directory (relative paths resolve under DISTILL_RUNS_DIR)')
    parser.add_argument('--config', help='JSON config file; defaults to the run directory\'s run_config.json')
    parser.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                        help='override a config value, e.g. distill.ipc=10 (repeatable)')
    parser.add_argument('--force', action='store_true', help='replace an existing artifact directory')
    parser.add_argument('--threads', type=int, default=None, help='worker cap for independent jobs')
    parser.add_argument('--verbose', action='store_true', help='debug logging')


@dataclass
class RunContext:
    run_dir: str
    config: RunConfig
    force: bool = False
    threads: Optional[int] = None

    @classmethod
    def from_args(cls, args) -> 'RunContext':
        run_dir = args.run_dir if os.path.isabs(args.run_dir) else os.path.join(config.RUNS_DIR, args.run_dir)
        stored = os.path.join(run_dir, RUN_CONFIG)
        path = args.config or (stored if os.path.isfile(stored) else config.DEFAULT_CONFIG_PATH)
        run_config = RunConfig.load(path, args.overrides) if path else RunConfig().merged(args.overrides)

        os.makedirs(run_dir, exist_ok=True)
        if not os.path.isfile(stored):
            with open(stored, 'w', encoding='utf-8') as f:
                json.dump(run_config.to_dict(), f, indent=2, sort_keys=True)
                f.write('\n')
        threads = args.threads if args.threads is not None else config.THREADS
        return cls(run_dir, run_config, args.force, threads)

    def path(self, *parts: str) -> str:
        return os.path.join(self.run_dir, *parts)

    def prepare_dir(self, name: str) -> str:
        """Fresh artifact directory; an existing non-empty one needs --force."""
        directory = self.path(name)
        if os.path.isdir(directory) and os.listdir(directory):
            if not self.force:
                raise ArtifactError("artifact directory exists, pass --force to replace it", directory)
            logger.warning("Replacing %s", directory)
            shutil.rmtree(directory)
        os.makedirs(directory, exist_ok=True)
        return directory

    def stamp(self, kind: str) -> Dict:
        sections = ARTIFACT_SECTIONS[kind]
        return {
            'config_hash': self.config.config_hash(),
            'section_hash': self.config.section_hash(*sections),
            'sections': list(sections),
        }

    def check_stamp(self, stamp: Dict, kind: str, path: str) -> None:
        expected = self.config.section_hash(*ARTIFACT_SECTIONS[kind])
        if stamp.get('section_hash') != expected:
            raise ArtifactError(
                f"built with a different configuration of {', '.join(ARTIFACT_SECTIONS[kind])}; rebuild it or use its config",
                path,
            )

    def require(self, name: str) -> str:
        directory = self.path(name)
        if not os.path.isdir(directory):
            raise ArtifactError("required artifact is missing", directory)
        return directory

    def load_dataset(self) -> LabeledDataset:
        directory = self.require('dataset')
        dataset = storage.load_dataset(directory)
        self.check_stamp(dataset.metadata.get('stamp', {}), 'dataset', os.path.join(directory, storage.MANIFEST))
        return dataset

    def teacher_paths(self) -> Dict[str, str]:
        paths = {}
        for arch in self.config.ensemble:
            directory = self.require(os.path.join('teachers', arch))
            manifest = storage.read_manifest(directory)
            self.check_stamp(manifest.get('stamp', {}), 'teacher', os.path.join(directory, storage.MANIFEST))
            paths[arch] = directory
        return paths

    def teacher_store(self) -> TeacherStore:
        return TeacherStore.from_paths(self.teacher_paths())

    def load_source(self, name: str):
        """A distilled bundle or baseline set stored under <name>/data."""
        directory = self.require(os.path.join(name, 'data'))
        data = storage.load_bundle(directory)
        kind = 'bundle' if name == 'bundle' else 'baseline'
        self.check_stamp(data.provenance.get('stamp', {}), kind, os.path.join(directory, storage.MANIFEST))
        return data


def format_table(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    """Fixed-width text table."""
    def cell(value):
        return f'{value:.4f}' if isinstance(value, float) else str(value)

    cells = [[cell(v) for v in row] for row in rows]
    widths = [max([len(h)] + [len(r[i]) for r in cells]) for i, h in enumerate(header)]
    lines = ['  '.join(h.ljust(w) for h, w in zip(header, widths)),
             '  '.join('-' * w for w in widths)]
    lines += ['  '.join(v.ljust(w) for v, w in zip(r, widths)) for r in cells]
    return '\n'.join(lines) + '\n'


def write_summary(directory: str, summary: Dict, header: Sequence[str], rows: List[Sequence]) -> str:
    """summary.json plus summary.txt; the table is also printed."""
    with open(os.path.join(directory, 'summary.json'), 'w', encoding='utf-8') as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write('\n')
    table = format_table(header, rows)
    with open(os.path.join(directory, 'summary.txt'), 'w', encoding='utf-8') as f:
        f.write(table)
    print(table, end='')
    return table
