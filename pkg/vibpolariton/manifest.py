'''
Run manifests: resolved configuration, provenance and checksummed outputs
'''
import contextlib
import hashlib
import logging
import pathlib
import time

from ._version import get_versions
from .base import Serializable
from .spectra import write_csv

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.json'


def code_version() -> str:
    'Version from git metadata, or the one frozen into a built package'
    return get_versions()['version']


def file_checksum(path) -> str:
    'SHA-256 of a file'
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 16), b''):
            digest.update(chunk)
    return digest.hexdigest()


class RunManifest(Serializable):
    '''
    Record of one command invocation

    All output files are written through the manifest so that each one is
    listed with its checksum.

    Parameters
    ----------
    directory : pathlib.Path
        Output directory (created if missing)
    command : str
    config : dict
        Resolved configuration echo
    seed : int
    '''

    def __init__(self, directory, command='', config=None, seed=None):
        self.directory = pathlib.Path(directory)
        self.command = command
        self.config = dict(config or {})
        self.seed = seed
        self.version = code_version()
        self.wall_times = {}
        self.files = []
        self.convergence = {}
        self.notes = []
        self.exit_code = None

    @contextlib.contextmanager
    def stage(self, name: str):
        'Time a block of work under ``name``'
        logger.info('Starting %s', name)
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            self.wall_times[name] = self.wall_times.get(name, 0.0) + elapsed
            logger.info('Finished %s in %.2f s', name, elapsed)

    def path(self, name) -> pathlib.Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        return self.directory / name

    def add_file(self, path) -> pathlib.Path:
        path = pathlib.Path(path)
        try:
            relative = path.relative_to(self.directory)
        except ValueError:
            relative = path
        self.files = [entry for entry in self.files
                      if entry['path'] != str(relative)]
        self.files.append({'path': str(relative),
                           'sha256': file_checksum(path)})
        return path

    def write_csv(self, name, rows, fieldnames=None) -> pathlib.Path:
        return self.add_file(write_csv(self.path(name), rows, fieldnames))

    def write_text(self, name, text: str) -> pathlib.Path:
        path = self.path(name)
        path.write_text(text)
        return self.add_file(path)

    def write_json(self, name, obj: Serializable) -> pathlib.Path:
        path = self.path(name)
        obj.save_json(path)
        return self.add_file(path)

    def record_convergence(self, name: str, **summary):
        self.convergence.setdefault(name, {}).update(summary)

    def note(self, message: str):
        logger.info(message)
        self.notes.append(message)

    def save(self) -> dict:
        return {'command': self.command,
                'version': self.version,
                'seed': self.seed,
                'config': self.config,
                'wall_times': dict(self.wall_times),
                'files': list(self.files),
                'convergence': dict(self.convergence),
                'notes': list(self.notes),
                'exit_code': self.exit_code,
                }

    def restore(self, state: dict):
        self.directory = pathlib.Path('.')
        self.command = state['command']
        self.version = state['version']
        self.seed = state['seed']
        self.config = state['config']
        self.wall_times = state['wall_times']
        self.files = state['files']
        self.convergence = state['convergence']
        self.notes = state.get('notes', [])
        self.exit_code = state.get('exit_code')

    def verify(self) -> list:
        'Files whose checksum no longer matches'
        return [entry['path'] for entry in self.files
                if file_checksum(self.directory / entry['path']) !=
                entry['sha256']]

    def write(self, name=MANIFEST_NAME) -> pathlib.Path:
        path = self.path(name)
        self.save_json(path)
        logger.info('Wrote manifest %s listing %d files', path,
                    len(self.files))
        return path

    @classmethod
    def read(cls, path) -> 'RunManifest':
        path = pathlib.Path(path)
        manifest = cls.load_json(path)
        manifest.directory = path.parent
        return manifest
