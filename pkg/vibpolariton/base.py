import json

import numpy as np


class Serializable:
    'Interface for a serializable class'

    def save(self) -> dict:
        """
        Save to a JSON-compatible dictionary

        Returns
        -------
        value : dict
        """
        ...

    def restore(self, state: dict):
        """
        Restore from a dictionary created by `save`

        Parameters
        ----------
        state : dict
        """
        ...

    @classmethod
    def from_state(cls, state: dict):
        'Create an instance directly from a saved dictionary'
        instance = cls.__new__(cls)
        instance.restore(state)
        return instance

    def save_json(self, file_name):
        with open(file_name, 'wt') as f:
            json.dump(self.save(), f, indent=1)

    @classmethod
    def load_json(cls, file_name):
        with open(file_name, 'rt') as f:
            doc = json.load(f)
        return cls.from_state(doc)


def complex_to_json(values):
    'Split a complex array into a JSON-friendly ``{"re": [...], "im": [...]}``'
    values = np.asarray(values, dtype=complex)
    return {'re': [float(v) for v in values.real.ravel()],
            'im': [float(v) for v in values.imag.ravel()],
            'shape': list(values.shape),
            }


def complex_from_json(doc):
    'Inverse of `complex_to_json`'
    values = np.asarray(doc['re']) + 1j * np.asarray(doc['im'])
    return values.reshape(doc.get('shape', values.shape))


def real_from_json(values):
    return np.asarray(values, dtype=float)
