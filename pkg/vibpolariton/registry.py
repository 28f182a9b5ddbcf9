import logging

logger = logging.getLogger(__name__)


class ExperimentRegistry:
    def __init__(self):
        self._item_creators = {}
        self._categories = set()

    def register_experiment(self, creator, category='', **init_kwargs):
        '''
        Register an experiment class under its ``name``

        Parameters
        ----------
        creator : type
            Experiment subclass with a ``name`` attribute
        category : str, optional
        **init_kwargs
            Passed to the experiment on creation
        '''
        name = creator.name
        if name in self._item_creators:
            raise ValueError('Experiment {!r} already registered'.format(name))
        self._item_creators[name] = (creator, init_kwargs)
        self._categories.add(category)
        logger.debug('Registered experiment %s (%s)', name, category)

    def create(self, experiment_name: str):
        """
        Create

        Parameters
        ----------
        experiment_name : str

        Returns
        -------
        value : Experiment
        """
        cls, kwargs = self._item_creators[experiment_name]
        return cls(**kwargs)

    def names(self) -> list:
        'Registered names in registration order'
        return list(self._item_creators)

    def categories(self) -> set:
        """
        Categories

        Returns
        -------
        value : set
        """
        return self._categories
