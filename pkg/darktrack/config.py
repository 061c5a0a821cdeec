"""Run configuration: defaults, YAML loading, command line overrides and
validation."""
import logging

import yaml

from darktrack.dca import Thresholds
from darktrack.embed import TrainOpts
from darktrack.exceptions import ConfigException, InputException

log = logging.getLogger(__name__)

_INTS = ('dimension', 'window', 'negatives', 'epochs', 'max_services',
         'max_sentence_len', 'min_cluster_size', 'min_packets',
         'bootstrap_days', 'seed', 'workers')
_FLOATS = ('lr_start', 'lr_end', 'tau0', 'tau1')
_BOOLS = ('collapse_runs', 'mirai_rule', 'mirai_refresh', 'chunked')


class RunConfig(object):
    '''every setting of a run

    :ivar list inputs: initial value: [] - packet log files, in day order
    :ivar str|None outdir: initial value: None - the run directory
    :ivar int dimension: initial value: 200 - embedding size E
    :ivar int window: initial value: 5 - skip-gram context window
    :ivar int negatives: initial value: 5 - negative samples per pair
    :ivar int epochs: initial value: 1 - passes over each daily corpus
    :ivar float lr_start: initial value: 0.025
    :ivar float lr_end: initial value: 0.0001
    :ivar int max_services: initial value: 2500 - busiest services kept in
        the corpus
    :ivar int max_sentence_len: initial value: 10000
    :ivar bool collapse_runs: initial value: True - collapse consecutive
        repeats of a sender in a sentence
    :ivar int min_cluster_size: initial value: 10 - HDBSCAN minClusterSize
    :ivar float tau0: initial value: 0.65 - strong match threshold
    :ivar float tau1: initial value: 0.3 - loose match / activity threshold
    :ivar int min_packets: initial value: 5 - a sender is active with more
        packets than this in a day
    :ivar int bootstrap_days: initial value: 0 - leading days used only to
        train the embeddings
    :ivar int seed: initial value: 0
    :ivar int|None history_horizon: initial value: None - days kept for
        backward matching, all if None
    :ivar int workers: initial value: 1 - more than 1 trains and computes
        distances in parallel, training is then not reproducible
    :ivar bool chunked: initial value: False - compute the distance matrix
        in blocks
    :ivar str|None ground_truth: initial value: None - ``sender_ip,label``
        CSV
    :ivar bool mirai_rule: initial value: True - label fingerprinted
        senders Mirai-like
    :ivar bool mirai_refresh: initial value: False - apply the Mirai rule
        every day instead of once on the first batch
    :ivar bool|str log: initial value: False - log to a temporary file if
        True, to the given path if a string; the name of the logfile can be
        found at ``Pipeline.logfile``
    '''
    def __init__(self):
        self.inputs = []
        self.outdir = None
        self.dimension = 200
        self.window = 5
        self.negatives = 5
        self.epochs = 1
        self.lr_start = 0.025
        self.lr_end = 0.0001
        self.max_services = 2500
        self.max_sentence_len = 10000
        self.collapse_runs = True
        self.min_cluster_size = 10
        self.tau0 = 0.65
        self.tau1 = 0.3
        self.min_packets = 5
        self.bootstrap_days = 0
        self.seed = 0
        self.history_horizon = None
        self.workers = 1
        self.chunked = False
        self.ground_truth = None
        self.mirai_rule = True
        self.mirai_refresh = False
        self.log = False

    @property
    def fields(self):
        '''(list) the setting names, in declaration order'''
        return list(vars(self))

    @classmethod
    def from_file(cls, path):
        '''defaults updated from a YAML mapping, not validated yet so that
        command line overrides can still fix a value

        :raises InputException: if the file can't be read or parsed
        :raises ConfigException: on an unknown setting or a value of the
            wrong type
        '''
        try:
            with open(path) as hndl:
                data = yaml.safe_load(hndl) or {}
        except (OSError, yaml.YAMLError) as err:
            raise InputException(path, str(err))
        if not isinstance(data, dict):
            raise InputException(path, 'configuration must be a mapping')
        return cls().update(data)

    def update(self, mapping):
        '''apply overrides, None values mean "not given" and are skipped

        :param dict mapping: setting -> value

        :returns: (RunConfig) self

        :raises ConfigException: on an unknown setting or a value of the
            wrong type
        '''
        known = set(self.fields)
        for key, val in mapping.items():
            if val is None:
                continue
            if key not in known:
                raise ConfigException(key, 'unknown setting %s' % key)
            setattr(self, key, self._coerce(key, val))
        return self

    @staticmethod
    def _coerce(key, val):
        try:
            if key in _BOOLS:
                if isinstance(val, str):
                    if val.lower() not in ('true', 'false', 'yes', 'no',
                                           '1', '0', 'on', 'off'):
                        raise ValueError(val)
                    return val.lower() in ('true', 'yes', '1', 'on')
                return bool(val)
            if key in _INTS or key == 'history_horizon':
                if isinstance(val, bool):
                    raise ValueError(val)
                if isinstance(val, float):
                    if not val.is_integer():
                        raise ValueError(val)
                    return int(val)
                try:
                    return int(val)
                except ValueError:
                    # '1e3' and friends, integral values only
                    num = float(val)
                    if not num.is_integer():
                        raise
                    return int(num)
            if key in _FLOATS:
                return float(val)
        except (TypeError, ValueError):
            raise ConfigException(key, '%s: invalid value %r' % (key, val))
        if key == 'inputs' and isinstance(val, str):
            return [val]
        return val

    def train_opts(self):
        '''(TrainOpts) the embedding settings'''
        return TrainOpts(self.window, self.negatives, self.epochs,
                         self.lr_start, self.lr_end, workers=self.workers)

    def thresholds(self):
        '''(Thresholds) the tracker settings'''
        return Thresholds(self.tau0, self.tau1)

    def validate(self):
        '''check every setting

        :returns: (RunConfig) self

        :raises ConfigException: naming the first invalid setting
        '''
        if self.dimension < 1:
            raise ConfigException('dimension', 'dimension must be >= 1')
        self.train_opts().validate()
        self.thresholds()
        if self.max_services < 1:
            raise ConfigException('max_services', 'max_services must be >= 1')
        if self.max_sentence_len < 2:
            raise ConfigException('max_sentence_len',
                                  'max_sentence_len must be >= 2')
        if self.min_cluster_size < 2:
            raise ConfigException('min_cluster_size',
                                  'min_cluster_size must be >= 2')
        for name in ('min_packets', 'bootstrap_days', 'seed'):
            if getattr(self, name) < 0:
                raise ConfigException(name, '%s must be >= 0' % name)
        if self.history_horizon is not None and self.history_horizon < 1:
            raise ConfigException('history_horizon',
                                  'history_horizon must be >= 1')
        return self

    def as_dict(self):
        '''(dict) the settings, in declaration order'''
        out = {}
        for key in self.fields:
            val = getattr(self, key)
            out[key] = list(val) if key == 'inputs' else val
        return out

    def dump(self, path):
        '''write the settings as YAML'''
        with open(path, 'w') as hndl:
            yaml.safe_dump(self.as_dict(), hndl, default_flow_style=False,
                           sort_keys=False)
