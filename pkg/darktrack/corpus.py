"""Turn a daily batch into the sender "sentences" the embedding trainer
consumes: one sentence per (protocol, destination port) service, senders
in packet order."""
from collections import namedtuple
import logging

from darktrack.exceptions import ConfigException, InputException

log = logging.getLogger(__name__)

MAX_SERVICES = 2500
MAX_SENTENCE_LEN = 10000


class ServiceKey(namedtuple('ServiceKey', ['proto', 'port'])):
    '''a (protocol, destination port) pair, port is 0 for ICMP/GRE'''
    __slots__ = ()

    def __str__(self):
        return '%s/%d' % (self.proto, self.port)


class Corpus(object):
    '''the sentences of one day

    :ivar list sentences: tuples of sender identifiers, each of length >= 2
    :ivar list services: the ServiceKey each sentence was cut from
    :ivar frozenset vocab: senders appearing in at least one sentence
    '''
    def __init__(self, sentences=None, services=None):
        self.sentences = [tuple(sent) for sent in sentences or []]
        self.services = list(services or [])
        if len(self.services) != len(self.sentences):
            raise ValueError('one service per sentence required')
        self.vocab = frozenset(snd for sent in self.sentences for snd in sent)

    @property
    def tokens(self):
        '''(int) total number of sender occurrences'''
        return sum(len(sent) for sent in self.sentences)

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __eq__(self, other):
        return isinstance(other, Corpus) and \
            self.sentences == other.sentences and \
            self.services == other.services

    def __ne__(self, other):
        return not self == other


def build_services(batch, active):
    '''group the packets of active senders by service

    :param DailyBatch batch: the day
    :param set active: senders to keep, others are excluded entirely

    :returns: (dict) ServiceKey -> list of sender identifiers in timestamp
        order
    '''
    services = {}
    for rec in batch.records:
        if rec.sender in active:
            key = ServiceKey(rec.proto, rec.dst_port)
            services.setdefault(key, []).append(rec.sender)
    return services


def _collapse(seq):
    out = []
    for snd in seq:
        if not out or out[-1] != snd:
            out.append(snd)
    return out


def to_corpus(services, max_services=MAX_SERVICES,
              max_sentence_len=MAX_SENTENCE_LEN, collapse_runs=True):
    '''build the corpus from the per-service sequences

    The ``max_services`` busiest services are kept (ties broken by
    (proto, port) ascending), consecutive repeats of a sender are collapsed
    when ``collapse_runs`` is set, long sequences are chunked into windows
    of at most ``max_sentence_len`` and sentences shorter than 2 dropped.

    :param dict services: ServiceKey -> list of senders
    :param int max_services: *Default: 2500*
    :param int max_sentence_len: *Default: 10000*
    :param bool collapse_runs: *Default: True*

    :returns: (Corpus)

    :raises ConfigException: if max_services < 1 or max_sentence_len < 2
    '''
    if max_services < 1:
        raise ConfigException('max_services', 'max_services must be >= 1')
    if max_sentence_len < 2:
        raise ConfigException('max_sentence_len',
                              'max_sentence_len must be >= 2')
    ranked = sorted(services, key=lambda key: (-len(services[key]), key))
    sentences, keys = [], []
    for key in ranked[:max_services]:
        seq = services[key]
        if collapse_runs:
            seq = _collapse(seq)
        for start in range(0, len(seq), max_sentence_len):
            chunk = seq[start:start + max_sentence_len]
            if len(chunk) >= 2:
                sentences.append(chunk)
                keys.append(key)
    return Corpus(sentences, keys)


def build_corpus(batch, active=None, max_services=MAX_SERVICES,
                 max_sentence_len=MAX_SENTENCE_LEN, collapse_runs=True):
    '''build_services followed by to_corpus

    :param DailyBatch batch: the day
    :param set|None active: *Default: None* - the batch's active senders
        if None

    :returns: (Corpus)
    '''
    if active is None:
        active = batch.active_senders
    corpus = to_corpus(build_services(batch, active), max_services,
                       max_sentence_len, collapse_runs)
    log.info('%s: %d sentences, %d senders, %d tokens', batch.day,
             len(corpus), len(corpus.vocab), corpus.tokens)
    return corpus


def dump_corpus(corpus, path):
    '''write the corpus, one sentence per line preceded by a
    ``# service=<proto>/<port>`` comment

    :param Corpus corpus: the corpus
    :param str path: destination file
    '''
    with open(path, 'w', encoding='utf-8', newline='\n') as hndl:
        for key, sent in zip(corpus.services, corpus.sentences):
            hndl.write('# service=%s\n' % (key,))
            hndl.write(' '.join(sent) + '\n')


def load_corpus(path):
    '''read a corpus written by dump_corpus

    :param str path: the dump

    :returns: (Corpus)

    :raises InputException: on a sentence without a service header
    '''
    sentences, keys = [], []
    key = None
    with open(path, encoding='utf-8') as hndl:
        for lineno, line in enumerate(hndl, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith('# service='):
                proto, port = line[len('# service='):].split('/')
                key = ServiceKey(proto, int(port))
            elif key is None:
                raise InputException(path, 'line %d: sentence without a '
                                     'service header' % lineno)
            else:
                sentences.append(line.split())
                keys.append(key)
                key = None
    return Corpus(sentences, keys)
