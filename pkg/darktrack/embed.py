"""Sender embeddings: skip-gram with negative sampling, trained one daily
corpus at a time on top of the previous day's vectors (warm start).

Senders are appended to the vocabulary the first time they are seen and
are only updated on the days they appear in the corpus, negatives are
drawn from that day's senders, so the vectors of absent senders stay
exactly as they were.
"""
from concurrent.futures import ThreadPoolExecutor
import ipaddress
import logging
import struct
import zlib

import numpy as np
from scipy.special import expit

from darktrack.exceptions import (ConfigException, InputException,
                                  UndefinedDistanceException,
                                  UnknownSenderException)

log = logging.getLogger(__name__)

DIMENSION = 200
MAGIC = b'DTEMB'
FORMAT_VERSION = 1
_HEADER = struct.Struct('<5sHIQII')


class TrainOpts(object):
    '''training hyper-parameters, one set per run

    :ivar int window: initial value: 5 - context positions on each side
    :ivar int negatives: initial value: 5 - negative samples per pair
    :ivar int epochs: initial value: 1 - passes over each daily corpus
    :ivar float lr_start: initial value: 0.025 - learning rate of the
        first pair of a batch
    :ivar float lr_end: initial value: 1e-4 - learning rate of the last pair
    :ivar float unigram_power: initial value: 0.75 - exponent of the
        negative sampling distribution
    :ivar int workers: initial value: 1 - more than one trains sentence
        shards in threads with unsynchronised updates, fast but not
        reproducible
    '''
    def __init__(self, window=5, negatives=5, epochs=1, lr_start=0.025,
                 lr_end=1e-4, unigram_power=0.75, workers=1):
        self.window = window
        self.negatives = negatives
        self.epochs = epochs
        self.lr_start = lr_start
        self.lr_end = lr_end
        self.unigram_power = unigram_power
        self.workers = workers

    def validate(self):
        '''raise ConfigException for the first out of range value'''
        for name in ('window', 'negatives', 'epochs', 'workers'):
            if getattr(self, name) < 1:
                raise ConfigException(name, '%s must be >= 1' % name)
        if not 0 < self.lr_end <= self.lr_start:
            raise ConfigException('lr_end',
                                  'need 0 < lr_end <= lr_start')
        return self


def _sender_key(sender):
    try:
        return int(ipaddress.IPv4Address(sender))
    except ValueError:
        return 2 ** 32 + zlib.crc32(sender.encode('utf-8'))


class EmbeddingModel(object):
    '''vocabulary of senders with their input (embedding) and output
    (context) vectors

    :param int dimension: the embedding size E
    :param int seed: seeds vector initialisation and negative sampling

    :ivar dict vocab: sender -> row index
    :ivar numpy.ndarray input_vectors: |vocab| x E, the embeddings
    :ivar numpy.ndarray output_vectors: |vocab| x E, the context weights
    :ivar numpy.ndarray unigram_index: rows eligible as negatives
    :ivar numpy.ndarray unigram_table: cumulative sampling distribution
        over unigram_index
    :ivar int batches_trained: number of non-empty batches seen
    :ivar bool last_batch_empty: the last training call had nothing to do
    '''
    def __init__(self, dimension, seed=0):
        self.dimension = dimension
        self.seed = seed
        self.vocab = {}
        self.senders = []
        self.input_vectors = np.zeros((0, dimension))
        self.output_vectors = np.zeros((0, dimension))
        self.unigram_index = np.zeros(0, dtype=np.int64)
        self.unigram_table = np.zeros(0)
        self.batches_trained = 0
        self.last_batch_empty = False

    def __len__(self):
        return len(self.senders)

    def __contains__(self, sender):
        return sender in self.vocab

    def __eq__(self, other):
        if not isinstance(other, EmbeddingModel):
            return NotImplemented
        return (self.dimension == other.dimension and
                self.seed == other.seed and
                self.senders == other.senders and
                self.batches_trained == other.batches_trained and
                _same(self.input_vectors, other.input_vectors) and
                _same(self.output_vectors, other.output_vectors) and
                _same(self.unigram_index, other.unigram_index) and
                _same(self.unigram_table, other.unigram_table))

    def __ne__(self, other):
        return not self == other

    def seeded_vector(self, sender):
        '''the initial input vector of a sender, uniform in
        [-0.5/E, 0.5/E) and a function of (seed, sender) only'''
        rng = np.random.default_rng([self.seed, _sender_key(sender)])
        return (rng.random(self.dimension) - 0.5) / self.dimension

    def add_senders(self, senders):
        '''append unseen senders to the vocabulary with seeded input vectors
        and zero output vectors

        :param iter senders: sender identifiers

        :returns: (int) number of senders added
        '''
        new = sorted({snd for snd in senders if snd not in self.vocab},
                     key=_sender_key)
        if not new:
            return 0
        for snd in new:
            self.vocab[snd] = len(self.senders)
            self.senders.append(snd)
        fresh = np.array([self.seeded_vector(snd) for snd in new])
        self.input_vectors = np.vstack([self.input_vectors, fresh])
        self.output_vectors = np.vstack(
            [self.output_vectors, np.zeros((len(new), self.dimension))])
        return len(new)

    def set_unigram(self, corpus, power=0.75):
        '''build the negative sampling table from the corpus token counts
        raised to ``power``'''
        counts = {}
        for sent in corpus:
            for snd in sent:
                row = self.vocab[snd]
                counts[row] = counts.get(row, 0) + 1
        rows = np.array(sorted(counts), dtype=np.int64)
        weights = np.array([counts[row] for row in rows],
                           dtype=float) ** power
        self.unigram_index = rows
        self.unigram_table = np.cumsum(weights) / weights.sum()

    def draw_negatives(self, rng, shape):
        '''sample rows from the unigram table'''
        pos = np.searchsorted(self.unigram_table, rng.random(shape),
                              side='right')
        np.minimum(pos, len(self.unigram_index) - 1, out=pos)
        return self.unigram_index[pos]


def _same(left, right):
    return left.shape == right.shape and left.dtype == right.dtype and \
        left.tobytes() == right.tobytes()


def init_model(dimension=DIMENSION, seed=0):
    '''create an empty model

    :param int dimension: *Default: 200* - the embedding size E
    :param int seed: *Default: 0*

    :returns: (EmbeddingModel)

    :raises ConfigException: if dimension < 1
    '''
    if dimension < 1:
        raise ConfigException('dimension', 'dimension (E) must be >= 1')
    return EmbeddingModel(dimension, seed)


def sgns_loss(u, targets, labels, weights=None):
    '''negative log likelihood of one skip-gram pair with its negatives

    :param numpy.ndarray u: input vector of the centre sender, shape (E,)
    :param numpy.ndarray targets: output vectors, context first then the
        negatives, shape (1+k, E)
    :param numpy.ndarray labels: 1 for the context row, 0 for negatives
    :param numpy.ndarray|None weights: *Default: None* - per row weights,
        0 masks a row

    :returns: (float) -[log s(u.w_ctx) + sum log s(-u.w_neg)]
    '''
    scores = targets.dot(u)
    terms = np.logaddexp(0.0, -(2.0 * labels - 1.0) * scores)
    if weights is not None:
        terms = terms * weights
    return float(terms.sum())


def sgns_gradients(u, targets, labels, weights=None):
    '''analytic gradient of sgns_loss

    :returns: (tuple) gradient w.r.t. u (E,), gradient w.r.t. targets
        (1+k, E)
    '''
    coeff = expit(targets.dot(u)) - labels
    if weights is not None:
        coeff = coeff * weights
    return coeff.dot(targets), np.outer(coeff, u)


def _pairs(length, window):
    centers, contexts = [], []
    for pos in range(length):
        for other in range(max(0, pos - window),
                           min(length, pos + window + 1)):
            if other != pos:
                centers.append(pos)
                contexts.append(other)
    return centers, contexts


def _pair_count(length, window):
    return sum(min(pos, window) + min(length - 1 - pos, window)
               for pos in range(length))


def _train_shard(model, shard, opts, rng):
    inp, out = model.input_vectors, model.output_vectors
    total = opts.epochs * sum(_pair_count(len(sent), opts.window)
                              for sent in shard)
    if not total:
        return 0
    labels = np.zeros(opts.negatives + 1)
    labels[0] = 1.0
    span = opts.lr_start - opts.lr_end
    done = 0
    for _ in range(opts.epochs):
        for sent in shard:
            centers, contexts = _pairs(len(sent), opts.window)
            negs = model.draw_negatives(rng, (len(centers), opts.negatives))
            for num, (pos, other) in enumerate(zip(centers, contexts)):
                center, ctx = sent[pos], sent[other]
                lrate = opts.lr_start - span * (done / max(total - 1, 1))
                targets = np.concatenate(([ctx], negs[num]))
                weights = np.ones(len(targets))
                weights[1:][negs[num] == ctx] = 0.0
                grad_u, grad_t = sgns_gradients(inp[center], out[targets],
                                                labels, weights)
                np.add.at(out, targets, -lrate * grad_t)
                inp[center] -= lrate * grad_u
                done += 1
    return done


def train_incremental(model, corpus, opts=None):
    '''train the model on one daily corpus, warm starting from its current
    vectors

    :param EmbeddingModel model: updated in place
    :param Corpus corpus: the day's sentences
    :param TrainOpts|None opts: *Default: None* - TrainOpts() if None

    :returns: (EmbeddingModel) the same model; ``last_batch_empty`` tells if
        the corpus had no sentences
    '''
    opts = (opts or TrainOpts()).validate()
    if not corpus.vocab:
        log.warning('empty corpus, model left unchanged')
        model.last_batch_empty = True
        return model
    added = model.add_senders(corpus.vocab)
    model.set_unigram(corpus, opts.unigram_power)
    sentences = [np.array([model.vocab[snd] for snd in sent],
                          dtype=np.int64) for sent in corpus]
    if opts.workers <= 1:
        rng = np.random.default_rng([model.seed, model.batches_trained])
        pairs = _train_shard(model, sentences, opts, rng)
    else:
        shards = [sentences[num::opts.workers]
                  for num in range(opts.workers)]
        with ThreadPoolExecutor(max_workers=opts.workers) as pool:
            jobs = [pool.submit(_train_shard, model, shard, opts,
                                np.random.default_rng(
                                    [model.seed, model.batches_trained, num]))
                    for num, shard in enumerate(shards)]
            pairs = sum(job.result() for job in jobs)
    model.batches_trained += 1
    model.last_batch_empty = False
    log.info('trained on %d pairs, %d new senders, vocabulary %d', pairs,
             added, len(model))
    return model


def embedding(model, sender):
    '''return (a copy of) the embedding of sender

    :raises UnknownSenderException: if sender is not in the vocabulary
    '''
    try:
        return model.input_vectors[model.vocab[sender]].copy()
    except KeyError:
        raise UnknownSenderException(sender)


def cosine_distance(u, v):
    '''1 - u.v / (|u| |v|), in [0, 2]

    :raises UndefinedDistanceException: if either vector is all zeros
    :raises ValueError: on a length mismatch
    '''
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError('vectors of different length')
    norm = np.linalg.norm(u) * np.linalg.norm(v)
    if norm == 0:
        raise UndefinedDistanceException()
    return float(min(2.0, max(0.0, 1.0 - u.dot(v) / norm)))


def most_similar(model, sender, topn=10):
    '''the senders closest to sender in cosine distance

    :returns: (list) of (sender, distance), nearest first
    '''
    vec = embedding(model, sender)
    norms = np.linalg.norm(model.input_vectors, axis=1)
    if not norms[model.vocab[sender]]:
        raise UndefinedDistanceException(sender)
    with np.errstate(invalid='ignore', divide='ignore'):
        dists = 1.0 - model.input_vectors.dot(vec) / (norms * norms[
            model.vocab[sender]])
    order = [row for row in np.argsort(dists, kind='stable')
             if row != model.vocab[sender] and norms[row]]
    return [(model.senders[row], float(dists[row])) for row in order[:topn]]


def save_model(model, path):
    '''write a checkpoint, see docs/formats.rst for the layout'''
    with open(path, 'wb') as hndl:
        hndl.write(_HEADER.pack(MAGIC, FORMAT_VERSION, model.dimension,
                                model.seed, model.batches_trained,
                                len(model)))
        for snd in model.senders:
            raw = snd.encode('utf-8')
            hndl.write(struct.pack('<H', len(raw)) + raw)
        hndl.write(np.ascontiguousarray(model.input_vectors,
                                        dtype='<f8').tobytes())
        hndl.write(np.ascontiguousarray(model.output_vectors,
                                        dtype='<f8').tobytes())
        hndl.write(struct.pack('<I', len(model.unigram_index)))
        hndl.write(model.unigram_index.astype('<i8').tobytes())
        hndl.write(model.unigram_table.astype('<f8').tobytes())


def load_model(path):
    '''read a checkpoint written by save_model

    :raises InputException: if the file is not a checkpoint
    '''
    with open(path, 'rb') as hndl:
        buf = hndl.read()
    try:
        magic, version, dim, seed, batches, size = \
            _HEADER.unpack_from(buf, 0)
    except struct.error:
        raise InputException(path, 'truncated checkpoint')
    if magic != MAGIC or version != FORMAT_VERSION:
        raise InputException(path, 'not a version %d checkpoint' %
                             FORMAT_VERSION)
    model = EmbeddingModel(dim, seed)
    model.batches_trained = batches
    offset = _HEADER.size
    try:
        for row in range(size):
            length, = struct.unpack_from('<H', buf, offset)
            offset += 2
            snd = buf[offset:offset + length].decode('utf-8')
            offset += length
            model.vocab[snd] = row
            model.senders.append(snd)
        matrices = []
        for _ in range(2):
            mat = np.frombuffer(buf, dtype='<f8', count=size * dim,
                                offset=offset)
            matrices.append(mat.astype(float).reshape(size, dim))
            offset += size * dim * 8
        model.input_vectors, model.output_vectors = matrices
        count, = struct.unpack_from('<I', buf, offset)
        offset += 4
        model.unigram_index = np.frombuffer(
            buf, dtype='<i8', count=count, offset=offset).astype(np.int64)
        offset += count * 8
        model.unigram_table = np.frombuffer(
            buf, dtype='<f8', count=count, offset=offset).astype(float)
    except (struct.error, ValueError, UnicodeDecodeError):
        raise InputException(path, 'truncated checkpoint')
    return model
