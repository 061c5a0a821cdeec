"""Density based hierarchical clustering (HDBSCAN) of the day's sender
embeddings under the cosine distance, the Partition type it produces and
silhouette scoring.

Clustering runs scikit-learn's HDBSCAN on the precomputed distances with
excess-of-mass selection and the core distance taken at the
min_cluster_size-th neighbour.  The root of the condensed tree is never
selected, so a day whose senders form one dense group is reported as
noise.  Cluster numbers are made deterministic by the lowest member row.
"""
import csv
from datetime import date
import logging

import numpy as np
from sklearn.cluster import HDBSCAN
from sklearn.metrics import (pairwise_distances, pairwise_distances_chunked,
                             silhouette_samples)

from darktrack.exceptions import (ConfigException, ContractException,
                                  InputException, UndefinedDistanceException)
from darktrack.ingest import sender_key

log = logging.getLogger(__name__)

NOISE = -1
MIN_CLUSTER_SIZE = 10
METRIC = 'cosine'
SNAPSHOT_HEADER = ('day', 'sender', 'cluster')


class Partition(object):
    '''the clusters of one day, noise included

    :param datetime.date day: the day
    :param dict clusters: cluster index (>= 0) -> iterable of senders
    :param iter noise: *Default: ()* - senders of the noise cluster (-1)
    :param int|None min_cluster_size: *Default: None* - None for imported
        partitions
    :param str metric: *Default: 'cosine'*

    :ivar set flags: warnings attached to the partition, e.g.
        ``'too-few-points'`` or ``'missing-day'``

    :raises ContractException: if clusters overlap or one is smaller than
        min_cluster_size
    '''
    def __init__(self, day, clusters, noise=(), min_cluster_size=None,
                 metric=METRIC):
        self.day = day
        self.clusters = {int(idx): frozenset(members)
                         for idx, members in clusters.items()}
        self.noise = frozenset(noise)
        self.min_cluster_size = min_cluster_size
        self.metric = metric
        self.flags = set()
        seen = set(self.noise)
        for idx in sorted(self.clusters):
            members = self.clusters[idx]
            if idx < 0:
                raise ContractException('cluster index %d < 0' % idx)
            if not members:
                raise ContractException('cluster %d is empty' % idx)
            if min_cluster_size and len(members) < min_cluster_size:
                raise ContractException('cluster %d has %d < %d members' %
                                        (idx, len(members), min_cluster_size))
            if seen & members:
                raise ContractException('cluster %d overlaps another '
                                        'cluster' % idx)
            seen |= members

    @classmethod
    def empty(cls, day):
        '''a partition without senders'''
        return cls(day, {})

    @property
    def indices(self):
        '''(list) non-noise cluster indices, ascending'''
        return sorted(self.clusters)

    @property
    def senders(self):
        '''(frozenset) every sender of the day, noise included'''
        return self.noise.union(*self.clusters.values())

    def members(self, idx):
        '''the senders of cluster idx, -1 gives the noise cluster'''
        if idx == NOISE:
            return self.noise
        return self.clusters[idx]

    def assignments(self):
        '''return a map sender -> cluster index (-1 for noise)'''
        out = dict.fromkeys(self.noise, NOISE)
        for idx, members in self.clusters.items():
            out.update(dict.fromkeys(members, idx))
        return out

    def cluster_of(self, sender):
        '''(int) the cluster index of sender, -1 for noise

        :raises KeyError: if sender is not in the partition
        '''
        if sender in self.noise:
            return NOISE
        for idx, members in self.clusters.items():
            if sender in members:
                return idx
        raise KeyError(sender)

    def as_sets(self):
        '''(frozenset) the non-noise clusters as a set of sets, independent
        of the index assignment'''
        return frozenset(self.clusters.values())

    def __len__(self):
        return len(self.clusters)

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return self.day == other.day and self.clusters == other.clusters \
            and self.noise == other.noise

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return '<Partition %s: %d clusters, %d noise>' % (
            self.day, len(self.clusters), len(self.noise))


class SilhouetteReport(object):
    '''silhouette scores of the non-noise senders of a partition

    :ivar dict values: sender -> s in [-1, 1]
    :ivar dict cluster_means: cluster index -> mean s
    :ivar float|None mean: mean s over all scored senders
    :ivar bool defined: False with fewer than two non-noise clusters, the
        other attributes are then empty / None
    '''
    def __init__(self, values=None, cluster_means=None, mean=None,
                 defined=True):
        self.values = values or {}
        self.cluster_means = cluster_means or {}
        self.mean = mean
        self.defined = defined

    @classmethod
    def undefined(cls):
        return cls(defined=False)


def pairwise_cosine_matrix(embeddings, senders=None, workers=1,
                           chunked=False):
    '''compute the symmetric cosine distance matrix of a set of embeddings

    :param dict embeddings: sender -> vector
    :param list|None senders: *Default: None* - row order, the senders
        sorted by address if None
    :param int workers: *Default: 1* - rows are computed in parallel when
        greater than 1
    :param bool chunked: *Default: False* - compute the rows in blocks to
        bound the working memory

    :returns: (numpy.ndarray) n x n matrix, zero diagonal, values in [0, 2]

    :raises UndefinedDistanceException: naming the first sender with a zero
        vector
    '''
    if senders is None:
        senders = sorted(embeddings, key=sender_key)
    if not senders:
        return np.zeros((0, 0))
    vectors = np.array([embeddings[snd] for snd in senders], dtype=float)
    zero = np.flatnonzero(np.linalg.norm(vectors, axis=1) == 0)
    if len(zero):
        raise UndefinedDistanceException(senders[zero[0]])
    if chunked:
        dist = np.vstack(list(pairwise_distances_chunked(
            vectors, metric=METRIC, n_jobs=workers)))
    else:
        dist = pairwise_distances(vectors, metric=METRIC, n_jobs=workers)
    dist = (dist + dist.T) / 2.0
    np.fill_diagonal(dist, 0.0)
    return np.clip(dist, 0.0, 2.0)


def hdbscan_labels(distances, min_cluster_size=MIN_CLUSTER_SIZE):
    '''cluster labels of the points of a distance matrix

    :param numpy.ndarray distances: symmetric n x n matrix
    :param int min_cluster_size: *Default: 10* - also the core distance k

    :returns: (numpy.ndarray) label per point, -1 for noise, clusters
        numbered 0, 1, ... by their lowest point index

    :raises ConfigException: if min_cluster_size < 2
    '''
    if min_cluster_size < 2:
        raise ConfigException('min_cluster_size',
                              'min_cluster_size must be >= 2')
    distances = np.asarray(distances, dtype=float)
    size = len(distances)
    labels = np.full(size, NOISE, dtype=np.int64)
    if size < min_cluster_size or size < 2:
        return labels
    # scikit-learn counts the point itself among its min_samples neighbours
    min_samples = min(min_cluster_size, size - 1) + 1
    model = HDBSCAN(min_cluster_size=min_cluster_size,
                    min_samples=min_samples, metric='precomputed',
                    cluster_selection_method='eom',
                    allow_single_cluster=False, copy=True)
    raw = {}
    for point, lab in enumerate(model.fit(distances).labels_):
        if lab >= 0:
            raw.setdefault(int(lab), []).append(point)
    for idx, points in enumerate(sorted(raw.values(), key=min)):
        labels[points] = idx
    return labels


def hdbscan(distances, min_cluster_size=MIN_CLUSTER_SIZE, senders=None,
            day=None):
    '''run HDBSCAN on a precomputed distance matrix

    :param numpy.ndarray distances: symmetric n x n matrix
    :param int min_cluster_size: *Default: 10*
    :param list|None senders: *Default: None* - the sender of each row, row
        numbers if None
    :param datetime.date|None day: *Default: None*

    :returns: (Partition) flagged ``too-few-points`` when n <
        min_cluster_size

    :raises ConfigException: if min_cluster_size < 2
    '''
    labels = hdbscan_labels(distances, min_cluster_size)
    if senders is None:
        senders = list(range(len(labels)))
    clusters, noise = {}, []
    for snd, lab in zip(senders, labels):
        if lab == NOISE:
            noise.append(snd)
        else:
            clusters.setdefault(int(lab), []).append(snd)
    part = Partition(day, clusters, noise, min_cluster_size)
    if len(labels) < min_cluster_size:
        part.flags.add('too-few-points')
        log.warning('%s: %d senders < min_cluster_size %d, all noise', day,
                    len(labels), min_cluster_size)
    log.info('%s: %d clusters, %d noise senders', day, len(clusters),
             len(noise))
    return part


def cluster_embeddings(embeddings, min_cluster_size=MIN_CLUSTER_SIZE,
                       day=None, active=None, workers=1, chunked=False):
    '''partition the day's active senders from their embeddings

    :param dict embeddings: sender -> vector
    :param int min_cluster_size: *Default: 10*
    :param datetime.date|None day: *Default: None*
    :param set|None active: *Default: None* - the senders to partition, the
        embedding keys if None.  Active senders without an embedding are
        put in the noise cluster.
    :param int workers: *Default: 1*
    :param bool chunked: *Default: False*

    :returns: (tuple) Partition and the distance matrix (rows in the order
        of the clustered senders, sorted by address) with that sender list
    '''
    if active is None:
        active = set(embeddings)
    senders = sorted((snd for snd in active if snd in embeddings),
                     key=sender_key)
    missing = set(active).difference(senders)
    if missing:
        log.warning('%s: %d active senders without embedding go to noise',
                    day, len(missing))
    dist = pairwise_cosine_matrix(embeddings, senders, workers, chunked)
    part = hdbscan(dist, min_cluster_size, senders, day)
    if missing:
        part = Partition(day, part.clusters, part.noise | missing,
                         min_cluster_size)
        part.flags.add('missing-embeddings')
    return part, dist, senders


def silhouette(partition, distances, senders=None):
    '''silhouette of the non-noise senders, from the matrix used to cluster

    :param Partition partition: the clustering
    :param numpy.ndarray distances: n x n matrix
    :param list|None senders: *Default: None* - the sender of each row, row
        numbers if None

    :returns: (SilhouetteReport) undefined with fewer than two clusters
    '''
    if len(partition) < 2:
        log.warning('%s: silhouette undefined with %d cluster(s)',
                    partition.day, len(partition))
        return SilhouetteReport.undefined()
    if senders is None:
        senders = list(range(len(distances)))
    assigned = partition.assignments()
    rows = [num for num, snd in enumerate(senders)
            if assigned.get(snd, NOISE) != NOISE]
    labels = np.array([assigned[senders[num]] for num in rows])
    sub = np.asarray(distances, dtype=float)[np.ix_(rows, rows)]
    if len(set(labels.tolist())) >= len(rows):
        scores = np.zeros(len(rows))
    else:
        scores = silhouette_samples(sub, labels, metric='precomputed')
    values = {senders[num]: float(val) for num, val in zip(rows, scores)}
    means = {int(idx): float(scores[labels == idx].mean())
             for idx in np.unique(labels)}
    return SilhouetteReport(values, means, float(scores.mean()))


def save_partitions(partitions, path):
    '''write a partition snapshot: one ``day,sender,cluster`` row per
    sender, noise as -1

    :param list partitions: Partition objects
    :param str path: destination CSV
    '''
    with open(path, 'w', newline='') as hndl:
        writer = csv.writer(hndl, lineterminator='\n')
        writer.writerow(SNAPSHOT_HEADER)
        for part in sorted(partitions, key=lambda prt: prt.day):
            assigned = part.assignments()
            for snd in sorted(assigned, key=sender_key):
                writer.writerow((part.day.isoformat(), snd, assigned[snd]))


def load_partitions(path):
    '''read a partition snapshot, e.g. one produced by another clustering
    tool

    :param str path: the CSV file

    :returns: (list) Partition objects ordered by day, without
        min_cluster_size

    :raises InputException: on a malformed row or a sender listed twice on
        the same day
    '''
    days = {}
    try:
        with open(path, newline='') as hndl:
            reader = csv.reader(hndl)
            header = next(reader, None)
            if header is None or tuple(header) != SNAPSHOT_HEADER:
                raise InputException(path, 'expected header %s' %
                                     ','.join(SNAPSHOT_HEADER))
            for fields in reader:
                if not fields:
                    continue
                try:
                    stamp, snd, idx = fields
                    day = date.fromisoformat(stamp)
                    idx = int(idx)
                except ValueError:
                    raise InputException(path, 'line %d: malformed row' %
                                         reader.line_num)
                assigned = days.setdefault(day, {})
                if snd in assigned or idx < NOISE:
                    raise InputException(path, 'line %d: bad assignment of '
                                         '%s' % (reader.line_num, snd))
                assigned[snd] = idx
    except OSError as err:
        if isinstance(err, InputException):
            raise
        raise InputException(path, str(err))
    out = []
    for day in sorted(days):
        clusters, noise = {}, []
        for snd, idx in days[day].items():
            if idx == NOISE:
                noise.append(snd)
            else:
                clusters.setdefault(idx, []).append(snd)
        out.append(Partition(day, clusters, noise))
    return out
