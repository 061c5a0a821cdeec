"""Partial ground truth: known scanner labels, the Mirai fingerprint and
majority-vote cluster labels with purity."""
from collections import Counter
import csv
import ipaddress
import logging

from darktrack.exceptions import GroundTruthException, InputException

log = logging.getLogger(__name__)

UNKNOWN = 'Unknown'
MIRAI_LABEL = 'Mirai-like'
GT_HEADER = ('sender_ip', 'label')
LABELS_HEADER = ('day', 'cluster', 'label', 'purity', 'size')


class GroundTruth(object):
    '''sender -> label map, senders not listed are Unknown

    :param dict labels: *Default: None* - sender -> label
    :param set explicit: *Default: None* - the senders whose label came from
        a ground truth file and must never be overwritten, all of
        ``labels`` if None
    '''
    def __init__(self, labels=None, explicit=None):
        self._labels = dict(labels or {})
        if explicit is None:
            explicit = self._labels
        self.explicit = frozenset(explicit)

    def lookup(self, sender):
        '''(str) the label of sender, Unknown if not listed'''
        return self._labels.get(sender, UNKNOWN)

    __getitem__ = lookup

    def labels(self):
        '''(list) the label universe, Unknown included, sorted'''
        return sorted(set(self._labels.values()) | {UNKNOWN})

    def with_labels(self, mapping):
        '''a copy with extra labels, explicit entries are kept

        :param dict mapping: sender -> label

        :returns: (GroundTruth)
        '''
        labels = dict(self._labels)
        for snd, lab in mapping.items():
            if snd not in self.explicit:
                labels[snd] = lab
        return GroundTruth(labels, self.explicit)

    def __contains__(self, sender):
        return sender in self._labels

    def __len__(self):
        return len(self._labels)


class ClusterLabel(object):
    '''the majority label of a cluster

    :ivar cluster: the cluster index, None when not given
    :ivar str label: the most frequent label
    :ivar float purity: share of members carrying label, in (0, 1]
    :ivar int size: number of members
    '''
    def __init__(self, cluster, label, purity, size):
        self.cluster = cluster
        self.label = label
        self.purity = purity
        self.size = size

    @property
    def labelled(self):
        '''(bool) the cluster has a known label'''
        return self.label != UNKNOWN

    def __repr__(self):
        return '<ClusterLabel %s: %s %.3f>' % (self.cluster, self.label,
                                               self.purity)


def load_ground_truth(path):
    '''read a ``sender_ip,label`` CSV

    :param str path: the file

    :returns: (GroundTruth)

    :raises GroundTruthException: listing every malformed line and every
        sender given two different labels
    :raises InputException: if the file can't be read
    '''
    labels, first, problems = {}, {}, []
    try:
        with open(path, newline='', encoding='utf-8') as hndl:
            reader = csv.reader(hndl)
            header = next(reader, None)
            if header is None or \
                    tuple(fld.strip() for fld in header) != GT_HEADER:
                problems.append((1, 'expected header %s' %
                                 ','.join(GT_HEADER)))
            for fields in reader:
                lineno = reader.line_num
                if not fields:
                    continue
                if len(fields) != 2 or not fields[1].strip():
                    problems.append((lineno, 'malformed line'))
                    continue
                try:
                    snd = str(ipaddress.IPv4Address(fields[0].strip()))
                except ValueError:
                    problems.append((lineno, 'bad address %r' % fields[0]))
                    continue
                lab = fields[1].strip()
                if snd in labels and labels[snd] != lab:
                    problems.append((lineno, '%s labelled %s, already %s on '
                                     'line %d' % (snd, lab, labels[snd],
                                                  first[snd])))
                    continue
                labels[snd] = lab
                first.setdefault(snd, lineno)
    except OSError as err:
        raise InputException(path, str(err))
    if problems:
        raise GroundTruthException(path, problems)
    log.info('%s: %d labelled senders, %d labels', path, len(labels),
             len(set(labels.values())))
    return GroundTruth(labels)


def mirai_fingerprint(record):
    '''(bool) the packet carries the Mirai scan signature: TCP with the
    sequence number equal to the destination address as an integer'''
    if record.proto != 'TCP' or record.dst_ip is None:
        return False
    return record.tcp_seq == int(ipaddress.IPv4Address(record.dst_ip))


def apply_mirai_labels(gt, batch, rule=mirai_fingerprint, label=MIRAI_LABEL):
    '''label the senders of fingerprinted packets, explicit ground truth
    entries win

    :param GroundTruth gt: the current ground truth
    :param DailyBatch batch: packets to scan
    :param callable rule: *Default: mirai_fingerprint* - record -> bool
    :param str label: *Default: 'Mirai-like'*

    :returns: (GroundTruth) a new object
    '''
    found = {rec.sender for rec in batch.records if rule(rec)}
    added = {snd: label for snd in found if snd not in gt.explicit}
    log.info('%s: %d fingerprinted senders, %d labelled %s', batch.day,
             len(found), len(added), label)
    return gt.with_labels(added)


def label_cluster(members, gt, cluster=None):
    '''majority vote over the member labels, ties go to the label first in
    lexicographic order

    :param set members: the cluster
    :param GroundTruth gt: the labels
    :param cluster: *Default: None* - the cluster reference to record

    :returns: (ClusterLabel)

    :raises ValueError: if members is empty
    '''
    if not members:
        raise ValueError('cannot label an empty cluster')
    votes = Counter(gt.lookup(snd) for snd in members)
    top = max(votes.values())
    label = min(lab for lab, count in votes.items() if count == top)
    return ClusterLabel(cluster, label, top / float(len(members)),
                        len(members))


def label_partition(partition, gt):
    '''label every non-noise cluster of a partition

    :returns: (dict) cluster index -> ClusterLabel
    '''
    return {idx: label_cluster(partition.clusters[idx], gt, idx)
            for idx in partition.indices}


def write_labels(labelled, path):
    '''write the label report

    :param list labelled: (day, {cluster: ClusterLabel}) pairs
    :param str path: destination CSV
    '''
    with open(path, 'w', newline='') as hndl:
        writer = csv.writer(hndl, lineterminator='\n')
        writer.writerow(LABELS_HEADER)
        for day, labels in labelled:
            for idx in sorted(labels):
                lab = labels[idx]
                writer.writerow((day, idx, lab.label, '%.6f' % lab.purity,
                                 lab.size))
