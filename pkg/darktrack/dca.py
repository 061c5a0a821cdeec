"""Dynamic cluster analysis: classify the transitions between the partitions
of consecutive days, keep persistent cluster lineages and flag the emerged
clusters never seen before as novelties.

Source clusters are evaluated in this order, the first rule that holds
wins:

1. Inactive when the active fraction A(X) is below tau1.
2. Disappeared when X strongly matches the noise cluster.
3. Survived or Absorbed when X strongly matches a cluster Y: Survived if X
   is the only source strongly matching Y or covers at least tau0 of Y,
   Absorbed otherwise.
4. Split when X loosely matches at least one cluster.
5. Disappeared.

Forward matches use the overlap normalised by A(X), backward matches
against past days use the raw overlap.
"""
from collections import Counter, deque
import csv
from datetime import date, timedelta
import logging

from darktrack.cluster import NOISE, Partition
from darktrack.exceptions import (ConfigException, ContractException,
                                  LineageAssertion)

log = logging.getLogger(__name__)

ABSORBED = 'Absorbed'
SPLIT = 'Split'
DISAPPEARED = 'Disappeared'
SURVIVED = 'Survived'
INACTIVE = 'Inactive'
#: transition kinds, in report order
KINDS = (ABSORBED, SPLIT, DISAPPEARED, SURVIVED, INACTIVE)

ORIGIN = 'Origin'
EMERGED = 'Emerged'
REACTIVATED = 'Reactivated'

TRANSITIONS_HEADER = ('day', 'source_day', 'source_cluster', 'kind',
                      'activity', 'principal_target', 'targets')
EMERGENCES_HEADER = ('day', 'cluster', 'emerged', 'novelty', 'match_day',
                     'match_cluster', 'match_overlap')
LINEAGES_HEADER = ('lineage', 'day', 'cluster', 'kind', 'targets')


class Thresholds(object):
    '''the matching thresholds

    :param float tau0: *Default: 0.65* - strong match, in [0.5, 1]
    :param float tau1: *Default: 0.3* - loose match and activity, in
        (0, 0.5)

    :raises ConfigException: if a threshold is out of range
    '''
    def __init__(self, tau0=0.65, tau1=0.3):
        if not 0.5 <= tau0 <= 1:
            raise ConfigException('tau0', 'tau0 must be in [0.5,1]')
        if not 0 < tau1 < 0.5:
            raise ConfigException('tau1', 'tau1 must be in (0,0.5)')
        self.tau0 = tau0
        self.tau1 = tau1

    def __repr__(self):
        return 'Thresholds(tau0=%r, tau1=%r)' % (self.tau0, self.tau1)


def overlap(first, second):
    '''OL(X, Y) = |X & Y| / |X|, not symmetric

    :raises ValueError: if X is empty
    '''
    if not first:
        raise ValueError('overlap of an empty cluster')
    return len(set(first).intersection(second)) / float(len(first))


def activity(members, nxt):
    '''A(X): the fraction of X active on the next day, the sum of OL(X, Y)
    over every cluster Y of nxt, noise included

    :param set members: the cluster X
    :param Partition nxt: the next day's partition

    :raises ValueError: if X is empty
    '''
    if not members:
        raise ValueError('activity of an empty cluster')
    return len(set(members) & nxt.senders) / float(len(members))


class OverlapTable(object):
    '''OL(X_i, Y_j) for every pair of clusters of two partitions, noise on
    both sides (only when not empty)

    :ivar list sources: cluster indices of the first partition, -1 first
    :ivar list targets: cluster indices of the second partition, -1 first
    :ivar dict values: (source, target) -> OL, missing pairs are 0
    :ivar dict activity: source -> A
    '''
    def __init__(self, sources, targets, values, activity):
        self.sources = sources
        self.targets = targets
        self.values = values
        self.activity = activity

    def ol(self, source, target):
        return self.values.get((source, target), 0.0)

    def row(self, source):
        '''(dict) target -> OL for the targets X overlaps'''
        return {tgt: val for (src, tgt), val in self.values.items()
                if src == source}


def overlap_table(part, nxt):
    '''build the OverlapTable of two partitions

    :param Partition part: day t
    :param Partition nxt: day t+1

    :returns: (OverlapTable)
    '''
    assigned = nxt.assignments()
    sources = ([NOISE] if part.noise else []) + part.indices
    targets = ([NOISE] if nxt.noise else []) + nxt.indices
    values, act = {}, {}
    for src in sources:
        members = part.members(src)
        hits = Counter(assigned[snd] for snd in members if snd in assigned)
        for tgt, count in hits.items():
            values[(src, tgt)] = count / float(len(members))
        act[src] = sum(hits.values()) / float(len(members))
    return OverlapTable(sources, targets, values, act)


class Transition(object):
    '''what happened to one source cluster between two days

    :ivar day: the target day (t+1)
    :ivar source_day: the source day (t)
    :ivar int source: source cluster index
    :ivar str kind: one of KINDS
    :ivar float activity: A(X)
    :ivar list targets: (target index, normalised overlap) pairs, the
        principal target for Survived/Absorbed, the loose targets for Split,
        the noise cluster when it absorbed the senders
    :ivar int|None principal: the target of Survived/Absorbed
    '''
    def __init__(self, day, source_day, source, kind, activity, targets=(),
                 principal=None):
        self.day = day
        self.source_day = source_day
        self.source = source
        self.kind = kind
        self.activity = activity
        self.targets = list(targets)
        self.principal = principal

    def __repr__(self):
        return '<Transition %s/%d %s -> %s>' % (self.source_day, self.source,
                                                self.kind, self.targets)


class EmergenceRecord(object):
    '''the emerged / novelty status of one target cluster

    :ivar match: (day, cluster, raw overlap) of the backward match, or None
    '''
    def __init__(self, day, cluster, emerged, novelty=False, match=None):
        self.day = day
        self.cluster = cluster
        self.emerged = emerged
        self.novelty = novelty
        self.match = match

    def __repr__(self):
        return '<EmergenceRecord %s/%d emerged=%s novelty=%s>' % (
            self.day, self.cluster, self.emerged, self.novelty)


def next_day(day):
    '''the day after ``day``, dates and plain integers supported'''
    if isinstance(day, date):
        return day + timedelta(days=1)
    return day + 1


def _check_consecutive(part, nxt):
    if part.day is None or nxt.day is None:
        return
    if next_day(part.day) != nxt.day:
        raise ContractException('partitions of %s and %s are not '
                                'consecutive' % (part.day, nxt.day))


def _classify(src, part, nxt, table, strong_sources, thresholds):
    tau0, tau1 = thresholds.tau0, thresholds.tau1
    act = table.activity[src]
    if act < tau1:
        return INACTIVE, [], None
    ratios = {tgt: val / act for tgt, val in table.row(src).items()}
    if ratios.get(NOISE, 0.0) >= tau0:
        return DISAPPEARED, [(NOISE, ratios[NOISE])], None
    strong = sorted((tgt for tgt, rat in ratios.items()
                     if tgt != NOISE and rat >= tau0),
                    key=lambda tgt: (-ratios[tgt], tgt))
    if strong:
        tgt = strong[0]
        rivals = strong_sources.get(tgt, ())
        back = overlap(nxt.members(tgt), part.clusters[src])
        kind = SURVIVED if len(rivals) == 1 or back >= tau0 else ABSORBED
        return kind, [(tgt, ratios[tgt])], tgt
    loose = sorted((tgt, rat) for tgt, rat in ratios.items()
                   if tgt != NOISE and rat >= tau1)
    if loose:
        return SPLIT, loose, None
    return DISAPPEARED, [], None


def classify_transitions(part, nxt, thresholds=None):
    '''classify every non-noise cluster of ``part`` and find the emerged
    clusters of ``nxt``

    :param Partition part: day t
    :param Partition nxt: day t+1
    :param Thresholds|None thresholds: *Default: None* - Thresholds() if None

    :returns: (tuple) list of Transition (by source index), list of
        EmergenceRecord (by target index, novelty not yet decided)

    :raises ContractException: if the days are not consecutive
    '''
    thresholds = thresholds or Thresholds()
    _check_consecutive(part, nxt)
    table = overlap_table(part, nxt)
    # which sources strongly match each target, Inactive ones included
    strong_sources = {}
    for src in part.indices:
        act = table.activity[src]
        if act <= 0:
            continue
        for tgt, val in table.row(src).items():
            if tgt != NOISE and val / act >= thresholds.tau0:
                strong_sources.setdefault(tgt, set()).add(src)
    transitions = []
    for src in part.indices:
        kind, targets, principal = _classify(src, part, nxt, table,
                                             strong_sources, thresholds)
        transitions.append(Transition(nxt.day, part.day, src, kind,
                                      table.activity[src], targets,
                                      principal))
    survived = {tr.principal for tr in transitions if tr.kind == SURVIVED}
    emergences = [EmergenceRecord(nxt.day, tgt, tgt not in survived)
                  for tgt in nxt.indices]
    log.debug('%s: %s', nxt.day, Counter(tr.kind for tr in transitions))
    return transitions, emergences


class ClusterHistory(object):
    '''past partitions kept for backward matching

    :param int|None horizon: *Default: None* - keep only the partitions of
        the last ``horizon`` days, everything if None
    '''
    def __init__(self, horizon=None):
        if horizon is not None and horizon < 1:
            raise ConfigException('history_horizon',
                                  'history_horizon must be >= 1')
        self.horizon = horizon
        self.partitions = deque()

    def add(self, part):
        self.partitions.append(part)
        if self.horizon is not None:
            while len(self.partitions) > self.horizon:
                self.partitions.popleft()

    def __iter__(self):
        return iter(self.partitions)

    def __reversed__(self):
        return reversed(self.partitions)

    def __len__(self):
        return len(self.partitions)


def backward_match(members, history, thresholds=None):
    '''look for an emerged cluster among the clusters of past days

    A past cluster X matches when OL(X, Y) >= tau0.  The most recent day
    with a match wins, within a day the largest overlap then the lowest
    cluster index.

    :param set members: the emerged cluster Y
    :param iter history: past partitions, oldest first
    :param Thresholds|None thresholds: *Default: None*

    :returns: (tuple|None) (day, cluster index, overlap), None for a novelty
    '''
    thresholds = thresholds or Thresholds()
    members = frozenset(members)
    for part in reversed(list(history)):
        best = None
        for idx in part.indices:
            val = overlap(part.clusters[idx], members)
            if val >= thresholds.tau0 and (best is None or val > best[1]):
                best = (idx, val)
        if best is not None:
            return (part.day, best[0], best[1])
    return None


class LineageRegistry(object):
    '''persistent cluster identities

    :ivar dict histories: lineage id -> list of (day, cluster, kind), kind
        being Origin, Survived, Emerged or Reactivated
    :ivar dict index: (day, cluster) -> lineage id
    :ivar list events: (source day, source cluster, lineage id, kind,
        target clusters) for every transition ending a lineage segment
    '''
    def __init__(self):
        self.histories = {}
        self.index = {}
        self.events = []
        self.next_id = 0

    def _new(self):
        lid = self.next_id
        self.next_id += 1
        self.histories[lid] = []
        return lid

    def _assign(self, lid, day, cluster, kind):
        if (day, cluster) in self.index:
            raise LineageAssertion('cluster %d of %s claimed by lineages %d '
                                   'and %d' % (cluster, day,
                                               self.index[(day, cluster)],
                                               lid))
        self.index[(day, cluster)] = lid
        self.histories[lid].append((day, cluster, kind))

    def start(self, part):
        '''give the clusters of the first day lineage ids 0, 1, ... in
        cluster index order'''
        for idx in part.indices:
            self._assign(self._new(), part.day, idx, ORIGIN)
        return self

    def lineage_of(self, day, cluster):
        '''(int|None) the lineage id of a cluster'''
        return self.index.get((day, cluster))

    def __len__(self):
        return len(self.histories)


def update_lineages(registry, transitions, emergences):
    '''fold one day of transitions and emergences into the registry

    :param LineageRegistry registry: updated in place
    :param list transitions: Transition objects of the day
    :param list emergences: EmergenceRecord objects of the day, novelty
        decided

    :returns: (LineageRegistry)

    :raises LineageAssertion: if a target is claimed twice
    '''
    for tr in transitions:
        lid = registry.lineage_of(tr.source_day, tr.source)
        if lid is None:
            raise LineageAssertion('no lineage for cluster %d of %s' %
                                   (tr.source, tr.source_day))
        if tr.kind == SURVIVED:
            registry._assign(lid, tr.day, tr.principal, SURVIVED)
        else:
            registry.events.append((tr.source_day, tr.source, lid, tr.kind,
                                    [tgt for tgt, _ in tr.targets]))
    for em in emergences:
        if not em.emerged:
            if registry.lineage_of(em.day, em.cluster) is None:
                raise LineageAssertion('cluster %d of %s neither emerged nor '
                                       'survived into' % (em.cluster, em.day))
            continue
        lid = None
        if em.match is not None:
            lid = registry.lineage_of(em.match[0], em.match[1])
        if lid is None:
            registry._assign(registry._new(), em.day, em.cluster, EMERGED)
        else:
            registry._assign(lid, em.day, em.cluster, REACTIVATED)
    return registry


class DayReport(object):
    '''the outcome of one tracking step

    :ivar day: the target day
    :ivar source_day: the previous day
    :ivar list transitions: Transition objects
    :ivar list emergences: EmergenceRecord objects
    :ivar set flags: ``'missing-day'`` when the day had no data
    '''
    def __init__(self, day, source_day, transitions, emergences, flags=()):
        self.day = day
        self.source_day = source_day
        self.transitions = transitions
        self.emergences = emergences
        self.flags = set(flags)

    def counts(self):
        '''(dict) kind -> number of source clusters, every kind present'''
        out = dict.fromkeys(KINDS, 0)
        for tr in self.transitions:
            out[tr.kind] += 1
        return out

    @property
    def emerged(self):
        return [em for em in self.emergences if em.emerged]

    @property
    def novelties(self):
        return [em for em in self.emergences if em.novelty]


class DynamicClusterAnalysis(object):
    '''the tracker, fed one partition per day

    :param Thresholds|None thresholds: *Default: None*
    :param int|None history_horizon: *Default: None* - days of history kept
        for backward matching

    :ivar LineageRegistry registry: the lineages
    :ivar list reports: DayReport per processed day
    :ivar list partitions: every partition seen, missing days filled
    '''
    def __init__(self, thresholds=None, history_horizon=None):
        self.thresholds = thresholds or Thresholds()
        self.history = ClusterHistory(history_horizon)
        self.registry = LineageRegistry()
        self.reports = []
        self.partitions = []
        self.current = None

    def start(self, part):
        '''register the first day'''
        if self.current is not None:
            raise ContractException('tracker already started')
        self.registry.start(part)
        self.partitions.append(part)
        self.current = part
        log.info('%s: %d initial lineages', part.day, len(self.registry))
        return self

    def step(self, nxt):
        '''process the next partition, days without data in between are
        filled with empty partitions

        :param Partition nxt: a later day than the last one processed

        :returns: (DayReport) the report of ``nxt``

        :raises ContractException: if not started or nxt is not later
        '''
        if self.current is None:
            raise ContractException('tracker not started')
        if self.current.day is not None and nxt.day is not None:
            if nxt.day <= self.current.day:
                raise ContractException('%s does not follow %s' %
                                        (nxt.day, self.current.day))
            while next_day(self.current.day) != nxt.day:
                gap = Partition.empty(next_day(self.current.day))
                gap.flags.add('missing-day')
                log.warning('%s: no data, empty partition used', gap.day)
                self._advance(gap)
        return self._advance(nxt)

    def run(self, partitions):
        '''start on the first partition and step through the rest

        :returns: (list) the DayReports
        '''
        partitions = list(partitions)
        if not partitions:
            return []
        self.start(partitions[0])
        for part in partitions[1:]:
            self.step(part)
        return self.reports

    def _advance(self, nxt):
        transitions, emergences = classify_transitions(
            self.current, nxt, self.thresholds)
        for em in emergences:
            if em.emerged:
                em.match = backward_match(nxt.clusters[em.cluster],
                                          self.history, self.thresholds)
                em.novelty = em.match is None
        update_lineages(self.registry, transitions, emergences)
        report = DayReport(nxt.day, self.current.day, transitions,
                           emergences, nxt.flags & {'missing-day'})
        self.history.add(self.current)
        self.partitions.append(nxt)
        self.current = nxt
        self.reports.append(report)
        log.info('%s: %s, %d emerged, %d novel', nxt.day, report.counts(),
                 len(report.emerged), len(report.novelties))
        return report


def _fmt(val):
    return '%.6f' % val


def write_transitions(reports, path):
    '''one row per (day, source cluster), targets as ``j:r;j:r``'''
    with open(path, 'w', newline='') as hndl:
        writer = csv.writer(hndl, lineterminator='\n')
        writer.writerow(TRANSITIONS_HEADER)
        for rep in reports:
            for tr in rep.transitions:
                writer.writerow((
                    tr.day, tr.source_day, tr.source, tr.kind,
                    _fmt(tr.activity),
                    '' if tr.principal is None else tr.principal,
                    ';'.join('%d:%s' % (tgt, _fmt(rat))
                             for tgt, rat in tr.targets)))


def write_emergences(reports, path):
    '''one row per (day, target cluster)'''
    with open(path, 'w', newline='') as hndl:
        writer = csv.writer(hndl, lineterminator='\n')
        writer.writerow(EMERGENCES_HEADER)
        for rep in reports:
            for em in rep.emergences:
                match = em.match or ('', '', None)
                writer.writerow((
                    em.day, em.cluster, int(em.emerged), int(em.novelty),
                    match[0], match[1],
                    '' if match[2] is None else _fmt(match[2])))


def write_lineages(registry, path):
    '''presence rows (lineage, day, cluster, Origin/Survived/Emerged/
    Reactivated) followed by the segment ends (lineage, source day, source
    cluster, kind, next day targets)'''
    with open(path, 'w', newline='') as hndl:
        writer = csv.writer(hndl, lineterminator='\n')
        writer.writerow(LINEAGES_HEADER)
        for lid in sorted(registry.histories):
            for day, cluster, kind in registry.histories[lid]:
                writer.writerow((lid, day, cluster, kind, ''))
        for day, cluster, lid, kind, targets in registry.events:
            writer.writerow((lid, day, cluster, kind,
                             ';'.join(str(tgt) for tgt in targets)))
