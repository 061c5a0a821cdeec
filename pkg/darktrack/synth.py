"""Synthetic telescope traffic with scripted coordinated groups.

A scenario lists groups of senders that scan a shared set of services in
shared time windows (the co-occurrence the embeddings pick up) and a script
of events: a group may emerge late, go silent for a while, be absorbed into
another group, split into parts or disappear among the noise senders.
Every day also brings fresh noise senders hitting random ports.

Example scenario file::

    days: 5
    seed: 3
    noise: 100
    groups:
      - {name: web, size: 50, label: shadowserver}
      - {name: late, size: 50, emerge: 3}
      - {name: blink, size: 50, silent: [[2, 3]]}
      - {name: small, size: 20, absorb: {day: 4, into: web}}

The expected outcome is obtained by running the dynamic cluster analysis on
the planted memberships.
"""
from datetime import date, datetime, timedelta, timezone
import csv
import ipaddress
import logging
import math
import os

import numpy as np
import yaml

from darktrack.cluster import NOISE, Partition, save_partitions
from darktrack.dca import DynamicClusterAnalysis, KINDS, Thresholds
from darktrack.exceptions import InputException, ScenarioException
from darktrack.gtlabel import GT_HEADER, MIRAI_LABEL
from darktrack.ingest import HEADER, MIN_PACKETS

log = logging.getLogger(__name__)

DAY = 86400
TELESCOPE = '203.0.113.0/24'
START = date(2021, 6, 1)
EXPECTED_HEADER = ('source_day', 'unit', 'kind')
EXPECTED_EMERGED_HEADER = ('day', 'unit', 'emerged', 'novelty')


class GroupSpec(object):
    '''one coordinated group of senders

    :param str name: unique name
    :param int size: number of members
    :param list services: *Default: None* - (proto, port) pairs, drawn at
        random if None
    :param str label: *Default: None* - ground truth label, ``Mirai-like``
        members send fingerprinted packets
    :param int emerge: *Default: 1* - first active day (days are 1-based)
    :param list silent: *Default: None* - inclusive [first, last] day ranges
        without traffic
    :param dict absorb: *Default: None* - ``{day, into}``, from that day on
        the members scan with group ``into``
    :param dict split: *Default: None* - ``{day, parts}``, from that day on
        the members form ``parts`` groups with their own services
    :param int disappear: *Default: None* - from that day on the members
        behave like noise senders
    :param float churn: *Default: 0.0* - fraction of members replaced by new
        addresses every day
    '''
    def __init__(self, name, size, services=None, label=None, emerge=1,
                 silent=None, absorb=None, split=None, disappear=None,
                 churn=0.0):
        self.name = str(name)
        self.size = int(size)
        self.services = [(str(proto).upper(), int(port))
                         for proto, port in services] if services else None
        self.label = label
        self.emerge = int(emerge)
        self.silent = [(int(first), int(last)) for first, last in
                       (silent or [])]
        self.absorb = dict(absorb) if absorb else None
        self.split = dict(split) if split else None
        self.disappear = disappear
        self.churn = float(churn)

    def is_silent(self, day):
        return any(first <= day <= last for first, last in self.silent)


class ScenarioSpec(object):
    '''a synthetic scenario

    :param list groups: GroupSpec objects
    :param int days: *Default: 7*
    :param int seed: *Default: 0* - fixes the generated logs bitwise
    :param int noise: *Default: 100* - fresh noise senders per day
    :param int services: *Default: 2* - services per group when not given
    :param int rounds: *Default: 3* - scan rounds per day
    :param int window: *Default: 600* - length of a scan round in seconds
    :param int min_packets: *Default: 5* - activity threshold the planted
        members must exceed
    :param datetime.date start: *Default: 2021-06-01* - date of day 1
    :param str telescope: *Default: '203.0.113.0/24'* - destination network

    :raises ScenarioException: on an invalid script
    '''
    def __init__(self, groups, days=7, seed=0, noise=100, services=2,
                 rounds=3, window=600, min_packets=MIN_PACKETS, start=START,
                 telescope=TELESCOPE):
        self.groups = list(groups)
        self.days = int(days)
        self.seed = int(seed)
        self.noise = int(noise)
        self.services = int(services)
        self.rounds = int(rounds)
        self.window = int(window)
        self.min_packets = int(min_packets)
        if isinstance(start, str):
            start = date.fromisoformat(start)
        self.start = start
        self.telescope = ipaddress.IPv4Network(telescope)
        self.validate()

    @classmethod
    def from_dict(cls, data):
        '''build a scenario from a mapping, e.g. a parsed YAML file'''
        data = dict(data)
        try:
            groups = [GroupSpec(**grp) for grp in data.pop('groups', [])]
            return cls(groups, **data)
        except TypeError as err:
            raise ScenarioException(str(err))

    @classmethod
    def from_file(cls, path):
        '''load a YAML scenario

        :raises InputException: if the file can't be read or parsed
        '''
        try:
            with open(path) as hndl:
                data = yaml.safe_load(hndl)
        except (OSError, yaml.YAMLError) as err:
            raise InputException(path, str(err))
        if not isinstance(data, dict):
            raise InputException(path, 'scenario must be a mapping')
        return cls.from_dict(data)

    @classmethod
    def acceptance(cls, seed=7):
        '''the 7-day reference scenario: four persistent groups of 50, one
        emerging on day 3, one silent on days 4-6, a group of 20 absorbed
        into a persistent group on day 5 and 100 noise senders a day'''
        groups = [
            GroupSpec('G1', 50, label='shadowserver'),
            GroupSpec('G2', 50, label=MIRAI_LABEL),
            GroupSpec('G3', 50, label='censys'),
            GroupSpec('G4', 50),
            GroupSpec('rising', 50, emerge=3),
            GroupSpec('blinking', 50, silent=[(4, 6)]),
            GroupSpec('merging', 20, absorb={'day': 5, 'into': 'G1'}),
        ]
        return cls(groups, days=7, seed=seed, noise=100)

    def validate(self):
        if self.days < 1:
            raise ScenarioException('days must be >= 1')
        if self.noise < 0 or self.rounds < 1 or self.window < 1:
            raise ScenarioException('noise, rounds and window must be '
                                    'positive')
        names = [grp.name for grp in self.groups]
        if len(set(names)) != len(names):
            raise ScenarioException('duplicate group names')
        byname = dict(zip(names, self.groups))

        def check_day(grp, day, what):
            if not 1 <= day <= self.days:
                raise ScenarioException('%s: %s day %s outside 1..%d' %
                                        (grp.name, what, day, self.days))

        for grp in self.groups:
            if grp.size < 1:
                raise ScenarioException('%s: size must be >= 1' % grp.name)
            if not 0 <= grp.churn < 1:
                raise ScenarioException('%s: churn must be in [0,1)' %
                                        grp.name)
            check_day(grp, grp.emerge, 'emerge')
            for first, last in grp.silent:
                check_day(grp, first, 'silent')
                check_day(grp, last, 'silent')
            if grp.disappear is not None:
                check_day(grp, grp.disappear, 'disappear')
            if grp.absorb:
                check_day(grp, grp.absorb.get('day', 0), 'absorb')
                into = byname.get(grp.absorb.get('into'))
                if into is None or into is grp:
                    raise ScenarioException('%s: absorbed into unknown group '
                                            '%r' % (grp.name,
                                                    grp.absorb.get('into')))
                if into.split or into.absorb:
                    raise ScenarioException('%s: cannot be absorbed into %s, '
                                            'which splits or is absorbed' %
                                            (grp.name, into.name))
            if grp.split:
                check_day(grp, grp.split.get('day', 0), 'split')
                if grp.split.get('parts', 0) < 2 or \
                        grp.split['parts'] > grp.size:
                    raise ScenarioException('%s: split needs 2..size parts'
                                            % grp.name)
            if grp.split and grp.absorb:
                raise ScenarioException('%s: both split and absorbed' %
                                        grp.name)
        return self

    def day(self, num):
        '''(datetime.date) the date of 1-based day num'''
        return self.start + timedelta(days=num - 1)


class ExpectedOutcome(object):
    '''what the tracker should report on the scenario

    :ivar list partitions: the planted Partition per day
    :ivar list units: per day, cluster index -> unit name (a group, or
        ``group.k`` for split parts)
    :ivar list transitions: (source day, unit, kind)
    :ivar list emergences: (day, unit, emerged, novelty)
    '''
    def __init__(self, partitions, units, transitions, emergences):
        self.partitions = partitions
        self.units = units
        self.transitions = transitions
        self.emergences = emergences

    def kinds(self):
        '''(dict) (source day, unit) -> kind'''
        return {(day, unit): kind for day, unit, kind in self.transitions}


class GeneratedScenario(object):
    '''the files written by generate

    :ivar list logs: one packet log per day
    :ivar str ground_truth: the ground truth CSV
    :ivar str planted: the planted partitions snapshot
    :ivar ExpectedOutcome expected: the expected tracker outcome
    '''
    def __init__(self, logs, ground_truth, planted, expected):
        self.logs = logs
        self.ground_truth = ground_truth
        self.planted = planted
        self.expected = expected


class _Generator(object):

    def __init__(self, spec):
        self.spec = spec
        self.rng = np.random.default_rng(spec.seed)
        self.used_addrs = set()
        self.used_ports = set()
        self.members = {}
        self.units = {}
        self.records = []

    def address(self):
        while True:
            # 1.0.0.0 - 223.255.255.255, the telescope excluded
            val = int(self.rng.integers(2 ** 24, 224 * 2 ** 24))
            addr = ipaddress.IPv4Address(val)
            if val not in self.used_addrs and \
                    addr not in self.spec.telescope:
                self.used_addrs.add(val)
                return str(addr)

    def unit(self, name, services=None):
        if name not in self.units:
            if services is None:
                services = []
                while len(services) < self.spec.services:
                    port = int(self.rng.integers(1024, 65536))
                    if port not in self.used_ports:
                        self.used_ports.add(port)
                        services.append(('TCP', port))
            rounds = max(self.spec.rounds, int(math.ceil(
                (self.spec.min_packets + 1) / float(len(services)))))
            offsets = np.sort(self.rng.uniform(
                0, DAY - self.spec.window, size=rounds))
            self.units[name] = (services, offsets)
        return self.units[name]

    def destination(self):
        net = self.spec.telescope
        return str(net[int(self.rng.integers(0, net.num_addresses))])

    def packet(self, stamp, sender, proto, port, mirai):
        dst = self.destination()
        seq = 0
        if proto == 'TCP':
            seq = int(ipaddress.IPv4Address(dst)) if mirai else \
                int(self.rng.integers(0, 2 ** 32))
        self.records.append((round(stamp, 6), sender, proto, port, seq, dst))

    def scan(self, base, unit, senders, label):
        services, offsets = self.units[unit]
        mirai = label == MIRAI_LABEL
        for offset in offsets:
            for snd in senders:
                for proto, port in services:
                    stamp = base + offset + self.rng.uniform(
                        0, self.spec.window)
                    self.packet(stamp, snd, proto, port, mirai)

    def noise(self, base, senders):
        for snd in senders:
            count = self.spec.min_packets + 1 + int(self.rng.integers(0, 4))
            for _ in range(count):
                self.packet(base + self.rng.uniform(0, DAY), snd, 'TCP',
                            int(self.rng.integers(1, 65536)), False)


def _unit_of(grp, num, part_of):
    '''the unit a group's member scans with on a day, None if silent'''
    if num < grp.emerge or grp.is_silent(num):
        return None
    if grp.disappear is not None and num >= grp.disappear:
        return NOISE
    if grp.absorb and num >= grp.absorb['day']:
        return grp.absorb['into']
    if grp.split and num >= grp.split['day']:
        return part_of
    return grp.name


def _write_log(path, records):
    with open(path, 'w', newline='') as hndl:
        writer = csv.writer(hndl, lineterminator='\n')
        writer.writerow(HEADER)
        for stamp, snd, proto, port, seq, dst in sorted(
                records, key=lambda rec: rec[0]):
            writer.writerow(('%.6f' % stamp, snd, proto, port, seq, dst))


def expected_outcome(spec, planted, thresholds=None):
    '''run the tracker on the planted partitions

    :param ScenarioSpec spec: the scenario
    :param list planted: (Partition, {cluster index: unit}) per day

    :returns: (ExpectedOutcome)
    '''
    partitions = [part for part, _ in planted]
    units = [names for _, names in planted]
    byday = dict(zip((part.day for part in partitions), units))
    tracker = DynamicClusterAnalysis(thresholds or Thresholds())
    reports = tracker.run(partitions)
    transitions, emergences = [], []
    for rep in reports:
        for tr in rep.transitions:
            transitions.append((tr.source_day, byday[tr.source_day][tr.source],
                                tr.kind))
        for em in rep.emergences:
            emergences.append((em.day, byday[em.day][em.cluster], em.emerged,
                               em.novelty))
    return ExpectedOutcome(partitions, units, transitions, emergences)


def generate(spec, outdir, thresholds=None):
    '''write the scenario's daily packet logs, ground truth, planted
    partitions and expected outcome into outdir

    :param ScenarioSpec spec: the scenario
    :param str outdir: destination directory, created if needed
    :param Thresholds|None thresholds: *Default: None* - used to derive the
        expected outcome

    :returns: (GeneratedScenario)
    '''
    os.makedirs(outdir, exist_ok=True)
    gen = _Generator(spec)
    parts = {}
    for grp in spec.groups:
        gen.members[grp.name] = [gen.address() for _ in range(grp.size)]
        gen.unit(grp.name, grp.services)
        if grp.split:
            order = gen.rng.permutation(grp.size)
            for num in range(grp.split['parts']):
                gen.unit('%s.%d' % (grp.name, num))
            parts[grp.name] = {
                int(pos): '%s.%d' % (grp.name, num % grp.split['parts'])
                for num, pos in enumerate(order)}
    labels = {}
    logs, planted = [], []
    for num in range(1, spec.days + 1):
        day = spec.day(num)
        base = datetime(day.year, day.month, day.day,
                        tzinfo=timezone.utc).timestamp()
        gen.records = []
        scanning = {}
        noise = [gen.address() for _ in range(spec.noise)]
        for grp in spec.groups:
            members = gen.members[grp.name]
            if grp.churn and num > grp.emerge:
                for pos in gen.rng.choice(grp.size,
                                          int(round(grp.churn * grp.size)),
                                          replace=False):
                    members[int(pos)] = gen.address()
            for pos, snd in enumerate(members):
                unit = _unit_of(grp, num, parts.get(grp.name, {}).get(pos))
                if unit == NOISE:
                    noise.append(snd)
                elif unit is not None:
                    scanning.setdefault(unit, []).append((snd, grp.label))
            if grp.label and grp.label != MIRAI_LABEL:
                labels.update(dict.fromkeys(members, grp.label))
        for unit in sorted(scanning):
            for label in sorted(set(lab or '' for _, lab in scanning[unit])):
                senders = [snd for snd, lab in scanning[unit]
                           if (lab or '') == label]
                gen.scan(base, unit, senders, label)
        gen.noise(base, noise)
        path = os.path.join(outdir, '%s.csv' % day.isoformat())
        _write_log(path, gen.records)
        logs.append(path)
        names = dict(enumerate(sorted(scanning)))
        clusters = {idx: [snd for snd, _ in scanning[unit]]
                    for idx, unit in names.items()}
        planted.append((Partition(day, clusters, noise), names))
        log.info('%s: %d packets, %d units, %d noise senders', day,
                 len(gen.records), len(scanning), len(noise))
    gt_path = os.path.join(outdir, 'ground_truth.csv')
    with open(gt_path, 'w', newline='') as hndl:
        writer = csv.writer(hndl, lineterminator='\n')
        writer.writerow(GT_HEADER)
        for snd in sorted(labels, key=lambda snd: ipaddress.IPv4Address(snd)):
            writer.writerow((snd, labels[snd]))
    planted_path = os.path.join(outdir, 'planted.csv')
    save_partitions([part for part, _ in planted], planted_path)
    expected = expected_outcome(spec, planted, thresholds)
    write_expected(expected, outdir)
    return GeneratedScenario(logs, gt_path, planted_path, expected)


def write_expected(expected, outdir):
    '''write expected_transitions.csv and expected_emergences.csv'''
    with open(os.path.join(outdir, 'expected_transitions.csv'), 'w',
              newline='') as hndl:
        writer = csv.writer(hndl, lineterminator='\n')
        writer.writerow(EXPECTED_HEADER)
        writer.writerows(expected.transitions)
    with open(os.path.join(outdir, 'expected_emergences.csv'), 'w',
              newline='') as hndl:
        writer = csv.writer(hndl, lineterminator='\n')
        writer.writerow(EXPECTED_EMERGED_HEADER)
        for day, unit, emerged, novelty in expected.emergences:
            writer.writerow((day, unit, int(emerged), int(novelty)))


def _jaccard(first, second):
    union = len(first | second)
    return len(first & second) / float(union) if union else 0.0


class Score(object):
    '''how well a run recovered the planted scenario

    :ivar dict kinds: kind -> (precision, recall, support), Emerged included
    :ivar float novelty_accuracy: share of expected emerged units whose
        novelty flag was reproduced
    :ivar float purity: mean share of a matched cluster's members belonging
        to its unit
    :ivar float min_purity: the worst matched cluster
    '''
    def __init__(self, kinds, novelty_accuracy, purity, min_purity):
        self.kinds = kinds
        self.novelty_accuracy = novelty_accuracy
        self.purity = purity
        self.min_purity = min_purity

    def precision(self, kind):
        return self.kinds[kind][0]

    def recall(self, kind):
        return self.kinds[kind][1]


def _match_units(expected, partitions):
    '''per day, unit -> best predicted cluster by Jaccard (None if none)'''
    predicted = {part.day: part for part in partitions}
    out = {}
    for plant, names in zip(expected.partitions, expected.units):
        pred = predicted.get(plant.day)
        for idx, unit in names.items():
            best, best_val = None, 0.0
            if pred is not None:
                for cid in pred.indices:
                    val = _jaccard(plant.clusters[idx], pred.clusters[cid])
                    if val > best_val:
                        best, best_val = cid, val
            out[(plant.day, unit)] = best
    return out, predicted


def _pr(pairs, kind):
    tp = sum(1 for exp, got in pairs if exp == kind and got == kind)
    n_exp = sum(1 for exp, _ in pairs if exp == kind)
    n_got = sum(1 for _, got in pairs if got == kind)
    return (tp / float(n_got) if n_got else (1.0 if not n_exp else 0.0),
            tp / float(n_exp) if n_exp else 1.0, n_exp)


def score(partitions, reports, expected):
    '''compare a run against the expected outcome

    Every planted unit is mapped, day by day, to the predicted cluster with
    the largest Jaccard index.  The transition of that cluster is compared
    with the unit's expected transition, its emerged / novelty flags with
    the expected ones.

    :param list partitions: the predicted Partition per day
    :param list reports: the DayReport objects of the run
    :param ExpectedOutcome expected: from generate

    :returns: (Score)
    '''
    match, predicted = _match_units(expected, partitions)
    got_kind, got_em = {}, {}
    for rep in reports:
        for tr in rep.transitions:
            got_kind[(tr.source_day, tr.source)] = tr.kind
        for em in rep.emergences:
            got_em[(em.day, em.cluster)] = em
    pairs = []
    for day, unit, kind in expected.transitions:
        cid = match.get((day, unit))
        pairs.append((kind, None if cid is None else
                      got_kind.get((day, cid))))
    kinds = {kind: _pr(pairs, kind) for kind in KINDS}
    em_pairs, novel_hits, novel_total = [], 0, 0
    for day, unit, emerged, novelty in expected.emergences:
        cid = match.get((day, unit))
        rec = None if cid is None else got_em.get((day, cid))
        em_pairs.append(('Emerged' if emerged else None,
                         'Emerged' if rec is not None and rec.emerged
                         else None))
        if emerged:
            novel_total += 1
            if rec is not None and rec.emerged and rec.novelty == novelty:
                novel_hits += 1
    kinds['Emerged'] = _pr(em_pairs, 'Emerged')
    purities = []
    for plant, names in zip(expected.partitions, expected.units):
        pred = predicted.get(plant.day)
        for idx, unit in names.items():
            cid = match[(plant.day, unit)]
            if cid is not None:
                members = pred.clusters[cid]
                purities.append(len(members & plant.clusters[idx]) /
                                float(len(members)))
    return Score(kinds,
                 novel_hits / float(novel_total) if novel_total else 1.0,
                 float(np.mean(purities)) if purities else 0.0,
                 float(min(purities)) if purities else 0.0)
