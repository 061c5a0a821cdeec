"""Packet-log parsing, daily batching, the active-sender filter and the
traffic characterisation of a telescope window.

A packet log is a UTF-8 CSV file (optionally gzip compressed, by the
``.gz`` extension) with the header::

    timestamp,src_ip,proto,dst_port,tcp_seq,dst_ip

"""
from collections import Counter, namedtuple
import csv
from datetime import datetime, timezone
import gzip
import ipaddress
import logging
import math

import numpy as np
import pandas as pd

from darktrack.exceptions import (ConfigException, ContractException,
                                  InputException)

log = logging.getLogger(__name__)

HEADER = ('timestamp', 'src_ip', 'proto', 'dst_port', 'tcp_seq', 'dst_ip')
PROTOCOLS = ('TCP', 'UDP', 'ICMP', 'GRE')
PORTED = ('TCP', 'UDP')
MAX_SEQ = 2 ** 32 - 1
MIN_PACKETS = 5

PacketRecord = namedtuple('PacketRecord', ['timestamp', 'sender', 'proto',
                                           'dst_port', 'tcp_seq', 'dst_ip'])
PacketRecord.__doc__ = '''one unsolicited packet observed by the telescope.
``dst_port`` is 0 for ICMP/GRE, ``tcp_seq`` is 0 unless TCP and ``dst_ip``
is None when the log leaves it empty.'''


class Rejects(object):
    '''quarantine report for packet-log lines that could not be parsed

    :param int max_examples: *Default: 20* - how many offending lines to keep
    '''
    def __init__(self, max_examples=20):
        self.counts = Counter()
        self.examples = []
        self.max_examples = max_examples

    def add(self, path, lineno, reason, text):
        '''count one rejected line

        :param str path: file the line came from
        :param int lineno: 1-based line number
        :param str reason: the field that failed
        :param str text: the raw line
        '''
        self.counts[reason] += 1
        if len(self.examples) < self.max_examples:
            self.examples.append((str(path), lineno, reason, text))

    @property
    def total(self):
        '''(int) number of rejected lines'''
        return sum(self.counts.values())

    def as_rows(self):
        '''return the report as rows of (reason, count), sorted by reason'''
        return sorted(self.counts.items())

    def __len__(self):
        return self.total


def _open_log(path):
    if str(path).endswith('.gz'):
        return gzip.open(path, 'rt', encoding='utf-8', newline='')
    return open(path, encoding='utf-8', newline='')


def _ipv4(text):
    return str(ipaddress.IPv4Address(text.strip()))


def _int_field(text, upper):
    val = int(text)
    if not 0 <= val <= upper:
        raise ValueError(text)
    return val


def parse_line(fields):
    '''turn the fields of one packet-log line into a PacketRecord

    :param list fields: the six CSV fields

    :returns: (PacketRecord)

    :raises ValueError: with the name of the failing field as argument
    '''
    if len(fields) != len(HEADER):
        raise ValueError('field_count')
    stamp, src, proto, port, seq, dst = [fld.strip() for fld in fields]
    try:
        timestamp = float(stamp)
    except ValueError:
        raise ValueError('timestamp')
    if not math.isfinite(timestamp) or timestamp < 0:
        raise ValueError('timestamp')
    try:
        utc_day(timestamp)
    except (OverflowError, OSError, ValueError):
        # past the last representable date
        raise ValueError('timestamp')
    try:
        sender = _ipv4(src)
    except ValueError:
        raise ValueError('src_ip')
    proto = proto.upper()
    if proto not in PROTOCOLS:
        raise ValueError('proto')
    dst_port = 0
    if proto in PORTED:
        try:
            dst_port = _int_field(port, 65535)
        except ValueError:
            raise ValueError('dst_port')
    tcp_seq = 0
    if proto == 'TCP' and seq:
        try:
            tcp_seq = _int_field(seq, MAX_SEQ)
        except ValueError:
            raise ValueError('tcp_seq')
    dst_ip = None
    if dst:
        try:
            dst_ip = _ipv4(dst)
        except ValueError:
            raise ValueError('dst_ip')
    return PacketRecord(timestamp, sender, proto, dst_port, tcp_seq, dst_ip)


def parse_packet_log(path, rejects=None):
    '''read a packet log, yielding records in file order.  Malformed lines
    are counted in ``rejects`` and skipped.

    :param str path: the log file, ``.gz`` files are decompressed
    :param Rejects|None rejects: *Default: None* - report collecting the
        malformed lines, a private one is used (and logged) if None

    :returns: (iter) of PacketRecord

    :raises InputException: if the file can't be read or has no valid header
    '''
    if rejects is None:
        rejects = Rejects()
    before = rejects.total
    try:
        with _open_log(path) as hndl:
            reader = csv.reader(hndl)
            header = next(reader, None)
            if header is None or \
                    tuple(fld.strip() for fld in header) != HEADER:
                raise InputException(path, 'missing or unexpected header, '
                                     'expected %s' % ','.join(HEADER))
            for fields in reader:
                if not fields:
                    continue
                try:
                    yield parse_line(fields)
                except ValueError as err:
                    rejects.add(path, reader.line_num, err.args[0],
                                ','.join(fields))
    except (OSError, EOFError, UnicodeDecodeError, csv.Error) as err:
        if isinstance(err, InputException):
            raise
        raise InputException(path, str(err))
    if rejects.total > before:
        log.warning('%s: %d malformed line(s) quarantined', path,
                    rejects.total - before)


def read_packet_logs(paths, rejects=None):
    '''chain several packet logs, in the given order

    :param list paths: log files
    :param Rejects|None rejects: *Default: None* - shared rejects report

    :returns: (iter) of PacketRecord
    '''
    for path in paths:
        for record in parse_packet_log(path, rejects):
            yield record


def sender_key(sender):
    '''sort key putting IPv4 senders in numeric order, anything else after
    them in string order'''
    try:
        return (0, int(ipaddress.IPv4Address(sender)), '')
    except ValueError:
        return (1, 0, str(sender))


def utc_day(timestamp):
    '''return the UTC calendar date of a timestamp'''
    return datetime.fromtimestamp(timestamp, tz=timezone.utc).date()


class DailyBatch(object):
    '''all the records of one UTC day with the derived active-sender set

    :param datetime.date day: the calendar day
    :param list records: PacketRecords of that day, in arrival order
    :param int min_packets: *Default: 5* - activity threshold, a sender is
        active with strictly more packets than this
    '''
    def __init__(self, day, records, min_packets=MIN_PACKETS):
        self.day = day
        # sorted() is stable, equal timestamps keep the input order
        self.records = sorted(records, key=lambda rec: rec.timestamp)
        self.per_sender_counts = Counter(rec.sender for rec in self.records)
        self.min_packets = min_packets
        self.active_senders = frozenset(filter_active(self, min_packets))

    @property
    def senders(self):
        '''(frozenset) every sender seen that day, active or not'''
        return frozenset(self.per_sender_counts)

    def __len__(self):
        return len(self.records)

    def __repr__(self):
        return '<DailyBatch %s: %d records, %d/%d active>' % (
            self.day, len(self.records), len(self.active_senders),
            len(self.per_sender_counts))


def batch_by_day(records, min_packets=MIN_PACKETS):
    '''bucket a record stream into daily batches

    :param iter records: PacketRecords
    :param int min_packets: *Default: 5* - activity threshold of the batches

    :returns: (list of DailyBatch) ordered by day, days without records are
        absent
    '''
    days = {}
    for record in records:
        days.setdefault(utc_day(record.timestamp), []).append(record)
    return [DailyBatch(day, days[day], min_packets) for day in sorted(days)]


def filter_active(batch, min_packets=MIN_PACKETS):
    '''return the senders with strictly more than min_packets packets

    :param DailyBatch batch: the day
    :param int min_packets: *Default: 5* - packets counted over all protocols

    :returns: (set) of sender addresses

    :raises ConfigException: if min_packets is negative
    '''
    if min_packets < 0:
        raise ConfigException('min_packets', 'min_packets must be >= 0')
    return {sender for sender, count in batch.per_sender_counts.items()
            if count > min_packets}


class TrafficStats(object):
    '''per-protocol characterisation of a window of batches

    :ivar pandas.DataFrame table: one row per protocol and a Total row;
        columns ips, ports, daily_ips_mean, daily_ips_std, daily_ports_mean,
        daily_ports_std and records.  Port columns are NaN for ICMP/GRE.
    :ivar int days: number of batches in the window
    '''
    COLUMNS = ['ips', 'ports', 'daily_ips_mean', 'daily_ips_std',
               'daily_ports_mean', 'daily_ports_std', 'records']

    def __init__(self, table, days):
        self.table = table
        self.days = days

    def ips(self, proto='Total'):
        '''(int) distinct senders over the window'''
        return int(self.table.at[proto, 'ips'])

    def ports(self, proto='Total'):
        '''(int|None) distinct destination ports over the window'''
        val = self.table.at[proto, 'ports']
        return None if pd.isna(val) else int(val)

    def daily_ips(self, proto='Total'):
        '''(tuple) mean and standard deviation of the daily distinct
        senders'''
        return (float(self.table.at[proto, 'daily_ips_mean']),
                float(self.table.at[proto, 'daily_ips_std']))

    def daily_ports(self, proto='Total'):
        '''(tuple) mean and standard deviation of the daily distinct ports'''
        return (float(self.table.at[proto, 'daily_ports_mean']),
                float(self.table.at[proto, 'daily_ports_std']))

    def records(self, proto='Total'):
        '''(int) number of packets'''
        return int(self.table.at[proto, 'records'])

    def to_frame(self):
        '''return the table with the protocol as a column'''
        return self.table.rename_axis('proto').reset_index()


def _packet_frame(batches, active_only):
    rows = []
    for idx, batch in enumerate(batches):
        keep = batch.active_senders if active_only else None
        for rec in batch.records:
            if keep is None or rec.sender in keep:
                rows.append((idx, rec.proto, rec.sender, rec.dst_port))
    return pd.DataFrame(rows, columns=['day', 'proto', 'sender', 'port'])


def _daily(frame, column, ndays):
    per_day = frame.groupby('day')[column].nunique()
    per_day = per_day.reindex(range(ndays), fill_value=0)
    return float(per_day.mean()), float(np.std(per_day.values))


def characterize(batches, active_only=False):
    '''compute the distinct sender and port counts per protocol over the
    window and their per-day mean and standard deviation (population std)

    :param list batches: DailyBatch objects, at least one
    :param bool active_only: *Default: False* - count only the packets of
        each day's active senders

    :returns: (TrafficStats)

    :raises ContractException: if batches is empty
    '''
    if not batches:
        raise ContractException('characterize needs at least one batch')
    ndays = len(batches)
    frame = _packet_frame(batches, active_only)
    table = pd.DataFrame(index=list(PROTOCOLS) + ['Total'],
                         columns=TrafficStats.COLUMNS, dtype=float)
    for proto in PROTOCOLS:
        sub = frame[frame.proto == proto]
        row = {'ips': sub.sender.nunique(), 'records': len(sub)}
        row['daily_ips_mean'], row['daily_ips_std'] = _daily(sub, 'sender',
                                                             ndays)
        if proto in PORTED:
            row['ports'] = sub.port.nunique()
            row['daily_ports_mean'], row['daily_ports_std'] = \
                _daily(sub, 'port', ndays)
        for key, val in row.items():
            table.at[proto, key] = val
    ported = frame[frame.proto.isin(PORTED)]
    total = {'ips': frame.sender.nunique(), 'ports': ported.port.nunique(),
             'records': len(frame)}
    total['daily_ips_mean'], total['daily_ips_std'] = _daily(frame, 'sender',
                                                             ndays)
    total['daily_ports_mean'], total['daily_ports_std'] = \
        _daily(ported, 'port', ndays)
    for key, val in total.items():
        table.at['Total', key] = val
    return TrafficStats(table, ndays)


def active_days_distribution(batches):
    '''count on how many days each sender was active and the ECCDF of that
    count

    :param list batches: DailyBatch objects, at least one

    :returns: (tuple) map sender -> active days, list of (x, fraction of
        senders active on x days or more) for x = 1..len(batches)

    :raises ContractException: if batches is empty
    '''
    if not batches:
        raise ContractException('active_days_distribution needs a batch')
    counts = Counter()
    for batch in batches:
        counts.update(batch.active_senders)
    values = np.fromiter(counts.values(), dtype=np.int64, count=len(counts))
    points = []
    for xval in range(1, len(batches) + 1):
        frac = float((values >= xval).mean()) if len(values) else 0.0
        points.append((xval, frac))
    return dict(counts), points
