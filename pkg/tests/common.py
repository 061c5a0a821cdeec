'''common setup code for tests'''

from datetime import date, timedelta
import csv
import os

import numpy as np

from darktrack.cluster import Partition
from darktrack.config import RunConfig
from darktrack.ingest import HEADER, PacketRecord
from darktrack.synth import GroupSpec, ScenarioSpec

# pytest-sftpserver plugin information
SFTP_INTERNAL = {'host': 'localhost', 'username': 'user', 'password': 'pw'}

DAY0 = date(2021, 6, 1)
# 2021-06-01 00:00:00 UTC
T0 = 1622505600.0


def conn(sftpsrv):
    """return a dictionary holding argument info for the archive client"""
    return {'host': sftpsrv.host, 'port': sftpsrv.port, 'username': 'user',
            'password': 'pw'}


def log_text(rows):
    '''the text of a packet log holding rows'''
    lines = [','.join(HEADER)]
    lines.extend(','.join(str(fld) for fld in row) for row in rows)
    return '\n'.join(lines) + '\n'


# filesystem served by pytest-sftpserver plugin
VFS = {
    'home': {
        'test': {
            'telescope': {
                '2021-06-01.csv': log_text([(T0 + 1, '198.51.100.7', 'TCP',
                                             23, '', '')]),
                '2021-06-02.csv.gz': 'not really gzip',
                'june': {
                    '2021-06-03.csv': log_text([(T0 + 2 * 86400,
                                                 '198.51.100.8', 'UDP', 53,
                                                 '', '')]),
                    'notes.txt': 'operator notes',
                },
                '2021-05-31.csv': log_text([]),
            },
            'read.me': 'contents of read.me',
        }
    }
}


def day(num):
    '''the date num days after DAY0'''
    return DAY0 + timedelta(days=num)


def record(stamp, sender, proto='TCP', port=23, seq=0, dst='203.0.113.1'):
    '''a PacketRecord with defaults'''
    return PacketRecord(float(stamp), sender, proto, port, seq, dst)


def write_log(path, rows):
    '''write a packet log, rows are tuples in header order'''
    with open(path, 'w', newline='') as hndl:
        writer = csv.writer(hndl, lineterminator='\n')
        writer.writerow(HEADER)
        writer.writerows(rows)
    return str(path)


def addr(group, num):
    '''a distinct documentation address per (group, num)'''
    return '198.%d.%d.%d' % (18 + group // 256, group % 256, num + 1)


def part(when, clusters, noise=()):
    '''Partition from a list of member lists, indices in list order'''
    return Partition(when, dict(enumerate(clusters)), noise)


def random_pair(rng, max_senders=60, max_clusters=6):
    '''two random consecutive partitions over a common sender pool, with
    random inactivity, noise and cluster counts'''
    pool = ['s%d' % num for num in range(int(rng.integers(2, max_senders)))]

    def draw():
        active = [snd for snd in pool if rng.random() < 0.8]
        ncl = int(rng.integers(0, max_clusters + 1))
        clusters = {}
        noise = []
        for snd in active:
            slot = int(rng.integers(-1, ncl)) if ncl else -1
            if slot < 0:
                noise.append(snd)
            else:
                clusters.setdefault(slot, []).append(snd)
        # renumber so indices are dense
        return {num: clusters[key] for num, key in
                enumerate(sorted(clusters))}, noise

    first, second = draw(), draw()
    return (Partition(DAY0, first[0], first[1]),
            Partition(day(1), second[0], second[1]))


def blobs(rng, centers, size=20, spread=0.01, dim=8):
    '''points scattered tightly around each center direction'''
    out = []
    for center in centers:
        center = np.asarray(center, dtype=float)
        out.extend(center + rng.normal(0, spread, size=(size, dim)))
    return np.array(out)


def small_scenario(seed=3, days=3):
    '''a fast scenario: two persistent groups and a late one'''
    groups = [GroupSpec('alpha', 12, label='shadowserver'),
              GroupSpec('beta', 12, label='Mirai-like'),
              GroupSpec('gamma', 12, emerge=2)]
    return ScenarioSpec(groups, days=days, seed=seed, noise=10)


def small_config(outdir, inputs=(), **settings):
    '''a RunConfig sized for the test scenarios'''
    cfg = RunConfig()
    cfg.update({'inputs': list(inputs), 'outdir': str(outdir),
                'dimension': 16, 'epochs': 10, 'lr_start': 0.05,
                'min_cluster_size': 5})
    cfg.update(settings)
    return cfg.validate()


def digests(outdir):
    '''artifact -> sha256 from a run directory's manifest'''
    out = {}
    with open(os.path.join(outdir, 'manifest.csv')) as hndl:
        for row in csv.DictReader(hndl):
            out[row['artifact']] = row['sha256']
    return out
