"""Plot-ready tables behind the usual telescope views: daily senders,
clustering statistics, transitions per day, emerged cluster fates, the
lineage timeline, activity rasters and the labelled / unknown transition
summary.  Everything is a pandas DataFrame written as CSV."""
import hashlib
import logging
import os

import numpy as np
import pandas as pd

from darktrack.dca import KINDS, SURVIVED, next_day
from darktrack.gtlabel import UNKNOWN
from darktrack.ingest import sender_key

log = logging.getLogger(__name__)

SURVIVES = 'survives-next-day'
REIDENTIFIED = 'reidentified-later'
NEVER = 'never-reidentified'
INDETERMINATE = 'indeterminate'
FATES = (SURVIVES, REIDENTIFIED, NEVER, INDETERMINATE)

MANIFEST = 'manifest.csv'
MANIFEST_HEADER = ('artifact', 'rows', 'sha256', 'status')


def ecdf(values):
    '''empirical distribution function

    :param iter values: numbers

    :returns: (list) (x, fraction of values <= x) for each distinct x,
        ascending
    '''
    vals = np.sort(np.asarray(list(values), dtype=float))
    if not len(vals):
        return []
    xs, counts = np.unique(vals, return_counts=True)
    return list(zip(xs.tolist(), (np.cumsum(counts) / len(vals)).tolist()))


def daily_sender_series(batches, bootstrap=()):
    '''total, active and new senders per day

    A sender is new on the first day it sends anything, counting the
    bootstrap batches as history.

    :param list batches: DailyBatch objects of the reporting window
    :param list bootstrap: *Default: ()* - batches preceding the window

    :returns: (pandas.DataFrame) columns day, total, active, new
    '''
    seen = set()
    for batch in bootstrap:
        seen |= batch.senders
    rows = []
    for batch in batches:
        senders = batch.senders
        rows.append((batch.day, len(senders), len(batch.active_senders),
                     len(senders - seen)))
        seen |= senders
    return pd.DataFrame(rows, columns=['day', 'total', 'active', 'new'])


def clustering_statistics(partitions, silhouettes=None):
    '''per-day cluster counts and the silhouette / size distributions

    :param list partitions: Partition objects
    :param dict silhouettes: *Default: None* - day -> SilhouetteReport

    :returns: (tuple) DataFrames: counts (day, clusters, clustered, noise,
        silhouette), silhouette ECDF (day, x, F) and cluster size ECDF
        (x, F)
    '''
    silhouettes = silhouettes or {}
    counts, sil_rows, sizes = [], [], []
    for part in partitions:
        rep = silhouettes.get(part.day)
        mean = rep.mean if rep is not None and rep.defined else np.nan
        clustered = sum(len(mem) for mem in part.clusters.values())
        counts.append((part.day, len(part), clustered, len(part.noise),
                       mean))
        sizes.extend(len(mem) for mem in part.clusters.values())
        if rep is not None and rep.defined:
            for xval, frac in ecdf(rep.values.values()):
                sil_rows.append((part.day, xval, frac))
    return (pd.DataFrame(counts, columns=['day', 'clusters', 'clustered',
                                          'noise', 'silhouette']),
            pd.DataFrame(sil_rows, columns=['day', 'x', 'F']),
            pd.DataFrame(ecdf(sizes), columns=['x', 'F']))


def emerged_fates(reports, registry):
    '''what became of every emerged cluster

    ``survives-next-day`` when it Survived into the following day,
    ``reidentified-later`` when its lineage shows up again on a later day,
    ``never-reidentified`` otherwise, ``indeterminate`` on the last day of
    the window.

    :param list reports: DayReport objects, in day order
    :param LineageRegistry registry: the lineages

    :returns: (list) (day, cluster, fate)
    '''
    kinds = {}
    for rep in reports:
        for tr in rep.transitions:
            kinds[(tr.source_day, tr.source)] = tr.kind
    last = reports[-1].day if reports else None
    out = []
    for rep in reports:
        for em in rep.emerged:
            if rep.day == last:
                fate = INDETERMINATE
            elif kinds.get((rep.day, em.cluster)) == SURVIVED:
                fate = SURVIVES
            else:
                lid = registry.lineage_of(rep.day, em.cluster)
                later = [day for day, _, _ in registry.histories.get(lid, [])
                         if day > rep.day]
                fate = REIDENTIFIED if later else NEVER
            out.append((rep.day, em.cluster, fate))
    return out


def transition_breakdown(reports, registry=None):
    '''transition counts per day, with the emerged clusters and their fates

    :param list reports: DayReport objects
    :param LineageRegistry|None registry: *Default: None* - needed for the
        fate columns

    :returns: (pandas.DataFrame) columns day, one per kind, emerged,
        novelty and one per fate when a registry is given
    '''
    fates = {}
    if registry is not None:
        for day, _, fate in emerged_fates(reports, registry):
            fates.setdefault(day, dict.fromkeys(FATES, 0))[fate] += 1
    rows = []
    for rep in reports:
        row = {'day': rep.day}
        row.update(rep.counts())
        row['emerged'] = len(rep.emerged)
        row['novelty'] = len(rep.novelties)
        if registry is not None:
            row.update(fates.get(rep.day, dict.fromkeys(FATES, 0)))
        rows.append(row)
    columns = ['day'] + list(KINDS) + ['emerged', 'novelty']
    if registry is not None:
        columns += list(FATES)
    return pd.DataFrame(rows, columns=columns)


def _cohort(label):
    return 'unknown' if label.label == UNKNOWN else 'labelled'


def transition_summary(reports, labels, silhouettes=None):
    '''the labelled / unknown breakdown of the transitions

    Kind rows give the share of the classified source clusters (clusters of
    the last day have no transition and are left out), Total counts every
    cluster of the window and Emerged details the emerged clusters, already
    part of Total.

    :param list reports: DayReport objects
    :param dict labels: (day, cluster) -> ClusterLabel, for every cluster of
        every day, the first day included
    :param dict silhouettes: *Default: None* - day -> SilhouetteReport

    :returns: (pandas.DataFrame) indexed by Absorbed, Split, Disappeared,
        Survived, Inactive, Total, Emerged; per cohort the count, pct,
        avg_ips, avg_sh and, for labelled, avg_purity
    '''
    silhouettes = silhouettes or {}

    def sil(key):
        rep = silhouettes.get(key[0])
        if rep is None or not rep.defined:
            return np.nan
        return rep.cluster_means.get(key[1], np.nan)

    groups = {kind: [] for kind in KINDS + ('Total', 'Emerged')}
    for rep in reports:
        for tr in rep.transitions:
            groups[tr.kind].append((tr.source_day, tr.source))
        groups['Emerged'].extend((rep.day, em.cluster) for em in rep.emerged)
    groups['Total'] = sorted(labels, key=lambda key: (str(key[0]), key[1]))
    classified = {'labelled': 0, 'unknown': 0}
    for kind in KINDS:
        for key in groups[kind]:
            classified[_cohort(labels[key])] += 1
    rows = []
    for name, keys in groups.items():
        row = {}
        for cohort in ('labelled', 'unknown'):
            mine = [key for key in keys if _cohort(labels[key]) == cohort]
            row[cohort + '_count'] = len(mine)
            if name in KINDS and classified[cohort]:
                row[cohort + '_pct'] = 100.0 * len(mine) / classified[cohort]
            elif name in KINDS:
                row[cohort + '_pct'] = 0.0
            else:
                row[cohort + '_pct'] = np.nan
            sizes = [labels[key].size for key in mine]
            shs = [val for val in (sil(key) for key in mine)
                   if not np.isnan(val)]
            row[cohort + '_avg_ips'] = np.mean(sizes) if sizes else np.nan
            row[cohort + '_avg_sh'] = np.mean(shs) if shs else np.nan
            if cohort == 'labelled':
                purity = [labels[key].purity for key in mine]
                row['labelled_avg_purity'] = \
                    np.mean(purity) if purity else np.nan
        rows.append(pd.Series(row, name=name))
    columns = ['labelled_count', 'labelled_pct', 'labelled_avg_ips',
               'labelled_avg_sh', 'labelled_avg_purity', 'unknown_count',
               'unknown_pct', 'unknown_avg_ips', 'unknown_avg_sh']
    return pd.DataFrame(rows)[columns].rename_axis('row')


def lineage_timeline(registry, days=None):
    '''one row per lineage and day plus the split / absorb links

    Status is ``present``, ``ended-by-<kind>`` on the day after the source
    day of the transition ending the lineage segment, or ``inactive-gap``
    for the days in between a segment end and a reactivation.  Link rows
    carry the same day, the status ``split`` or ``absorbed`` and the
    lineage the senders went to.

    :param LineageRegistry registry: the lineages
    :param list days: *Default: None* - the window, taken from the registry
        if None

    :returns: (pandas.DataFrame) columns lineage, day, status, target
    '''
    if days is None:
        days = {day for hist in registry.histories.values()
                for day, _, _ in hist}
        days |= {next_day(evt[0]) for evt in registry.events}
    days = sorted(days)
    marks = {}
    links = []
    for lid, hist in registry.histories.items():
        for day, _, _ in hist:
            marks[(lid, day)] = 'present'
    for src_day, _, lid, kind, targets in registry.events:
        day = next_day(src_day)
        marks.setdefault((lid, day), 'ended-by-%s' % kind.lower())
        if kind in ('Split', 'Absorbed'):
            for tgt in targets:
                links.append((lid, day, kind.lower(),
                              registry.lineage_of(day, tgt)))
    rows = []
    for lid in sorted(registry.histories):
        seen = [day for day in days if (lid, day) in marks]
        if not seen:
            continue
        for day in days:
            if day < seen[0] or day > seen[-1]:
                continue
            rows.append((lid, day, marks.get((lid, day), 'inactive-gap'),
                         None))
    rows.extend(sorted(links, key=lambda row: (row[0], str(row[1]))))
    frame = pd.DataFrame(rows, columns=['lineage', 'day', 'status',
                                        'target'])
    frame['target'] = frame['target'].astype('Int64')
    return frame


def activity_raster(records, members):
    '''the packets of a group of senders, senders ranked by their first
    appearance

    :param iter records: PacketRecords, e.g. from several daily batches
    :param set members: the senders to plot

    :returns: (pandas.DataFrame) columns rank, sender, timestamp, one row per
        packet
    '''
    points = [(rec.sender, rec.timestamp) for rec in records
              if rec.sender in members]
    first = {}
    for snd, stamp in points:
        if snd not in first or stamp < first[snd]:
            first[snd] = stamp
    order = sorted(first, key=lambda snd: (first[snd], sender_key(snd)))
    rank = {snd: num for num, snd in enumerate(order)}
    rows = sorted(((rank[snd], snd, stamp) for snd, stamp in points),
                  key=lambda row: (row[0], row[2]))
    return pd.DataFrame(rows, columns=['rank', 'sender', 'timestamp'])


def _digest(path):
    sha = hashlib.sha256()
    rows = -1
    with open(path, 'rb') as hndl:
        for line in hndl:
            sha.update(line)
            rows += 1
    return max(rows, 0), sha.hexdigest()


def write_manifest(outdir, artifacts, status='complete'):
    '''list the artifacts of a run with their row count and digest

    :param str outdir: the run directory
    :param list artifacts: file names relative to outdir, missing ones are
        listed with status ``missing``
    :param str status: *Default: 'complete'* - ``partial`` after a failure

    :returns: (str) path of the manifest
    '''
    rows = []
    for name in sorted(artifacts):
        path = os.path.join(outdir, name)
        if os.path.exists(path):
            count, digest = _digest(path)
            rows.append((name, count, digest, status))
        else:
            rows.append((name, 0, '', 'missing'))
    path = os.path.join(outdir, MANIFEST)
    pd.DataFrame(rows, columns=MANIFEST_HEADER).to_csv(
        path, index=False, lineterminator='\n')
    return path


class ReportBundle(object):
    '''named tables written together into a run directory

    :param dict frames: *Default: None* - file name -> DataFrame
    '''
    def __init__(self, frames=None):
        self.frames = dict(frames or {})

    def add(self, name, frame):
        '''add (or replace) a table, name is the CSV file name'''
        self.frames[name] = frame
        return self

    def __contains__(self, name):
        return name in self.frames

    def __getitem__(self, name):
        return self.frames[name]

    def write(self, outdir, extra=(), status='complete'):
        '''write every table and the manifest

        :param str outdir: destination directory, created if needed
        :param iter extra: *Default: ()* - files already in outdir to list
            in the manifest too
        :param str status: *Default: 'complete'*

        :returns: (list) the artifact names
        '''
        os.makedirs(outdir, exist_ok=True)
        for name, frame in sorted(self.frames.items()):
            frame.to_csv(os.path.join(outdir, name), index=False,
                         lineterminator='\n', float_format='%.6f')
            log.debug('wrote %s (%d rows)', name, len(frame))
        names = sorted(set(self.frames) | set(extra))
        write_manifest(outdir, names, status)
        return names
