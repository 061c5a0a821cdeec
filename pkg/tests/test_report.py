'''test darktrack.report - uses py.test'''
import os

import numpy as np
import pandas as pd
import pytest

from common import DAY0, T0, day, part, record
from darktrack.cluster import SilhouetteReport
from darktrack.dca import DynamicClusterAnalysis
from darktrack.gtlabel import GroundTruth, label_partition
from darktrack.ingest import DailyBatch
from darktrack.report import (INDETERMINATE, NEVER, REIDENTIFIED, SURVIVES,
                              ReportBundle, activity_raster,
                              clustering_statistics, daily_sender_series,
                              ecdf, emerged_fates, lineage_timeline,
                              transition_breakdown, transition_summary,
                              write_manifest)


def _members(prefix, count):
    return ['%s%d' % (prefix, num) for num in range(count)]


P, S, R, X, L = [_members(pre, 10) for pre in 'psrxl']


def fates_run():
    '''P persists, S emerges and survives, R emerges and comes back after a
    silent day, X emerges and vanishes, L emerges on the last day'''
    parts = [part(DAY0, [P]), part(day(1), [P, S, R, X]),
             part(day(2), [P, S]), part(day(3), [P, S, R, L])]
    dca = DynamicClusterAnalysis()
    dca.run(parts)
    return parts, dca


def _batch(when, counts, active=()):
    '''DailyBatch with count packets per sender, the active ones get 6'''
    recs = []
    base = T0 + (when - DAY0).days * 86400
    for snd in counts:
        num = 6 if snd in active else 1
        recs.extend(record(base + idx, snd) for idx in range(num))
    return DailyBatch(when, recs)


def test_ecdf():
    '''fraction of values at or below each distinct value'''
    assert ecdf([3, 1, 2, 2]) == [(1.0, 0.25), (2.0, 0.75), (3.0, 1.0)]
    assert ecdf([]) == []


def test_daily_sender_series_bootstrap():
    '''senders seen during bootstrap are not new'''
    boot = [_batch(DAY0, ['a', 'b'], active=['a'])]
    window = [_batch(day(1), ['a', 'c'], active=['a', 'c'])]
    frame = daily_sender_series(window, boot)
    assert frame.to_dict('records') == [
        {'day': day(1), 'total': 2, 'active': 2, 'new': 1}]


def test_daily_sender_series_recount():
    '''without bootstrap the first day is all new, later days recount'''
    rng = np.random.default_rng(4)
    batches = []
    for num in range(5):
        senders = ['s%d' % val for val in rng.choice(30, 12, replace=False)]
        batches.append(_batch(day(num), senders, active=senders[:5]))
    frame = daily_sender_series(batches)
    assert frame.new[0] == frame.total[0] == 12
    seen = set()
    for row, bat in zip(frame.itertuples(), batches):
        assert row.new == len(bat.senders - seen)
        assert row.active == 5
        seen |= bat.senders


def test_clustering_statistics():
    '''cluster counts, sizes and the silhouette distribution'''
    parts = [part(DAY0, [P, S[:4]], noise=['n']), part(day(1), [P])]
    sil = {DAY0: SilhouetteReport({'p0': 0.5, 'p1': 1.0}, {0: 0.75}, 0.75)}
    counts, sil_ecdf, sizes = clustering_statistics(parts, sil)
    assert counts.clusters.tolist() == [2, 1]
    assert counts.clustered.tolist() == [14, 10]
    assert counts.noise.tolist() == [1, 0]
    assert counts.silhouette[0] == 0.75
    assert np.isnan(counts.silhouette[1])
    assert sil_ecdf.values.tolist() == [[DAY0, 0.5, 0.5], [DAY0, 1.0, 1.0]]
    assert sizes.values.tolist() == [[4.0, 1 / 3.0], [10.0, 1.0]]


def test_emerged_fates():
    '''each emerged cluster gets its fate'''
    _, dca = fates_run()
    assert emerged_fates(dca.reports, dca.registry) == [
        (day(1), 1, SURVIVES), (day(1), 2, REIDENTIFIED),
        (day(1), 3, NEVER), (day(3), 2, INDETERMINATE),
        (day(3), 3, INDETERMINATE)]


def test_transition_breakdown():
    '''hand tally of the kinds per day'''
    _, dca = fates_run()
    frame = transition_breakdown(dca.reports, dca.registry)
    assert frame.day.tolist() == [day(1), day(2), day(3)]
    assert frame.Survived.tolist() == [1, 2, 2]
    assert frame.Inactive.tolist() == [0, 2, 0]
    assert frame.emerged.tolist() == [3, 0, 2]
    assert frame.novelty.tolist() == [3, 0, 1]
    assert frame[SURVIVES].tolist() == [1, 0, 0]
    assert frame[INDETERMINATE].tolist() == [0, 0, 2]


def test_transition_summary():
    '''labelled / unknown breakdown, shares per cohort add up to 100'''
    parts, dca = fates_run()
    gtr = GroundTruth(dict.fromkeys(P, 'shadowserver'))
    labels = {}
    for prt in parts:
        for idx, lab in label_partition(prt, gtr).items():
            labels[(prt.day, idx)] = lab
    frame = transition_summary(dca.reports, labels)
    assert frame.index.tolist() == ['Absorbed', 'Split', 'Disappeared',
                                    'Survived', 'Inactive', 'Total',
                                    'Emerged']
    assert frame.at['Survived', 'labelled_count'] == 3
    assert frame.at['Survived', 'labelled_pct'] == 100.0
    assert frame.at['Survived', 'unknown_pct'] == 50.0
    assert frame.at['Inactive', 'unknown_pct'] == 50.0
    assert frame.at['Total', 'labelled_count'] == 4
    assert frame.at['Total', 'unknown_count'] == 7
    assert frame.at['Emerged', 'unknown_count'] == 5
    assert frame.at['Survived', 'labelled_avg_ips'] == 10
    assert frame.at['Survived', 'labelled_avg_purity'] == 1.0
    kinds = frame.loc[['Absorbed', 'Split', 'Disappeared', 'Survived',
                       'Inactive']]
    assert kinds.labelled_pct.sum() == pytest.approx(100.0)
    assert kinds.unknown_pct.sum() == pytest.approx(100.0)


def test_transition_summary_all_survive():
    '''every cluster survives, the other kinds stay at 0%'''
    parts = [part(day(num), [P, S]) for num in range(3)]
    dca = DynamicClusterAnalysis()
    dca.run(parts)
    labels = {(prt.day, idx): lab for prt in parts
              for idx, lab in label_partition(prt, GroundTruth()).items()}
    frame = transition_summary(dca.reports, labels)
    assert frame.at['Survived', 'unknown_pct'] == 100.0
    assert frame.loc[['Absorbed', 'Split', 'Disappeared', 'Inactive'],
                     'unknown_pct'].tolist() == [0.0] * 4


def test_lineage_timeline_present():
    '''a lineage alive 20 days has 20 present rows'''
    dca = DynamicClusterAnalysis()
    dca.run([part(day(num), [P]) for num in range(20)])
    frame = lineage_timeline(dca.registry)
    assert len(frame) == 20
    assert set(frame.status) == {'present'}


def test_lineage_timeline_absorb():
    '''an absorb event links the source lineage to the target one'''
    big, small = _members('b', 100), _members('s', 20)
    dca = DynamicClusterAnalysis()
    dca.run([part(DAY0, [big, small]), part(day(1), [big + small])])
    frame = lineage_timeline(dca.registry)
    rows = [(row.lineage, row.day, row.status,
             None if pd.isna(row.target) else row.target)
            for row in frame.itertuples()]
    assert rows == [(0, DAY0, 'present', None), (0, day(1), 'present', None),
                    (1, DAY0, 'present', None),
                    (1, day(1), 'ended-by-absorbed', None),
                    (1, day(1), 'absorbed', 0)]
    # the registry keeps the event under the source day
    assert [evt[:4] for evt in dca.registry.events] == [
        (DAY0, 1, 1, 'Absorbed')]


def test_lineage_timeline_gap():
    '''days between a segment end and a reactivation are a gap'''
    _, dca = fates_run()
    frame = lineage_timeline(dca.registry)
    lid = dca.registry.lineage_of(day(1), 2)
    mine = frame[frame.lineage == lid]
    assert mine.status.tolist() == ['present', 'ended-by-inactive',
                                    'present']


def test_activity_raster():
    '''senders ranked by first appearance, one row per packet'''
    recs = [record(T0 + 5, 'c'), record(T0 + 1, 'a'), record(T0 + 3, 'b')]
    recs += [record(T0 + 10 + num, 'a') for num in range(99)]
    recs.append(record(T0, 'other'))
    frame = activity_raster(recs, {'a', 'b', 'c'})
    ranks = frame.groupby('sender')['rank'].first().to_dict()
    assert ranks == {'a': 0, 'b': 1, 'c': 2}
    assert (frame.sender == 'a').sum() == 100
    assert 'other' not in set(frame.sender)


def test_manifest(tmp_path):
    '''row counts and digests, missing files flagged'''
    outdir = str(tmp_path)
    frame = pd.DataFrame({'a': [1, 2, 3]})
    names = ReportBundle().add('table.csv', frame).write(
        outdir, extra=['gone.csv'])
    assert names == ['gone.csv', 'table.csv']
    manifest = pd.read_csv(os.path.join(outdir, 'manifest.csv'),
                           keep_default_na=False)
    assert manifest.artifact.tolist() == ['gone.csv', 'table.csv']
    assert manifest.rows.tolist() == [0, 3]
    assert manifest.status.tolist() == ['missing', 'complete']
    assert len(manifest.sha256[1]) == 64


def test_manifest_partial(tmp_path):
    '''a failed run writes a partial manifest'''
    (tmp_path / 'done.csv').write_text('x\n1\n')
    write_manifest(str(tmp_path), ['done.csv'], status='partial')
    manifest = pd.read_csv(str(tmp_path / 'manifest.csv'))
    assert manifest.status.tolist() == ['partial']
