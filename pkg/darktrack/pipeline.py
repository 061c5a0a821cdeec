"""Run the stages day by day and fill the run directory.

Layout of a run directory::

    config.yaml              effective configuration (not in the manifest)
    models/<day>.bin         embedding checkpoint after each day
    corpora/<day>.txt        corpus dumps, when asked for
    partitions/<day>.csv     partition snapshot of each tracked day
    partitions.csv           every snapshot in one file
    labels.csv               majority label and purity of every cluster
    transitions.csv          one row per (day, source cluster)
    emergences.csv           one row per (day, target cluster)
    lineages.csv             lineage presence and segment ends
    *.csv                    report tables, see ``Pipeline.reports``
    manifest.csv             artifact, rows, sha256, status
"""
import logging
import os
import tempfile

import pandas as pd

from darktrack.cluster import NOISE, cluster_embeddings, save_partitions
from darktrack.cluster import silhouette as silhouette_report
from darktrack.corpus import build_corpus, dump_corpus
from darktrack.dca import DynamicClusterAnalysis, write_emergences, \
    write_lineages, write_transitions
from darktrack.embed import embedding, init_model, save_model, \
    train_incremental
from darktrack.exceptions import ConfigException, ContractException, \
    InputException, StageException
from darktrack.gtlabel import GroundTruth, apply_mirai_labels, \
    label_partition, load_ground_truth, write_labels
from darktrack.ingest import Rejects, active_days_distribution, \
    batch_by_day, characterize, read_packet_logs
from darktrack.report import ReportBundle, activity_raster, \
    clustering_statistics, daily_sender_series, emerged_fates, \
    lineage_timeline, transition_breakdown, transition_summary, \
    write_manifest

log = logging.getLogger(__name__)

CONFIG = 'config.yaml'
PARTITIONS = 'partitions.csv'
LABELS = 'labels.csv'
TRANSITIONS = 'transitions.csv'
EMERGENCES = 'emergences.csv'
LINEAGES = 'lineages.csv'
MODELS = 'models'
CORPORA = 'corpora'
SNAPSHOTS = 'partitions'

STAGES = ('embed', 'cluster', 'report')

LOG_FORMAT = '%(levelname)-.3s [%(asctime)s.%(msecs)03d] %(name)s: ' \
    '%(message)s'
LOG_DATEFMT = '%Y%m%d-%H:%M:%S'


class Pipeline(object):
    """The darktrack pipeline: ingest, corpus, incremental embedding,
    clustering, labelling and tracking, one day after the other.

    :param RunConfig config: the run settings, validated here
    :param bool dump_corpora: *Default: False* - also write the daily
        corpora into the run directory

    :ivar list bootstrap: DailyBatch objects only used for training
    :ivar list batches: the tracked DailyBatch objects
    :ivar EmbeddingModel model: the embeddings, trained so far
    :ivar list partitions: one Partition per tracked day
    :ivar dict silhouettes: day -> SilhouetteReport
    :ivar dict labels: (day, cluster) -> ClusterLabel
    :ivar DynamicClusterAnalysis tracker: transitions and lineages
    :ivar list artifacts: files written, relative to the run directory

    :raises ConfigException: if the configuration is invalid
    """
    def __init__(self, config, dump_corpora=False):
        self.config = config.validate()
        self.dump_corpora = dump_corpora
        self.rejects = Rejects()
        self.bootstrap = []
        self.batches = []
        self.model = init_model(config.dimension, config.seed)
        self.ground_truth = GroundTruth()
        self.tracker = DynamicClusterAnalysis(config.thresholds(),
                                              config.history_horizon)
        self.partitions = []
        self.silhouettes = {}
        self.labels = {}
        self.artifacts = []

        self._handler = None
        self._level = None
        self._logfile = config.log
        if config.log:
            if isinstance(config.log, bool):
                # Log to a temporary file.
                fhnd, self._logfile = tempfile.mkstemp('.txt', 'darktrack-')
                os.close(fhnd)  # don't want os file descriptors open
            self._handler = logging.FileHandler(self._logfile)
            self._handler.setFormatter(logging.Formatter(LOG_FORMAT,
                                                         LOG_DATEFMT))
            lgr = logging.getLogger('darktrack')
            self._level = lgr.level
            lgr.setLevel(logging.DEBUG)
            lgr.addHandler(self._handler)

    @property
    def logfile(self):
        '''return the name of the file used for logging or False it not
        logging

        :returns: (str)logfile or (bool) False
        '''
        return self._logfile

    @property
    def outdir(self):
        '''(str|None) the run directory'''
        return self.config.outdir

    def _path(self, name):
        return os.path.join(self.outdir, name)

    def _written(self, name):
        if name not in self.artifacts:
            self.artifacts.append(name)
        return self._path(name)

    @staticmethod
    def _stage(name, day, func, *args):
        try:
            return func(*args)
        except StageException:
            raise
        except Exception as err:
            log.error('stage %s failed on %s: %s', name, day or '-', err)
            raise StageException(name, day, err)

    def ingest(self, paths=None):
        '''read the packet logs and bucket them by day, the first
        ``bootstrap_days`` days are set aside for training

        :param list paths: *Default: None* - the logs, ``config.inputs`` if
            None

        :returns: (list) the tracked DailyBatch objects

        :raises ConfigException: without logs, or if the bootstrap leaves
            nothing to track
        :raises InputException: if the logs hold no valid record
        '''
        paths = list(self.config.inputs if paths is None else paths)
        if not paths:
            raise ConfigException('inputs', 'no packet logs given')
        batches = batch_by_day(read_packet_logs(paths, self.rejects),
                               self.config.min_packets)
        if not batches:
            raise InputException(paths[0], 'no valid packet records')
        nboot = self.config.bootstrap_days
        if nboot >= len(batches):
            raise ConfigException('bootstrap_days', 'bootstrap_days must '
                                  'leave at least one day to track')
        self.bootstrap, self.batches = batches[:nboot], batches[nboot:]
        log.info('%d days (%d bootstrap), %d records, %d rejected lines',
                 len(batches), nboot, sum(len(bat) for bat in batches),
                 self.rejects.total)
        return self.batches

    def load_ground_truth(self):
        '''read the ground truth file, if any, and run the Mirai rule on the
        first batch (bootstrap included) unless it runs every day

        :returns: (GroundTruth)
        '''
        cfg = self.config
        gt = GroundTruth()
        if cfg.ground_truth:
            gt = load_ground_truth(cfg.ground_truth)
        first = (self.bootstrap or self.batches or [None])[0]
        if cfg.mirai_rule and not cfg.mirai_refresh and first is not None:
            gt = apply_mirai_labels(gt, first)
        self.ground_truth = gt
        return gt

    def corpus(self, batch):
        '''(Corpus) the day's sentences'''
        cfg = self.config
        corp = build_corpus(batch, None, cfg.max_services,
                            cfg.max_sentence_len, cfg.collapse_runs)
        if self.dump_corpora and self.outdir:
            os.makedirs(self._path(CORPORA), exist_ok=True)
            dump_corpus(corp, self._written(
                '%s/%s.txt' % (CORPORA, batch.day.isoformat())))
        return corp

    def embed(self, batch, corp):
        '''continue training on the day's corpus and checkpoint the model

        :returns: (EmbeddingModel)
        '''
        train_incremental(self.model, corp, self.config.train_opts())
        if self.outdir:
            os.makedirs(self._path(MODELS), exist_ok=True)
            save_model(self.model, self._written(
                '%s/%s.bin' % (MODELS, batch.day.isoformat())))
        return self.model

    def cluster(self, batch, corp):
        '''partition the day's active senders

        Only senders of the day's corpus are embedded, the active senders
        left out of it go to noise.

        :returns: (tuple) Partition, distance matrix, row senders
        '''
        vectors = {snd: embedding(self.model, snd)
                   for snd in batch.active_senders if snd in corp.vocab}
        result = cluster_embeddings(vectors, self.config.min_cluster_size,
                                    batch.day, batch.active_senders,
                                    self.config.workers, self.config.chunked)
        self._keep(result[0])
        return result

    def _keep(self, part):
        self.partitions.append(part)
        if self.outdir:
            os.makedirs(self._path(SNAPSHOTS), exist_ok=True)
            save_partitions([part], self._written(
                '%s/%s.csv' % (SNAPSHOTS, part.day.isoformat())))

    def silhouette(self, part, distances, senders):
        '''(SilhouetteReport) of the day, from the clustering matrix'''
        rep = silhouette_report(part, distances, senders)
        self.silhouettes[part.day] = rep
        return rep

    def label(self, part, batch=None):
        '''majority label of every cluster of the day

        :param Partition part: the day's clusters
        :param DailyBatch|None batch: *Default: None* - the day's packets,
            scanned for the Mirai fingerprint when it runs every day

        :returns: (dict) cluster index -> ClusterLabel
        '''
        cfg = self.config
        if cfg.mirai_rule and cfg.mirai_refresh and batch is not None:
            self.ground_truth = apply_mirai_labels(self.ground_truth, batch)
        labels = label_partition(part, self.ground_truth)
        for idx, lab in labels.items():
            self.labels[(part.day, idx)] = lab
        return labels

    def track(self, part):
        '''feed the tracker

        :returns: (DayReport|None) None on the first day
        '''
        if self.tracker.current is None:
            self.tracker.start(part)
            return None
        return self.tracker.step(part)

    def process(self, batch, until='report'):
        '''run one day through the stages

        :param DailyBatch batch: the day
        :param str until: *Default: 'report'* - ``embed`` only trains,
            ``cluster`` stops before labelling and tracking

        :returns: (DayReport|None)

        :raises StageException: naming the failed stage and the day
        '''
        day = batch.day
        corp = self._stage('corpus', day, self.corpus, batch)
        self._stage('embed', day, self.embed, batch, corp)
        if until == 'embed':
            return None
        part, dist, senders = self._stage('cluster', day, self.cluster,
                                          batch, corp)
        self._stage('silhouette', day, self.silhouette, part, dist, senders)
        if until == 'cluster':
            return None
        self._stage('label', day, self.label, part, batch)
        return self._stage('track', day, self.track, part)

    def replay(self, part, batch=None):
        '''label and track an imported partition

        :returns: (DayReport|None)
        '''
        self._stage('cluster', part.day, self._keep, part)
        self._stage('label', part.day, self.label, part, batch)
        return self._stage('track', part.day, self.track, part)

    def run(self, partitions=None, until='report'):
        '''process every day and write the results

        :param list partitions: *Default: None* - imported Partition
            objects, tracked instead of clustering the embeddings
        :param str until: *Default: 'report'* - last stage, one of
            ``embed``, ``cluster``, ``report``

        :returns: (list) the artifacts, relative to the run directory

        :raises ConfigException: on a bad ``until`` or without outdir
        :raises StageException: when a stage fails, the manifest is then
            written with status ``partial``
        '''
        if until not in STAGES:
            raise ConfigException('until', 'until must be one of %s' %
                                  ', '.join(STAGES))
        if not self.outdir:
            raise ConfigException('outdir', 'no output directory given')
        os.makedirs(self.outdir, exist_ok=True)
        self.config.dump(self._path(CONFIG))
        try:
            self._stage('ingest', None, self.ingest)
            self._stage('label', None, self.load_ground_truth)
            if partitions is None:
                for batch in self.bootstrap:
                    self.process(batch, until='embed')
                for batch in self.batches:
                    self.process(batch, until)
            else:
                byday = {batch.day: batch for batch in self.batches}
                for part in partitions:
                    self.replay(part, byday.get(part.day))
            self._stage('report', None, self.write_results, until)
        except StageException:
            self._partial()
            raise
        return self.artifacts

    def _partial(self):
        try:
            write_manifest(self.outdir, self.artifacts, 'partial')
        except OSError as err:
            log.error('could not write the manifest: %s', err)

    def write_results(self, until='report'):
        '''write the tables of the stages that ran and the manifest

        :returns: (list) the artifacts
        '''
        if until == 'embed':
            write_manifest(self.outdir, self.artifacts)
            return self.artifacts
        save_partitions(self.partitions, self._written(PARTITIONS))
        if until == 'report':
            write_labels([(part.day, {idx: self.labels[(part.day, idx)]
                                      for idx in part.indices})
                          for part in self.partitions],
                         self._written(LABELS))
            write_transitions(self.tracker.reports,
                              self._written(TRANSITIONS))
            write_emergences(self.tracker.reports, self._written(EMERGENCES))
            write_lineages(self.tracker.registry, self._written(LINEAGES))
        bundle = self.reports(until)
        self.artifacts = bundle.write(self.outdir, self.artifacts)
        log.info('%s: %d artifacts', self.outdir, len(self.artifacts))
        return self.artifacts

    def input_reports(self, active_only=True):
        '''the tables describing the tracked days' traffic: ``rejects.csv``,
        ``traffic.csv``, ``active_days.csv`` and ``daily_senders.csv``

        :param bool active_only: *Default: True* - count only the packets
            of active senders in ``traffic.csv``

        :returns: (ReportBundle)
        '''
        bundle = ReportBundle()
        bundle.add('rejects.csv', pd.DataFrame(self.rejects.as_rows(),
                                               columns=['reason', 'count']))
        bundle.add('traffic.csv', characterize(
            self.batches, active_only=active_only).to_frame())
        _, eccdf = active_days_distribution(self.batches)
        bundle.add('active_days.csv', pd.DataFrame(eccdf,
                                                   columns=['days', 'F']))
        bundle.add('daily_senders.csv',
                   daily_sender_series(self.batches, self.bootstrap))
        return bundle

    def reports(self, until='report'):
        '''the report tables

        ``rejects.csv``, ``traffic.csv`` (active senders), ``active_days.csv``
        and ``daily_senders.csv`` describe the input; ``cluster_counts.csv``,
        ``silhouette_ecdf.csv`` and ``cluster_size_ecdf.csv`` the
        clustering; ``transitions_per_day.csv``, ``emerged_fates.csv``,
        ``lineage_timeline.csv`` and ``transition_summary.csv`` the tracking,
        these last four only once the tracker ran.

        :returns: (ReportBundle)
        '''
        bundle = self.input_reports()
        counts, sil, sizes = clustering_statistics(self.partitions,
                                                   self.silhouettes)
        bundle.add('cluster_counts.csv', counts)
        bundle.add('silhouette_ecdf.csv', sil)
        bundle.add('cluster_size_ecdf.csv', sizes)
        if until != 'report':
            return bundle
        tracker = self.tracker
        bundle.add('transitions_per_day.csv',
                   transition_breakdown(tracker.reports, tracker.registry))
        bundle.add('emerged_fates.csv', pd.DataFrame(
            emerged_fates(tracker.reports, tracker.registry),
            columns=['day', 'cluster', 'fate']))
        bundle.add('lineage_timeline.csv', lineage_timeline(
            tracker.registry, [part.day for part in tracker.partitions]))
        bundle.add('transition_summary.csv', transition_summary(
            tracker.reports, self.labels, self.silhouettes).reset_index())
        return bundle

    def raster(self, day, cluster):
        '''packets of one cluster's senders over the whole window

        :param datetime.date day: the cluster's day
        :param int cluster: its index

        :returns: (pandas.DataFrame) see ``report.activity_raster``

        :raises ContractException: if there is no such cluster
        '''
        found = [part for part in self.partitions if part.day == day]
        if not found or (cluster not in found[0].clusters and
                         cluster != NOISE):
            raise ContractException('no cluster %s on %s' % (cluster, day))
        members = found[0].members(cluster)
        records = (rec for batch in self.batches for rec in batch.records)
        return activity_raster(records, members)

    def close(self):
        """Remove the log handler installed for this run."""
        if self._handler is not None:
            lgr = logging.getLogger('darktrack')
            lgr.removeHandler(self._handler)
            lgr.setLevel(self._level)
            self._handler.close()
            self._handler = None

    def __enter__(self):
        return self

    def __exit__(self, etype, value, traceback):
        self.close()
