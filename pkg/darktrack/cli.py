"""The ``darktrack`` command.

Exit status: 0 on success, 1 on an input problem (unreadable or malformed
file, archive connection), 2 on an invalid setting, 3 when an internal
check fails.
"""
from argparse import ArgumentParser, BooleanOptionalAction
from datetime import date
import logging
import os
import sys

import pandas as pd
import yaml

from darktrack import __version__
from darktrack.cluster import load_partitions
from darktrack.config import RunConfig
from darktrack.dca import DynamicClusterAnalysis, write_emergences, \
    write_lineages, write_transitions
from darktrack.exceptions import ConfigException, ConnectionException, \
    ContractException, CredentialException, GroundTruthException, \
    InputException, LineageAssertion, ScenarioException, StageException
from darktrack.pipeline import Pipeline
from darktrack.remote import ArchiveOpts, SensorArchive
from darktrack.report import write_manifest
from darktrack.synth import ScenarioSpec, generate, score

log = logging.getLogger(__name__)

EXIT_INPUT = 1
EXIT_CONFIG = 2
EXIT_INTERNAL = 3


def _settings(parser):
    '''add one option per run setting, all defaulting to "not given"'''
    grp = parser.add_argument_group('run settings')
    grp.add_argument('-c', '--config', help='YAML run configuration')
    grp.add_argument('-o', '--outdir', help='run directory')
    for name, kind in (('dimension', int), ('window', int),
                       ('negatives', int), ('epochs', int),
                       ('lr-start', float), ('lr-end', float),
                       ('max-services', int), ('max-sentence-len', int),
                       ('min-cluster-size', int), ('tau0', float),
                       ('tau1', float), ('min-packets', int),
                       ('bootstrap-days', int), ('seed', int),
                       ('history-horizon', int), ('workers', int)):
        grp.add_argument('--' + name, type=kind)
    for name in ('collapse-runs', 'chunked', 'mirai-rule', 'mirai-refresh'):
        grp.add_argument('--' + name, action=BooleanOptionalAction)
    grp.add_argument('--ground-truth', help='sender_ip,label CSV')
    grp.add_argument('--log', nargs='?', const=True,
                     help='log file, a temporary one without a path')


def _config(args):
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    given = {name: getattr(args, name, None) for name in cfg.fields}
    if getattr(args, 'inputs', None):
        given['inputs'] = args.inputs
    return cfg.update(given).validate()


def _day_cluster(text):
    day, _, cluster = text.partition(':')
    return date.fromisoformat(day), int(cluster)


def _rasters(pipeline, wanted):
    names = []
    for day, cluster in wanted or ():
        name = 'raster_%s_%d.csv' % (day.isoformat(), cluster)
        pipeline.raster(day, cluster).to_csv(
            os.path.join(pipeline.outdir, name), index=False,
            lineterminator='\n', float_format='%.6f')
        names.append(name)
    if names:
        pipeline.artifacts.extend(names)
        write_manifest(pipeline.outdir, pipeline.artifacts)
    return names


def _run(args, until='report', partitions=None):
    with Pipeline(_config(args), getattr(args, 'dump_corpus', False)) as ppl:
        ppl.run(partitions, until)
        _rasters(ppl, getattr(args, 'raster', None))
        if ppl.logfile:
            print('log: %s' % ppl.logfile)
    print('%s: %d artifacts' % (ppl.outdir, len(ppl.artifacts)))
    return 0


def cmd_run(args):
    '''the whole pipeline'''
    return _run(args)


def cmd_embed(args):
    '''train and checkpoint the embeddings only'''
    return _run(args, 'embed')


def cmd_cluster(args):
    '''train, cluster and snapshot the partitions, no tracking'''
    return _run(args, 'cluster')


def cmd_report(args):
    '''track imported partitions over the logs and write every report'''
    partitions = None
    if args.partitions:
        partitions = load_partitions(args.partitions)
    return _run(args, 'report', partitions)


def cmd_track(args):
    '''transitions, emergences and lineages of a partition snapshot'''
    cfg = _config(args)
    if not cfg.outdir:
        raise ConfigException('outdir', 'no output directory given')
    tracker = DynamicClusterAnalysis(cfg.thresholds(), cfg.history_horizon)
    reports = tracker.run(load_partitions(args.snapshot))
    os.makedirs(cfg.outdir, exist_ok=True)
    names = ('transitions.csv', 'emergences.csv', 'lineages.csv')
    write_transitions(reports, os.path.join(cfg.outdir, names[0]))
    write_emergences(reports, os.path.join(cfg.outdir, names[1]))
    write_lineages(tracker.registry, os.path.join(cfg.outdir, names[2]))
    write_manifest(cfg.outdir, names)
    print('%s: %d days tracked, %d lineages' % (cfg.outdir, len(reports),
                                                len(tracker.registry)))
    return 0


def cmd_ingest_stats(args):
    '''traffic characterization of the logs'''
    cfg = _config(args)
    ppl = Pipeline(cfg)
    ppl.ingest()
    bundle = ppl.input_reports(active_only=not args.all_senders)
    print(bundle['traffic.csv'].to_string(index=False))
    if cfg.outdir:
        bundle.write(cfg.outdir)
    return 0


def cmd_fetch(args):
    '''copy the daily logs from the sensor archive'''
    opts = ArchiveOpts()
    opts.compression = args.compression
    opts.log = args.log or False
    with SensorArchive(args.host, username=args.username,
                       password=args.password, private_key=args.private_key,
                       port=args.port, archive_opts=opts) as archive:
        paths = archive.fetch_logs(args.remotedir, args.localdir, args.since,
                                   args.until, args.preserve_mtime)
        if archive.logfile:
            print('log: %s' % archive.logfile)
    for path in paths:
        print(path)
    return 0


def cmd_synth(args):
    '''write a synthetic scenario, optionally run and score the pipeline'''
    if args.scenario:
        spec = ScenarioSpec.from_file(args.scenario)
    else:
        spec = ScenarioSpec.acceptance()
    if args.seed is not None:
        spec.seed = args.seed
    spec.validate()
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    cfg.validate()
    scenario = generate(spec, args.outdir, cfg.thresholds())
    print('%s: %d daily logs' % (args.outdir, len(scenario.logs)))
    if not args.run:
        return 0
    cfg.update({'inputs': scenario.logs,
                'outdir': os.path.join(args.outdir, 'run'),
                'ground_truth': scenario.ground_truth}).validate()
    with Pipeline(cfg) as ppl:
        ppl.run()
    result = score(ppl.partitions, ppl.tracker.reports, scenario.expected)
    rows = [(kind, prec, rec, sup)
            for kind, (prec, rec, sup) in sorted(result.kinds.items())]
    print(pd.DataFrame(rows, columns=['kind', 'precision', 'recall',
                                      'support']).to_string(index=False))
    print('novelty accuracy %.3f, purity %.3f (min %.3f)' % (
        result.novelty_accuracy, result.purity, result.min_purity))
    return 0


def cmd_config(args):
    '''print the effective configuration'''
    cfg = _config(args)
    print(yaml.safe_dump(cfg.as_dict(), default_flow_style=False,
                         sort_keys=False), end='')
    return 0


def build_parser():
    '''(ArgumentParser) the darktrack command line'''
    parser = ArgumentParser(
        prog='darktrack',
        description='Track coordinated senders seen by a network telescope.')
    parser.add_argument('--version', action='version',
                        version='%(prog)s ' + __version__)
    parser.add_argument('-v', '--verbose', action='count', default=0,
                        help='-v for progress, -vv for debugging')
    sub = parser.add_subparsers(dest='command', metavar='command')
    sub.required = True

    for name, func, doc in (('run', cmd_run, 'full pipeline'),
                            ('embed', cmd_embed, 'embeddings only'),
                            ('cluster', cmd_cluster, 'up to clustering')):
        cmd = sub.add_parser(name, help=doc)
        cmd.add_argument('inputs', nargs='*', help='daily packet logs')
        _settings(cmd)
        cmd.set_defaults(func=func)
        if name == 'run':
            cmd.add_argument('--raster', action='append', type=_day_cluster,
                             metavar='DAY:CLUSTER',
                             help='activity raster of a cluster')
        if name == 'embed':
            cmd.add_argument('--dump-corpus', action='store_true',
                             help='also write the daily corpora')

    cmd = sub.add_parser('report', help='reports from imported partitions')
    cmd.add_argument('inputs', nargs='*', help='daily packet logs')
    cmd.add_argument('-p', '--partitions', help='partition snapshot CSV, '
                     'clustered from the logs if not given')
    cmd.add_argument('--raster', action='append', type=_day_cluster,
                     metavar='DAY:CLUSTER',
                     help='activity raster of a cluster')
    _settings(cmd)
    cmd.set_defaults(func=cmd_report)

    cmd = sub.add_parser('track', help='track a partition snapshot')
    cmd.add_argument('snapshot', help='day,sender,cluster CSV')
    _settings(cmd)
    cmd.set_defaults(func=cmd_track)

    cmd = sub.add_parser('ingest-stats', help='traffic characterization')
    cmd.add_argument('inputs', nargs='*', help='daily packet logs')
    cmd.add_argument('--all-senders', action='store_true',
                     help='count every sender, not only the active ones')
    _settings(cmd)
    cmd.set_defaults(func=cmd_ingest_stats)

    cmd = sub.add_parser('fetch', help='copy logs from the sensor archive')
    cmd.add_argument('host')
    cmd.add_argument('remotedir')
    cmd.add_argument('localdir')
    cmd.add_argument('-u', '--username')
    cmd.add_argument('--password')
    cmd.add_argument('-i', '--private-key')
    cmd.add_argument('--port', type=int, default=22)
    cmd.add_argument('--since', type=date.fromisoformat, metavar='DAY')
    cmd.add_argument('--until', type=date.fromisoformat, metavar='DAY')
    cmd.add_argument('--preserve-mtime', action='store_true')
    cmd.add_argument('--compression', action='store_true')
    cmd.add_argument('--log', nargs='?', const=True)
    cmd.set_defaults(func=cmd_fetch)

    cmd = sub.add_parser('synth', help='synthetic scenario')
    cmd.add_argument('outdir')
    cmd.add_argument('-s', '--scenario', help='YAML scenario, the 7-day '
                     'acceptance scenario if not given')
    cmd.add_argument('--seed', type=int)
    cmd.add_argument('-c', '--config', help='YAML run configuration used '
                     'by --run')
    cmd.add_argument('--run', action='store_true',
                     help='run the pipeline on it and score the result')
    cmd.set_defaults(func=cmd_synth)

    cmd = sub.add_parser('config', help='print the effective configuration')
    cmd.add_argument('inputs', nargs='*', help='daily packet logs')
    _settings(cmd)
    cmd.set_defaults(func=cmd_config)
    return parser


def exit_status(err):
    '''(int|None) the exit status for an error, None if unexpected'''
    if isinstance(err, StageException):
        err = err.cause
    if isinstance(err, ConfigException):
        return EXIT_CONFIG
    if isinstance(err, (ContractException, LineageAssertion)):
        return EXIT_INTERNAL
    if isinstance(err, (InputException, GroundTruthException,
                        ScenarioException, ConnectionException,
                        CredentialException, OSError)):
        return EXIT_INPUT
    return None


def main(argv=None):
    '''entry point of the ``darktrack`` command

    :param list argv: *Default: None* - the arguments, ``sys.argv[1:]`` if
        None

    :returns: (int) the exit status
    '''
    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose,
                                                      logging.DEBUG)
    handler = logging.StreamHandler(sys.stderr)
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter('%(levelname)s %(name)s: '
                                           '%(message)s'))
    lgr = logging.getLogger('darktrack')
    previous = lgr.level
    lgr.addHandler(handler)
    lgr.setLevel(level)
    try:
        return args.func(args)
    except Exception as err:
        status = exit_status(err)
        if status is None:
            log.exception('unexpected failure')
            status = EXIT_INTERNAL
        sys.stderr.write('darktrack: error: %s\n' %
                         getattr(err, 'message', err))
        return status
    finally:
        lgr.removeHandler(handler)
        lgr.setLevel(previous)


if __name__ == '__main__':
    sys.exit(main())
