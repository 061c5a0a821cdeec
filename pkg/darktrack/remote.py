"""Fetch daily packet logs from the sensor's log archive over SFTP."""
from datetime import date
import logging
import os
import posixpath
import re
import socket
from stat import S_ISDIR, S_ISREG
import tempfile

import paramiko
from paramiko import AgentKey

from darktrack.exceptions import ConnectionException, CredentialException

log = logging.getLogger(__name__)

LOG_NAME = re.compile(r'(\d{4}-\d{2}-\d{2}).*\.csv(\.gz)?$')
# key types tried, in order, for a private key file
KEY_TYPES = ('RSAKey', 'ECDSAKey', 'Ed25519Key')


class ArchiveOpts(object):
    '''additional connection options beyond authentication

    :ivar bool|str log: initial value: False -
        log connection/handshake details? If set to True,
        darktrack creates a temporary file and logs to that.  If set to a
        valid path and filename, darktrack logs to that.  The name of the
        logfile can be found at  ``.logfile``
    :ivar bool compression: initial value: False - Enables compression on the
        transport, the daily logs compress well
    :ivar paramiko.PKey|None hostkey: initial value: None - the expected host
        key of the archive, not verified if None
    '''
    def __init__(self):
        self.log = False
        self.compression = False
        self.hostkey = None


def log_date(filename):
    '''(datetime.date|None) the day a log file name carries, None if it is not
    a ``YYYY-MM-DD*.csv[.gz]`` name'''
    match = LOG_NAME.search(posixpath.basename(filename))
    if match is None:
        return None
    try:
        return date.fromisoformat(match.group(1))
    except ValueError:
        return None


class SensorArchive(object):
    """Connection to the host keeping the telescope's daily packet logs.

    The archive is read only: darktrack lists the dated logs below a
    directory and copies the ones of a window of days.

    :param str host: hostname or IP of the archive
    :param str|None username: *Default: None* - ``$LOGNAME`` if None
    :param str|None password: *Default: None* - preferred over keys if given
    :param str|obj|None private_key: *Default: None* - path to a private key
        file or a paramiko key, the first default key in ~/.ssh if None
    :param str|None private_key_pass: *Default: None* - passphrase of an
        encrypted key file
    :param int port: *Default: 22*
    :param None|ArchiveOpts archive_opts: *Default: None* - extra connection
        options

    :raises ConnectionException: if the host cannot be reached
    :raises CredentialException: without a username or any credential
    :raises paramiko.AuthenticationException: if the archive refuses them
    """

    def __init__(self, host, username=None, password=None, private_key=None,
                 private_key_pass=None, port=22, archive_opts=None):
        self._opts = archive_opts or ArchiveOpts()
        self._transport = None
        self._sftp = None
        self._username = username or os.environ.get('LOGNAME')
        if not self._username:
            raise CredentialException('No username specified.')
        self._logfile = self._start_log(self._opts.log)
        try:
            self._transport = paramiko.Transport((host, port))
        except (AttributeError, socket.gaierror, OSError):
            self.close()
            raise ConnectionException(host, port)
        self._transport.use_compression(self._opts.compression)
        if password is not None:
            auth = {'password': password}
        else:
            auth = {'pkey': self._private_key(private_key, private_key_pass)}
        try:
            self._transport.connect(hostkey=self._opts.hostkey,
                                    username=self._username, **auth)
        except Exception:
            self.close()
            raise
        log.info('connected to %s:%s as %s', host, port, self._username)

    @staticmethod
    def _start_log(setting):
        '''send paramiko's log to a file, a temporary one for True'''
        if not setting:
            return False
        path = setting
        if isinstance(setting, bool):
            fhnd, path = tempfile.mkstemp('.txt', 'darktrack-ssh-')
            os.close(fhnd)
        paramiko.util.log_to_file(path)
        return path

    @staticmethod
    def _private_key(private_key, private_key_pass):
        if not private_key:
            for name in ('id_rsa', 'id_ecdsa', 'id_ed25519'):
                if os.path.exists(os.path.expanduser('~/.ssh/%s' % name)):
                    private_key = '~/.ssh/%s' % name
                    break
            else:
                raise CredentialException('No password or key specified.')
        if isinstance(private_key, (AgentKey, paramiko.PKey)):
            return private_key
        key_file = os.path.expanduser(private_key)
        for name in KEY_TYPES:
            try:
                return getattr(paramiko, name).from_private_key_file(
                    key_file, private_key_pass)
            except paramiko.SSHException:
                continue
        raise CredentialException('Unsupported key in %s' % private_key)

    @property
    def sftp(self):
        '''(paramiko.SFTPClient) the session, opened on first use'''
        if self._sftp is None:
            self._sftp = paramiko.SFTPClient.from_transport(self._transport)
        return self._sftp

    def walk(self, remotedir='.'):
        '''the regular files below remotedir, depth first, entries of a
        directory in name order

        :param str remotedir: *Default: '.'* - the session's start directory
            for '.'

        :returns: (generator) of (remote path, paramiko.SFTPAttributes)
        '''
        entries = sorted(self.sftp.listdir_attr(remotedir),
                         key=lambda attrs: attrs.filename)
        for attrs in entries:
            pathname = posixpath.join(remotedir, attrs.filename)
            if S_ISDIR(attrs.st_mode):
                yield from self.walk(pathname)
            elif S_ISREG(attrs.st_mode):
                yield pathname, attrs
            else:
                log.debug('%s: not a regular file, skipped', pathname)

    def _logs(self, remotedir, since, until):
        found = []
        for pathname, attrs in self.walk(remotedir):
            day = log_date(pathname)
            if day is None:
                log.debug('%s: not a log file, skipped', pathname)
            elif (since is None or day >= since) and \
                    (until is None or day <= until):
                found.append((day, pathname, attrs))
        found.sort(key=lambda item: item[:2])
        return found

    def list_logs(self, remotedir='.', since=None, until=None):
        '''the daily packet logs below remotedir

        :param str remotedir: *Default: '.'* - searched recursively
        :param datetime.date|None since: *Default: None* - first day kept
        :param datetime.date|None until: *Default: None* - last day kept

        :returns: (list of str) remote paths, sorted by day then path
        '''
        return [pathname for _, pathname, _ in
                self._logs(remotedir, since, until)]

    def fetch_logs(self, remotedir, localdir, since=None, until=None,
                   preserve_mtime=False):
        """copy the daily logs below remotedir into localdir, flat.  A local
        file with the same name and size is not fetched again.

        :param str remotedir: the remote directory searched
        :param str localdir: the local directory, created if needed
        :param datetime.date|None since: *Default: None*
        :param datetime.date|None until: *Default: None*
        :param bool preserve_mtime: *Default: False* - give the local copies
            the remote access and modification times

        :returns: (list of str) the local paths, in day order
        """
        os.makedirs(localdir, exist_ok=True)
        out = []
        for _, remotepath, attrs in self._logs(remotedir, since, until):
            localpath = os.path.join(localdir, posixpath.basename(remotepath))
            if os.path.exists(localpath) and \
                    os.path.getsize(localpath) == attrs.st_size:
                log.debug('%s: up to date', localpath)
            else:
                self.sftp.get(remotepath, localpath)
                if preserve_mtime:
                    os.utime(localpath, (attrs.st_atime, attrs.st_mtime))
                log.info('fetched %s (%d bytes)', remotepath, attrs.st_size)
            out.append(localpath)
        return out

    @property
    def logfile(self):
        '''(str|bool) the file paramiko logs to, False if not logging'''
        return self._logfile

    def close(self):
        """end the session and the transport, drop paramiko's log handlers"""
        if self._sftp is not None:
            self._sftp.close()
            self._sftp = None
        if self._transport is not None:
            self._transport.close()
            self._transport = None
        if self._logfile:
            # handlers otherwise stay open until the interpreter exits
            logging.getLogger('paramiko').handlers = []

    def __enter__(self):
        return self

    def __exit__(self, etype, value, traceback):
        self.close()
