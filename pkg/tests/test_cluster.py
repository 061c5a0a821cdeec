'''test darktrack.cluster - uses py.test'''
import numpy as np
import pytest
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform
from sklearn.cluster import HDBSCAN

from common import DAY0, blobs, day, part
from darktrack.cluster import (NOISE, Partition, cluster_embeddings, hdbscan,
                               hdbscan_labels, load_partitions,
                               pairwise_cosine_matrix, save_partitions,
                               silhouette)
from darktrack.embed import cosine_distance
from darktrack.exceptions import (ConfigException, ContractException,
                                  InputException, UndefinedDistanceException)

E0 = np.eye(8)[0]
E1 = np.eye(8)[1]


def _matrix(points):
    '''cosine matrix of an array of points, row numbers as senders'''
    return pairwise_cosine_matrix(dict(enumerate(points)),
                                  list(range(len(points))))


def _isolated():
    '''5 points far from the E0 and E1 blobs and from each other's core'''
    out = []
    for num in range(5):
        vec = -E0 - E1
        vec[2 + num] = 2.0
        out.append(vec)
    return np.array(out)


def _as_sets(labels):
    '''the clusters of a label vector as a set of frozensets'''
    groups = {}
    for point, lab in enumerate(labels):
        groups.setdefault(int(lab), set()).add(point)
    return {frozenset(members) for lab, members in groups.items()
            if lab != NOISE}


def _groups(rng, sizes, tight=0.01, gap=0.5):
    '''distance matrix of groups with one equal distance inside and random
    distances above the gap across, rows shuffled'''
    size = sum(sizes)
    upper = np.triu(rng.uniform(gap, 1.5, size=(size, size)), 1)
    dist = upper + upper.T
    start = 0
    for width in sizes:
        dist[start:start + width, start:start + width] = tight
        start += width
    np.fill_diagonal(dist, 0.0)
    perm = rng.permutation(size)
    return dist[np.ix_(perm, perm)]


def test_matrix_single():
    '''one sender gives a 1x1 zero matrix'''
    assert pairwise_cosine_matrix({'a': [1.0, 2.0]}).tolist() == [[0.0]]


def test_matrix_empty():
    '''no senders, 0x0 matrix'''
    assert pairwise_cosine_matrix({}).shape == (0, 0)


def test_matrix_identical():
    '''two identical vectors are at distance 0'''
    dist = pairwise_cosine_matrix({'a': [1.0, 2.0], 'b': [1.0, 2.0]})
    assert dist[0, 1] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize('chunked, workers', [(False, 1), (True, 1),
                                              (False, 2)])
def test_matrix_matches_scalar(chunked, workers):
    '''every entry equals the scalar cosine distance'''
    rng = np.random.default_rng(8)
    vectors = {'s%d' % num: rng.normal(size=12) for num in range(10)}
    senders = sorted(vectors)
    dist = pairwise_cosine_matrix(vectors, senders, workers, chunked)
    assert np.array_equal(dist, dist.T)
    for row, left in enumerate(senders):
        assert dist[row, row] == 0.0
        for col, right in enumerate(senders):
            if row != col:
                assert abs(dist[row, col] - cosine_distance(
                    vectors[left], vectors[right])) < 1e-12


def test_matrix_zero_vector():
    '''a zero vector is reported by sender'''
    with pytest.raises(UndefinedDistanceException) as err:
        pairwise_cosine_matrix({'a': [1.0, 0.0], 'b': [0.0, 0.0]})
    assert err.value.sender == 'b'


def test_hdbscan_two_blobs():
    '''two separated blobs of 20 give 2 clusters and no noise'''
    points = blobs(np.random.default_rng(0), [E0, E1])
    labels = hdbscan_labels(_matrix(points), 10)
    assert sorted(set(labels.tolist())) == [0, 1]
    assert len(set(labels[:20].tolist())) == 1
    assert labels[0] == 0


def test_hdbscan_isolated_noise():
    '''scattered points land in the noise cluster'''
    points = np.vstack([blobs(np.random.default_rng(1), [E0, E1]),
                        _isolated()])
    prt = hdbscan(_matrix(points), 10)
    assert len(prt) == 2
    assert prt.noise == frozenset(range(40, 45))


def test_hdbscan_too_few():
    '''5 points with min_cluster_size 10 are all noise and flagged'''
    points = blobs(np.random.default_rng(2), [E0], size=5)
    prt = hdbscan(_matrix(points), 10, day=DAY0)
    assert len(prt) == 0
    assert len(prt.noise) == 5
    assert 'too-few-points' in prt.flags


def test_hdbscan_bad_size():
    '''min_cluster_size below 2 is a configuration error'''
    with pytest.raises(ConfigException):
        hdbscan(np.zeros((3, 3)), 1)


def test_hdbscan_complete_and_disjoint():
    '''every sender appears exactly once, clusters are big enough'''
    rng = np.random.default_rng(3)
    points = np.vstack([blobs(rng, [E0, E1, -E0], size=15, spread=0.05),
                        rng.normal(size=(10, 8))])
    senders = ['s%d' % num for num in range(len(points))]
    prt = hdbscan(_matrix(points), 10, senders)
    assert prt.senders == frozenset(senders)
    assert sum(len(prt.members(idx)) for idx in prt.indices) + \
        len(prt.noise) == len(senders)
    assert all(len(prt.members(idx)) >= 10 for idx in prt.indices)


def test_hdbscan_permutation_invariant():
    '''shuffling the rows gives the same set of clusters'''
    rng = np.random.default_rng(4)
    points = np.vstack([blobs(rng, [E0, E1, -E1]), _isolated()])
    senders = list(range(len(points)))
    dist = _matrix(points)
    first = hdbscan(dist, 10, senders)
    perm = rng.permutation(len(points))
    second = hdbscan(dist[np.ix_(perm, perm)], 10, [senders[num]
                                                    for num in perm])
    assert first.as_sets() == second.as_sets()
    assert first.noise == second.noise


@pytest.mark.parametrize('seed, min_cluster_size', [
    (0, 5), (10, 5), (3, 10), (7, 4), (12, 2)])
def test_hdbscan_matches_scikit_learn(seed, min_cluster_size):
    '''labels agree with scikit-learn's HDBSCAN taking the point itself as
    one of its neighbours'''
    rng = np.random.default_rng(seed)
    points = np.vstack([blobs(rng, [E0, E1, -E0], size=12, spread=0.2),
                        rng.normal(size=(20, 8))])
    dist = _matrix(points)
    ref = HDBSCAN(min_cluster_size=min_cluster_size,
                  min_samples=min_cluster_size + 1,
                  metric='precomputed').fit(dist.copy()).labels_
    labels = hdbscan_labels(dist, min_cluster_size)
    assert _as_sets(labels) == _as_sets(ref)
    assert np.array_equal(labels == NOISE, ref == NOISE)


def test_hdbscan_keeps_distances():
    '''the distance matrix is left untouched'''
    points = blobs(np.random.default_rng(5), [E0, E1])
    dist = _matrix(points)
    before = dist.copy()
    hdbscan_labels(dist, 10)
    assert np.array_equal(dist, before)


@pytest.mark.parametrize('seed', range(6))
def test_hdbscan_single_linkage_reference(seed):
    '''with min_cluster_size 2 separated groups are the single linkage
    clusters cut inside the gap'''
    rng = np.random.default_rng(seed)
    sizes = rng.integers(3, 8, size=rng.integers(2, 6)).tolist()
    dist = _groups(rng, sizes)
    tree = linkage(squareform(dist, checks=False), method='single')
    expected = _as_sets(fcluster(tree, t=0.25, criterion='distance'))
    labels = hdbscan_labels(dist, 2)
    assert len(expected) == len(sizes)
    assert NOISE not in labels.tolist()
    assert _as_sets(labels) == expected


def test_cluster_embeddings_missing():
    '''active senders without a vector go to noise'''
    rng = np.random.default_rng(5)
    points = blobs(rng, [E0, E1], size=15)
    vectors = {'10.0.0.%d' % num: vec for num, vec in enumerate(points)}
    active = set(vectors) | {'10.0.1.1'}
    prt, dist, senders = cluster_embeddings(vectors, 8, DAY0, active)
    assert '10.0.1.1' in prt.noise
    assert 'missing-embeddings' in prt.flags
    assert len(senders) == 30
    assert dist.shape == (30, 30)
    assert len(prt) == 2


def test_silhouette_hand():
    '''4 points, 2 clusters, against the formula worked by hand'''
    dist = np.array([[0.0, 1, 4, 5],
                     [1, 0, 3, 4],
                     [4, 3, 0, 2],
                     [5, 4, 2, 0]])
    prt = part(DAY0, [['a', 'b'], ['c', 'd']])
    rep = silhouette(prt, dist, ['a', 'b', 'c', 'd'])
    expected = {'a': 7 / 9, 'b': 5 / 7, 'c': 3 / 7, 'd': 5 / 9}
    for snd, val in expected.items():
        assert abs(rep.values[snd] - val) < 1e-12
    assert rep.cluster_means[0] == pytest.approx((7 / 9 + 5 / 7) / 2)
    assert rep.defined


def test_silhouette_antipodal():
    '''tight antipodal blobs score above 0.9'''
    points = blobs(np.random.default_rng(6), [E0, -E0])
    dist = _matrix(points)
    prt = hdbscan(dist, 10)
    rep = silhouette(prt, dist)
    assert len(rep.cluster_means) == 2
    assert all(val > 0.9 for val in rep.cluster_means.values())


def test_silhouette_noise_ignored():
    '''noise senders get no score'''
    dist = np.array([[0.0, 1, 4, 5, 9],
                     [1, 0, 3, 4, 9],
                     [4, 3, 0, 2, 9],
                     [5, 4, 2, 0, 9],
                     [9, 9, 9, 9, 0]])
    prt = part(DAY0, [['a', 'b'], ['c', 'd']], noise=['n'])
    rep = silhouette(prt, dist, ['a', 'b', 'c', 'd', 'n'])
    assert 'n' not in rep.values
    assert abs(rep.values['a'] - 7 / 9) < 1e-12


def test_silhouette_undefined():
    '''one cluster only'''
    rep = silhouette(part(DAY0, [['a', 'b']]), np.zeros((2, 2)),
                     ['a', 'b'])
    assert not rep.defined
    assert rep.mean is None


def test_partition_contracts():
    '''overlapping or undersized clusters are refused'''
    with pytest.raises(ContractException):
        part(DAY0, [['a', 'b'], ['b', 'c']])
    with pytest.raises(ContractException):
        part(DAY0, [['a']], noise=['a'])
    with pytest.raises(ContractException):
        Partition(DAY0, {0: ['a', 'b']}, (), min_cluster_size=3)


def test_partition_lookup():
    '''assignments, cluster_of and members agree'''
    prt = part(DAY0, [['a', 'b'], ['c']], noise=['n'])
    assert prt.assignments() == {'a': 0, 'b': 0, 'c': 1, 'n': NOISE}
    assert prt.cluster_of('c') == 1
    assert prt.cluster_of('n') == NOISE
    assert prt.members(NOISE) == frozenset(['n'])
    with pytest.raises(KeyError):
        prt.cluster_of('x')


def test_snapshot_roundtrip(tmp_path):
    '''partitions read back equal'''
    parts = [part(DAY0, [['10.0.0.1', '10.0.0.2'], ['10.0.0.3']],
                  noise=['10.0.0.9']),
             part(day(1), [['10.0.0.2', '10.0.0.3']]),
             Partition.empty(day(2))]
    path = str(tmp_path / 'partitions.csv')
    save_partitions(parts, path)
    loaded = load_partitions(path)
    # an empty day leaves no rows
    assert loaded == parts[:2]
    with open(path) as hndl:
        assert hndl.readline() == 'day,sender,cluster\n'
        assert hndl.readline() == '2021-06-01,10.0.0.1,0\n'


def test_snapshot_duplicate(tmp_path):
    '''a sender twice on one day is rejected'''
    path = tmp_path / 'partitions.csv'
    path.write_text('day,sender,cluster\n2021-06-01,a,0\n2021-06-01,a,1\n')
    with pytest.raises(InputException):
        load_partitions(str(path))


def test_snapshot_bad_rows(tmp_path):
    '''bad header or fields are rejected'''
    path = tmp_path / 'partitions.csv'
    path.write_text('day,ip,cluster\n')
    with pytest.raises(InputException):
        load_partitions(str(path))
    path.write_text('day,sender,cluster\nyesterday,a,0\n')
    with pytest.raises(InputException):
        load_partitions(str(path))
