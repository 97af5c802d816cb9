import numpy as np
import pytest

from msvar.softseg import MsConfig, SoftSegmentation, ms_loss
from msvar.supervision import CombinedLossConfig, combined_loss, cross_entropy

from oracles import cross_entropy_loop


def random_case(seed, n=3, h=5, w=5):
    rng = np.random.default_rng(seed)
    x = rng.random((h, w, 1))
    seg = SoftSegmentation.from_logits(rng.uniform(-2, 2, (n, h, w)))
    labels = rng.integers(0, n, (h, w))
    return x, seg, labels


def test_ce_one_hot_correct_is_tiny():
    rng = np.random.default_rng(0)
    labels = rng.integers(0, 3, (6, 6))
    z = np.zeros((3, 6, 6))
    for n in range(3):
        z[n][labels == n] = 30.0
    seg = SoftSegmentation.from_logits(z)
    assert cross_entropy(seg, labels) < 1e-9


def test_ce_uniform_memberships_give_log_n():
    for n in (2, 3, 5):
        seg = SoftSegmentation.from_logits(np.zeros((n, 4, 4)))
        labels = np.random.default_rng(n).integers(0, n, (4, 4))
        assert cross_entropy(seg, labels) == pytest.approx(np.log(n), abs=1e-9)


def test_ce_matches_loop_oracle():
    _, seg, labels = random_case(1)
    assert cross_entropy(seg, labels) == pytest.approx(
        cross_entropy_loop(seg.memberships, labels), abs=1e-9
    )


def test_ce_ignore_index_excluded():
    _, seg, labels = random_case(2)
    labels = labels.copy()
    labels[0, :] = 255
    got = cross_entropy(seg, labels)
    assert got == pytest.approx(cross_entropy_loop(seg.memberships, labels), abs=1e-12)


def test_ce_explicit_ignore_mask():
    _, seg, labels = random_case(3)
    ignore = np.zeros(labels.shape, dtype=bool)
    ignore[:, 0] = True
    masked = labels.copy()
    masked[:, 0] = 255
    assert cross_entropy(seg, labels, ignore=ignore) == pytest.approx(
        cross_entropy(seg, masked), abs=1e-12
    )


def test_ce_permutation_consistency():
    _, seg, labels = random_case(4)
    perm = np.array([2, 0, 1])
    seg_p = SoftSegmentation.from_logits(seg.logits[perm])
    labels_p = np.argsort(perm)[labels]
    assert cross_entropy(seg_p, labels_p) == pytest.approx(cross_entropy(seg, labels), abs=1e-12)


def test_ce_validates_inputs():
    _, seg, labels = random_case(5)
    with pytest.raises(ValueError):
        cross_entropy(seg, labels[:3])
    with pytest.raises(ValueError):
        cross_entropy(seg, np.full_like(labels, 9))
    with pytest.raises(ValueError):
        cross_entropy(seg, np.full_like(labels, 255))


def test_combined_labeled_gate():
    x, seg, labels = random_case(6)
    for beta in (0.0, 1e-7, 1e-6):
        cfg = CombinedLossConfig(beta=beta, labeled=True, ms=MsConfig(num_classes=3))
        total, ce, ms = combined_loss(x, seg, labels, cfg)
        assert total == ce + beta * ms
        assert ce == pytest.approx(cross_entropy(seg, labels), abs=1e-15)
        assert ms == pytest.approx(ms_loss(x, seg, cfg.ms)[0], abs=1e-15)


def test_combined_unlabeled_gate():
    x, seg, _ = random_case(7)
    cfg = CombinedLossConfig(beta=1e-7, labeled=False, ms=MsConfig(num_classes=3))
    total, ce, ms = combined_loss(x, seg, None, cfg)
    assert ce == 0.0
    assert total == 1e-7 * ms


def test_combined_beta_zero_reduces_to_ce():
    x, seg, labels = random_case(8)
    cfg = CombinedLossConfig(beta=0.0, labeled=True, ms=MsConfig(num_classes=3))
    total, ce, _ = combined_loss(x, seg, labels, cfg)
    assert total == pytest.approx(ce, abs=1e-12)


def test_combined_linear_in_beta():
    x, seg, labels = random_case(9)
    b1, b2 = 2e-7, 5e-6
    cfg1 = CombinedLossConfig(beta=b1, labeled=True, ms=MsConfig(num_classes=3))
    cfg2 = CombinedLossConfig(beta=b2, labeled=True, ms=MsConfig(num_classes=3))
    t1, ce, ms = combined_loss(x, seg, labels, cfg1)
    t2, _, _ = combined_loss(x, seg, labels, cfg2)
    assert t1 + t2 - 2 * ce == pytest.approx((b1 + b2) * ms, abs=1e-9)


def test_combined_requires_labels_when_labeled():
    x, seg, _ = random_case(10)
    cfg = CombinedLossConfig(labeled=True, ms=MsConfig(num_classes=3))
    with pytest.raises(ValueError):
        combined_loss(x, seg, None, cfg)


def test_combined_rejects_negative_beta():
    x, seg, labels = random_case(11)
    cfg = CombinedLossConfig(beta=-1.0, labeled=True, ms=MsConfig(num_classes=3))
    with pytest.raises(ValueError):
        combined_loss(x, seg, labels, cfg)
