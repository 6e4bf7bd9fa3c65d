import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssprollout.errors import InvalidModelError
from ssprollout.model import (DisturbanceSsp, KernelSsp, STOP, check_policy, check_value,
                              induce_kernel, unit_cost, validate)
from ssprollout.scenarios import random_disturbance_ssp, random_proper_ssp


def test_valid_model_has_empty_report(chain3):
    assert validate(chain3) == []


def test_row_sum_violation_names_pair():
    m = KernelSsp.from_rows(3, 2, [["a", "b"], ["a"], [STOP]],
                            [[[(2, 1.0)], [(1, 0.5), (2, 0.45)]], [[(2, 1.0)]]],
                            [[1.0, 1.0], [1.0]])
    v = validate(m)
    assert len(v) == 1
    assert (v[0].kind, v[0].state, v[0].action) == ("row_sum", 0, 1)


def test_negative_cost_violation():
    m = KernelSsp.from_rows(2, 1, [["a"], [STOP]], [[[(1, 1.0)]]], [[-0.1]])
    v = validate(m)
    assert [x.kind for x in v] == ["negative_cost"]
    assert (v[0].state, v[0].action) == (0, 0)


def test_terminal_must_be_absorbing():
    m = KernelSsp.from_rows(2, 1, [["a"], [STOP]], [[[(1, 1.0)]], [[(0, 1.0)]]], [[1.0], [0.0]])
    assert [x.kind for x in validate(m)] == ["terminal_not_absorbing"]
    m = KernelSsp.from_rows(2, 1, [["a"], [STOP]], [[[(1, 1.0)]], [[(1, 1.0)]]], [[1.0], [2.0]])
    assert [x.kind for x in validate(m)] == ["terminal_cost"]


def test_state_without_actions():
    m = KernelSsp.from_rows(3, 2, [["a"], [], [STOP]], [[[(2, 1.0)]], []], [[1.0], []])
    assert [x.kind for x in validate(m)] == ["no_actions"]


def test_out_of_range_successor_raises():
    with pytest.raises(InvalidModelError) as exc:
        KernelSsp.from_rows(2, 1, [["a"], [STOP]], [[[(5, 1.0)]]], [[1.0]])
    assert exc.value.violations[0].kind == "successor_out_of_range"


def test_rows_within_tolerance_are_renormalized():
    m = KernelSsp.from_rows(2, 1, [["a"], [STOP]], [[[(0, 0.5), (1, 0.5 + 5e-10)]]], [[1.0]])
    _, p = m.row(0, 0)
    assert validate(m) == []
    assert abs(p.sum() - 1.0) < 1e-15


def test_duplicate_successors_merge():
    m = KernelSsp.from_rows(2, 1, [["a"], [STOP]], [[[(1, 0.25), (0, 0.5), (1, 0.25)]]], [[1.0]])
    ys, ps = m.row(0, 0)
    assert ys.tolist() == [0, 1] and ps.tolist() == [0.5, 0.5]


def test_model_is_immutable(chain3):
    with pytest.raises(ValueError):
        chain3.cost[0] = 5.0
    with pytest.raises(Exception):
        chain3.terminal = 0


def _disturbance(successors, probs=(0.5, 0.5), nominal=0):
    return DisturbanceSsp.from_table(3, 2, [["a"], ["a"], [STOP]], [f"w{i}" for i in range(len(probs))],
                                     probs, nominal, successors, [[1.0], [1.0]])


def test_induce_kernel_deterministic_point_masses():
    d = DisturbanceSsp.from_table(3, 2, [["a"], ["a"], [STOP]], ["w"], [1.0], 0,
                                  [[[1]], [[2]]], [[1.0], [1.0]])
    k = induce_kernel(d)
    assert k.row(0, 0)[0].tolist() == [1] and k.row(0, 0)[1].tolist() == [1.0]
    assert k.row(1, 0)[0].tolist() == [2]


def test_induce_kernel_symmetric_split():
    k = induce_kernel(_disturbance([[[1, 2]], [[2, 2]]]))
    ys, ps = k.row(0, 0)
    assert ys.tolist() == [1, 2] and ps.tolist() == [0.5, 0.5]


def test_induce_kernel_merges_equal_successors():
    k = induce_kernel(_disturbance([[[1, 2]], [[2, 2]]]))
    ys, ps = k.row(1, 0)
    assert ys.tolist() == [2] and ps.tolist() == [1.0]


def test_disturbance_validation():
    d = _disturbance([[[1, 2]], [[2, 2]]], probs=(0.5, 0.4))
    assert [v.kind for v in validate(d)] == ["disturbance_probs"]
    d = _disturbance([[[1, 2]], [[2, 2]]], nominal=3)
    assert [v.kind for v in validate(d)] == ["nominal_out_of_range"]
    d = _disturbance([[[1, 7]], [[2, 2]]])
    assert [v.kind for v in validate(d)] == ["successor_out_of_range"]
    with pytest.raises(InvalidModelError):
        induce_kernel(d)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 12), a=st.integers(1, 4), w=st.integers(1, 4))
def test_induced_kernel_is_valid_and_rows_sum_to_q(seed, n, a, w):
    d = random_disturbance_ssp(n, a, w, seed=seed)
    k = induce_kernel(d)
    assert validate(k) == []
    sums = np.asarray(k.transition.sum(axis=1)).ravel()
    assert np.all(np.abs(sums - d.probs.sum()) <= 1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_unit_cost_preserves_rows_and_is_idempotent(seed):
    m = random_proper_ssp(7, 3, seed=seed)
    u = unit_cost(m)
    assert u.transition is m.transition or (u.transition != m.transition).nnz == 0
    assert np.array_equal(u.transition.data, m.transition.data)
    assert np.array_equal(u.transition.indices, m.transition.indices)
    expected = np.where(m.pair_state == m.terminal, 0.0, 1.0)
    assert np.array_equal(u.cost, expected)
    assert np.array_equal(unit_cost(u).cost, u.cost)


def test_unit_cost_on_disturbance_form():
    d = random_disturbance_ssp(5, 2, 3, seed=1)
    u = unit_cost(d)
    assert np.array_equal(u.successor, d.successor)
    assert u.cost[u.action_ptr[u.terminal]] == 0.0


def test_check_value_and_policy(chain3):
    with pytest.raises(ValueError):
        check_value([1, 2, 3, 1], chain3)
    with pytest.raises(ValueError):
        check_value([1, np.inf, 3, 0], chain3)
    assert check_value([3, 2, 1, 0], chain3).tolist() == [3, 2, 1, 0]
    with pytest.raises(ValueError):
        check_policy(np.array([0, 1, 0, 0]), chain3)
    assert check_policy(np.zeros(4, dtype=int), chain3).tolist() == [0, 0, 0, 0]


def test_digest_is_stable_and_content_sensitive():
    a = random_proper_ssp(6, 2, seed=3)
    b = random_proper_ssp(6, 2, seed=3)
    c = random_proper_ssp(6, 2, seed=4)
    assert a.digest() == b.digest() != c.digest()
