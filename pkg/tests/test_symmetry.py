import numpy as np
import pytest

from symmod.errors import InvalidParameter, PartitionMismatch
from symmod.lti import apply_similarity, assemble_group_grid, assemble_rl_example, make_model
from symmod.modal import pair_eigenvalues
from symmod.symmetry import (
    IDEAL,
    QUASI,
    build_transform,
    decompose,
    detect_groups,
)

from conftest import RL_PARAMS, random_stable_model, rl_two_by_two


def rl_branch(R, L, omega):
    return make_model([[-(R / L + 1j * omega)]], [[-1.0 / L]], [[1.0]], [[0.0]],
                      ("i_dq+",), ("v_dq+",), ("i_dq+",))


class TestDetectGroups:
    def test_identical_branches_form_ideal_group(self):
        subs = {f"rl{k}": rl_branch(1.0, 1.0, 0.0) for k in range(3)}
        part = detect_groups(subs)
        assert part.N == 1
        g = part.groups[0]
        assert g.M == 3 and g.symmetry_class == IDEAL
        assert g.deviation <= 1e-12

    def test_small_parameter_spread_is_quasi(self):
        subs = {
            "a": rl_branch(1.0, 1.0, 0.0),
            "b": rl_branch(1.0, 1.0, 0.0),
            "c": rl_branch(1.0, 1.02, 0.0),
        }
        part = detect_groups(subs, tol_quasi=0.05)
        assert part.N == 1
        g = part.groups[0]
        assert g.symmetry_class == QUASI
        assert 0 < g.deviation < 0.05

    def test_different_schema_splits_groups(self, rng):
        two_state = random_stable_model(rng, n=2, p=1, q=1)
        subs = {
            "rl1": rl_branch(1.0, 1.0, 0.0),
            "rl2": rl_branch(1.0, 1.0, 0.0),
            "d1": two_state,
            "d2": two_state,
        }
        part = detect_groups(subs)
        assert part.N == 2

    def test_large_deviation_splits(self):
        subs = {
            "a": rl_branch(1.0, 1.0, 0.0),
            "b": rl_branch(1.0, 10.0, 0.0),
        }
        part = detect_groups(subs, tol_quasi=0.05)
        assert part.N == 2

    def test_tolerance_validated(self):
        with pytest.raises(InvalidParameter):
            detect_groups({"a": rl_branch(1, 1, 0)}, tol_quasi=0.0)


class TestBuildTransform:
    def test_single_member_is_scaled_identity(self):
        t = build_transform(M=1, m=2, c=1.0)
        assert np.allclose(t.P, np.eye(2))

    def test_row_sums(self):
        t = build_transform(M=3, m=1, c=1.0 / 3.0)
        assert np.allclose(t.P.sum(axis=1), [0.0, 0.0, 1.0])

    def test_invertible(self):
        for M, m in [(1, 3), (2, 2), (5, 1), (4, 3)]:
            t = build_transform(M, m, c=0.7)
            assert np.linalg.cond(t.P) < 1e3

    def test_zero_c_rejected(self):
        with pytest.raises(InvalidParameter):
            build_transform(2, 1, c=0.0)

    def test_rl_group_block_diagonalizes(self):
        # transforming the 3x3 branch block must expose o - r twice
        R, L, R_L, omega = RL_PARAMS["R"], RL_PARAMS["L"], RL_PARAMS["R_L"], RL_PARAMS["omega"]
        o = -(R / L + R_L / L + 1j * omega)
        r = -R_L / L
        block = np.full((3, 3), r, dtype=complex)
        np.fill_diagonal(block, o)
        for c in (0.3, 1.0, 3.0):
            t = build_transform(3, 1, c)
            out = apply_similarity(make_model(block), t.P)
            assert np.allclose(out.A[:2, :2], (o - r) * np.eye(2), atol=1e-12)
            assert np.allclose(out.A[:2, 2], 0, atol=1e-12)
            assert np.isclose(o - r, -(R / L + 1j * omega))


class TestDecompose:
    def test_rl_example_blocks(self):
        sys = assemble_rl_example(**RL_PARAMS)
        part = detect_groups(sys.subsystems)
        dec = decompose(sys, part, c=1.0)
        lam = -(RL_PARAMS["R"] / RL_PARAMS["L"] + 1j * RL_PARAMS["omega"])
        inner = dec.inner[0]
        assert inner.multiplicity == 2
        assert np.allclose(inner.spectrum(), [lam])
        assert np.allclose(dec.group_grid.A, rl_two_by_two(**RL_PARAMS), atol=1e-12)

    def test_c_invariance_of_group_grid_spectrum(self):
        sys = assemble_rl_example(**RL_PARAMS)
        part = detect_groups(sys.subsystems)
        ref = decompose(sys, part, c=1.0).group_grid.eigenvalues()
        norm = np.linalg.norm(sys.model.A)
        for c in (0.1, 10.0):
            other = decompose(sys, part, c=c).group_grid.eigenvalues()
            _, dist = pair_eigenvalues(ref, other)
            assert np.max(dist) <= 1e-9 * norm

    def test_partition_mismatch(self):
        sys = assemble_rl_example(**RL_PARAMS)
        part = detect_groups({"other": rl_branch(1, 1, 0)})
        with pytest.raises(PartitionMismatch):
            decompose(sys, part)

    def test_quasi_group_flagged_and_close(self):
        branches = {
            "a": rl_branch(1.0, 1.0, RL_PARAMS["omega"]),
            "b": rl_branch(1.0, 1.01, RL_PARAMS["omega"]),
            "c": rl_branch(1.0, 0.99, RL_PARAMS["omega"]),
        }
        grid = assemble_rl_example(**RL_PARAMS).grid
        sys = assemble_group_grid(branches, grid)
        part = detect_groups(branches, tol_quasi=0.05)
        dec = decompose(sys, part)
        assert dec.approximate
        _, dist = pair_eigenvalues(sys.model.eigenvalues(), dec.spectrum())
        # deviation is O(1%), so pairing distance is O(deviation * ||A||)
        assert np.max(dist) <= 0.05 * np.linalg.norm(sys.model.A)


class TestSpectrumPartition:
    def test_ideal_spectrum_partition_random_systems(self, rng):
        for _ in range(25):
            M = int(rng.integers(2, 7))
            m = int(rng.integers(1, 4))
            e = int(rng.integers(1, 4))
            sub = random_stable_model(rng, m, p=2, q=2, d_scale=0.05)
            grid = random_stable_model(rng, e, p=2, q=2, d_scale=0.05)
            subs = {f"s{k}": sub for k in range(M)}
            sys = assemble_group_grid(subs, grid)
            part = detect_groups(subs)
            dec = decompose(sys, part)
            _, dist = pair_eigenvalues(sys.model.eigenvalues(), dec.spectrum())
            assert np.max(dist) <= 1e-8 * np.linalg.norm(sys.model.A)

    def test_two_group_spectrum_partition(self, rng):
        sub1 = random_stable_model(rng, 2, p=1, q=1, d_scale=0.05)
        sub2 = random_stable_model(rng, 3, p=1, q=1, d_scale=0.05)
        grid = random_stable_model(rng, 2, p=1, q=1, d_scale=0.05)
        subs = {"a1": sub1, "a2": sub1, "a3": sub1, "b1": sub2, "b2": sub2}
        sys = assemble_group_grid(subs, grid)
        part = detect_groups(subs)
        assert part.N == 2
        dec = decompose(sys, part)
        assert dec.group_grid.n == 2 + 3 + 2
        _, dist = pair_eigenvalues(sys.model.eigenvalues(), dec.spectrum())
        assert np.max(dist) <= 1e-8 * np.linalg.norm(sys.model.A)

    def test_quasi_continuity(self, rng):
        base = random_stable_model(rng, 2, p=1, q=1, d_scale=0.0)
        grid = random_stable_model(rng, 2, p=1, q=1, d_scale=0.0)
        bump = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        bump *= np.linalg.norm(base.A) / np.linalg.norm(bump)

        def system(eps):
            subs = {
                "a": base,
                "b": make_model(base.A + eps * bump, base.B, base.C, base.D,
                                base.state_labels, base.input_labels, base.output_labels),
                "c": base,
            }
            sys = assemble_group_grid(subs, grid)
            part = detect_groups(subs, tol_quasi=0.5)
            dec = decompose(sys, part)
            _, dist = pair_eigenvalues(sys.model.eigenvalues(), dec.spectrum())
            return np.max(dist)

        d = [system(eps) for eps in (1e-2, 1e-3, 1e-4)]
        assert d[0] >= d[1] - 1e-10
        assert d[1] >= d[2] - 1e-10
        assert d[2] <= d[0]
