"""Diamond slab construction, chain indexing, and species assignment."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shuttlesim.device import AlloySpec
from shuttlesim.errors import ConfigError
from shuttlesim.lattice import (
    GE,
    SI,
    assign_species,
    build_lattice,
    chain_positions_x,
    layer_ge_fraction,
    quantize_interface,
    build_lattice as _bl,
)
from shuttlesim.roughness import step_surface

A0 = 5.43
PZ = A0 / 4.0


@pytest.fixture(scope="module")
def slab():
    return build_lattice(8, 2, 24)


class TestGeometry:
    def test_atom_count(self, slab):
        assert slab.num_atoms == 8 * 8 * 2 * 24 // 4

    def test_site_rule_holds(self, slab):
        cx, cy, m = slab.cx, slab.cy, slab.m
        even = (cx % 2 == 0) & (cy % 2 == 0) & (m % 2 == 0)
        odd = (cx % 2 == 1) & (cy % 2 == 1) & (m % 2 == 1)
        s = (cx.astype(int) + cy + m) % 4
        assert ((even & (s == 0)) | (odd & (s == 3))).all()

    def test_coordination(self, slab):
        nb = (slab.bonds >= 0).sum(axis=1)
        interior = (slab.m > 0) & (slab.m < 23)
        assert (nb[interior] == 4).all()
        assert (nb[~interior] == 2).all()

    def test_bond_reciprocity(self, slab):
        idx = np.arange(slab.num_atoms)
        for slot in range(4):
            j = slab.bonds[:, slot]
            has = j >= 0
            back = (slab.bonds[j[has]] == idx[has, None]).any(axis=1)
            assert back.all()

    def test_bond_length_uniform(self, slab):
        lens = np.linalg.norm(slab.bond_ideal_vectors(), axis=2)
        np.testing.assert_allclose(lens, np.sqrt(3.0) * A0 / 4.0, rtol=1e-12)

    def test_bonds_cross_periodic_seam(self, slab):
        left = slab.cx == 0
        partners = slab.bonds[left]
        partners = partners[partners >= 0]
        assert (slab.cx[partners] == 4 * slab.n_cells_x - 1).any()

    def test_rejects_narrow_slab(self):
        with pytest.raises(ConfigError):
            build_lattice(4, 1, 24)


class TestChains:
    def test_full_coverage(self, slab):
        assert slab.num_chains * slab.n_layers == slab.num_atoms
        assert (slab.chain_atoms >= 0).all()
        flat = np.sort(slab.chain_atoms.ravel())
        np.testing.assert_array_equal(flat, np.arange(slab.num_atoms))

    def test_consecutive_layers_bonded(self, slab):
        lower = slab.chain_atoms[:, :-1].ravel()
        upper = slab.chain_atoms[:, 1:].ravel()
        linked = (slab.bonds[lower, 0] == upper) | (slab.bonds[lower, 1] == upper)
        assert linked.all()

    def test_closed_form_coordinates(self, slab):
        """(i, j, m) determines (cx, cy) without search."""
        X = 4 * slab.n_cells_x
        Y = 4 * slab.n_cells_y
        for ci in range(slab.num_chains):
            u = 2 * slab.chain_i[ci]
            w = 2 * slab.chain_j[ci]
            ms = np.arange(slab.n_layers)
            atoms = slab.chain_atoms[ci]
            np.testing.assert_array_equal(slab.cx[atoms], (u + ms) % X)
            np.testing.assert_array_equal(slab.cy[atoms], (w + ms % 2) % Y)

    def test_x_drift_one_quarter_per_layer(self, slab):
        X = 4 * slab.n_cells_x
        dcx = np.diff(slab.cx[slab.chain_atoms].astype(int), axis=1) % X
        assert (dcx == 1).all()

    def test_chain_x_positions_cover_cell(self, slab):
        xs = chain_positions_x(slab)
        assert xs.min() >= 0.0
        assert xs.max() < slab.period_x
        # chains are spaced half a cubic cell apart in x on average
        assert len(np.unique(np.round(xs, 6))) >= 2 * slab.n_cells_x


class TestInPlane:
    def test_same_layer_and_distance(self, slab):
        ip = slab.in_plane
        assert (ip >= 0).all()
        assert (slab.m[ip] == slab.m[:, None]).all()
        p = slab.positions()
        for slot in range(4):
            d = p[ip[:, slot]] - p
            # wrap displacements into the first image
            for ax, period in ((0, slab.period_x), (1, slab.period_y)):
                d[:, ax] -= period * np.round(d[:, ax] / period)
            np.testing.assert_allclose(np.linalg.norm(d, axis=1),
                                       A0 / np.sqrt(2.0), rtol=1e-12)

    def test_reciprocity(self, slab):
        ip = slab.in_plane
        idx = np.arange(slab.num_atoms)
        for slot in range(4):
            back = (ip[ip[:, slot]] == idx[:, None]).any(axis=1)
            assert back.all()


class TestQuantize:
    def test_plain_rounding(self):
        assert quantize_interface(2.6 * PZ, PZ, top=False) == 3
        assert quantize_interface(2.4 * PZ, PZ, top=False) == 2
        assert quantize_interface(2.6 * PZ, PZ, top=True) == 3
        assert quantize_interface(2.4 * PZ, PZ, top=True) == 2

    def test_ties_shrink_the_well(self):
        assert quantize_interface(2.5 * PZ, PZ, top=False) == 3
        assert quantize_interface(2.5 * PZ, PZ, top=True) == 2


class TestSpecies:
    def test_flat_interfaces_make_contiguous_well(self):
        lat = build_lattice(8, 2, 40)
        assign_species(lat, 14.0, 40.0, AlloySpec(ge_fraction=1.0, seed=3))
        frac = layer_ge_fraction(lat)
        well = np.where(frac == 0.0)[0]
        np.testing.assert_array_equal(well, np.arange(well[0], well[-1] + 1))
        barrier = np.where(frac == 1.0)[0]
        assert len(well) + len(barrier) == 40

    def test_alloy_fraction_near_nominal(self):
        lat = build_lattice(16, 2, 60)
        assign_species(lat, 14.0, 60.0, AlloySpec(ge_fraction=0.3, seed=3))
        barrier = lat.species[(lat.m < 10) | (lat.m > 45)]
        frac = (barrier == GE).mean()
        assert frac == pytest.approx(0.3, abs=0.03)

    def test_zero_fraction_all_silicon(self):
        lat = build_lattice(8, 2, 24)
        assign_species(lat, 8.0, 25.0, AlloySpec(ge_fraction=0.0, seed=3))
        assert (lat.species == SI).all()

    def test_species_deterministic_in_seed(self):
        a = build_lattice(8, 2, 24)
        b = build_lattice(8, 2, 24)
        assign_species(a, 8.0, 25.0, AlloySpec(ge_fraction=0.4, seed=9))
        assign_species(b, 8.0, 25.0, AlloySpec(ge_fraction=0.4, seed=9))
        np.testing.assert_array_equal(a.species, b.species)

    def test_monolayer_step_shifts_interface_once(self):
        lat = build_lattice(16, 2, 40)
        surf = step_surface(PZ, (256, 16),
                            (lat.period_x * 0.1, lat.period_y * 0.1),
                            x_step=lat.period_x * 0.05)
        assign_species(lat, 14.0, 40.0, AlloySpec(ge_fraction=1.0, seed=3),
                       top_surface=surf)
        # each chain holds one atom per layer, so the chain-wise top of the
        # Si block is the local interface layer
        in_well = (lat.species == SI)[lat.chain_atoms]
        tops = np.array([np.where(col)[0].max() for col in in_well])
        assert set(np.unique(tops)) == {tops.min(), tops.min() + 1}
        # along each row of chains the terrace level changes exactly twice
        # around the periodic x direction (one up edge, one wrap-down edge)
        for j in np.unique(lat.chain_j):
            sel = lat.chain_j == j
            order = np.argsort(lat.chain_i[sel])
            ring = tops[sel][order]
            changes = np.diff(np.concatenate([ring, ring[:1]]))
            assert (changes != 0).sum() == 2


class TestProperties:
    @settings(max_examples=10, deadline=None)
    @given(ncx=st.integers(2, 6), ncy=st.integers(2, 4),
           layers=st.integers(6, 20))
    def test_chain_contract_any_size(self, ncx, ncy, layers):
        lat = _bl(ncx, ncy, layers)
        assert lat.num_chains * lat.n_layers == lat.num_atoms
        assert (lat.chain_atoms >= 0).all()
        lower = lat.chain_atoms[:, :-1].ravel()
        upper = lat.chain_atoms[:, 1:].ravel()
        linked = (lat.bonds[lower, 0] == upper) | (lat.bonds[lower, 1] == upper)
        assert linked.all()
